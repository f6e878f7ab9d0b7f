"""Synthetic inputs: biased sample matrices, biased orthogonal factors and the
block-diagonal counterexample tensor, plus exact expected sample counts."""

from __future__ import annotations

import math

import numpy as np

from tensamp.sampling import inclusion_probability
from tensamp.sparsify import SampleMatrix
from tensamp.tensor_core import CpFactors, DenseTensor3


def power_law_diagonal(n, a):
    """``D_ii = 1 / i^a`` with 1-based ``i``."""
    if a < 0:
        raise ValueError("bias exponent a must be nonnegative")
    return 1.0 / np.arange(1, n + 1, dtype=float) ** a


def gen_samples(n, p, a=0.0, seed=0):
    """``n x p`` Gaussian sample matrix with rows scaled by the power-law diagonal."""
    rng = np.random.default_rng([seed, 10])
    return SampleMatrix(power_law_diagonal(n, a)[:, None] * rng.standard_normal((n, p)))


def gen_orthogonal_factors(n, r, a=0.0, seed=0, sigma=None):
    """Top-``r`` left singular vectors of ``D X`` for an ``n x r`` Gaussian ``X``."""
    if not 1 <= r <= n:
        raise ValueError(f"need 1 <= r <= n, got r={r}, n={n}")
    rng = np.random.default_rng([seed, 11])
    U, _, _ = np.linalg.svd(power_law_diagonal(n, a)[:, None] * rng.standard_normal((n, r)), full_matrices=False)
    U = U / np.linalg.norm(U, axis=0)
    return CpFactors(U, np.ones(r) if sigma is None else sigma)


def block_size(n, log=math.log):
    return int(math.ceil(log(n)))


def claim_tensor(n, log=math.log):
    """Rank-2 block-diagonal all-ones tensor and its exact CP factors.

    The first block covers the first ``ceil(log n)`` indices. Weights are the
    block sizes to the power 3/2 so the factors reproduce the tensor exactly.
    """
    b = block_size(n, log)
    if n <= 2 * b:
        raise ValueError(f"n={n} too small for a {b}-index first block")
    u1 = np.zeros(n)
    u1[:b] = 1 / np.sqrt(b)
    u2 = np.zeros(n)
    u2[b:] = 1 / np.sqrt(n - b)
    T = np.zeros((n, n, n))
    T[:b, :b, :b] = 1.0
    T[b:, b:, b:] = 1.0
    f = CpFactors(np.column_stack([u1, u2]), np.array([b**1.5, (n - b) ** 1.5]))
    return DenseTensor3(T), f


def block_inclusion(dist, m, block, mode="bernoulli"):
    """Inclusion probabilities of every triple in ``block^3``, shape ``(|B|, |B|, |B|)``."""
    block = np.asarray(block, dtype=np.int64)
    sub = np.stack([dist.face(i)[np.ix_(block, block)] for i in block])
    return inclusion_probability(sub, m, mode)


def expected_block_counts(dist, m, block, mode="bernoulli"):
    """Expected number of sampled triples inside ``block^3`` (exhaustive sum)."""
    return float(block_inclusion(dist, m, block, mode).sum())
