"""Error measures: L2,2 surrogate error, matched factor RMSE and the d_inf distance."""

from __future__ import annotations

import numpy as np

from tensamp.tensor_core import _raw, l22_norm


def l22_error(a, b, face_norm="spectral"):
    A, B = _raw(a), _raw(b)
    if A.shape != B.shape:
        raise ValueError(f"shape mismatch: {A.shape} vs {B.shape}")
    return l22_norm(A - B, face_norm=face_norm)


def match_factors(est, truth):
    """Greedy assignment of estimated columns to true columns by ``|<U_l, U*_j>|``.

    Returns ``(perm, signs)`` with ``perm[j]`` the estimated column matched to
    true column ``j`` and ``signs[j] = sign(<U_perm[j], U*_j>)``. Ties go to
    the lowest (true, estimated) index pair.
    """
    if est.rank != truth.rank:
        raise ValueError(f"rank mismatch: {est.rank} vs {truth.rank}")
    G = est.U.T @ truth.U  # G[l, j] = <U_l, U*_j>
    score = np.abs(G)
    r = truth.rank
    perm = np.full(r, -1)
    free_est = np.ones(r, dtype=bool)
    free_true = np.ones(r, dtype=bool)
    for _ in range(r):
        masked = np.where(free_est[:, None] & free_true[None, :], score, -np.inf)
        # row-major argmax over (l, j): lowest est index first, then lowest true index
        l, j = np.unravel_index(np.argmax(masked), masked.shape)
        perm[j] = l
        free_est[l] = False
        free_true[j] = False
    signs = np.where(G[perm, np.arange(r)] < 0, -1.0, 1.0)
    return perm, signs


def _aligned(est, truth, matching=None):
    perm, signs = match_factors(est, truth) if matching is None else matching
    return est.U[:, perm] * signs, est.sigma[perm]


def factor_rmse(est, truth, matching=None):
    U, _ = _aligned(est, truth, matching)
    n, r = truth.U.shape
    return float(np.sqrt(np.sum((U - truth.U) ** 2) / (n * r)))


def factor_errors(est, truth, matching=None):
    """Per-column ``||U_l - U*_l||`` after matching."""
    U, _ = _aligned(est, truth, matching)
    return np.linalg.norm(U - truth.U, axis=0)


def d_inf(est, truth, matching=None):
    """``max_l (||U_l - U*_l|| + |sigma_l - sigma*_l| / sigma*_l)`` after matching."""
    U, sigma = _aligned(est, truth, matching)
    col = np.linalg.norm(U - truth.U, axis=0)
    rel = np.abs(sigma - truth.sigma) / truth.sigma
    return float(np.max(col + rel))
