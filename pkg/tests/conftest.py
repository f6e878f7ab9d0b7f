import itertools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from tensamp.tensor_core import SampledTensor

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def brute_tvp(T, u, v):
    """Triple-loop oracle for ``T(I, u, v)``."""
    n = T.shape[0]
    out = np.zeros(n)
    for i in range(n):
        for j in range(n):
            for k in range(n):
                out[i] += T[i, j, k] * u[j] * v[k]
    return out


def rank_one_sum(U, sigma):
    n = U.shape[0]
    T = np.zeros((n, n, n))
    for l in range(U.shape[1]):
        u = U[:, l]
        T += sigma[l] * u[:, None, None] * u[None, :, None] * u[None, None, :]
    return T


def full_samples(T):
    n = T.shape[0]
    idx = np.array(list(itertools.product(range(n), repeat=3)))
    return SampledTensor(n, idx, T[tuple(idx.T)], np.ones(len(idx)))


def lstsq_column(samples, U, sigma, q):
    """Normal-equation oracle: weighted LS for u in u (x) U_q (x) U_q over all samples."""
    n = samples.n
    i, j, k = samples.idx.T
    others = sum(sigma[l] * U[i, l] * U[j, l] * U[k, l] for l in range(U.shape[1]) if l != q)
    A = np.zeros((len(i), n))
    A[np.arange(len(i)), i] = U[j, q] * U[k, q]
    sw = np.sqrt(samples.weight)
    return np.linalg.lstsq(A * sw[:, None], (samples.values - others) * sw, rcond=None)[0]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance lines, printed once at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
