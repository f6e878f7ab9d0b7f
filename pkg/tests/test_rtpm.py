import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tensamp import metrics, synth
from tensamp.rtpm import Deflated, DegenerateTensorError, power_extract, rtpm
from tensamp.sparsify import sparsify
from tensamp.tensor_core import CpFactors, DenseTensor3, cp_reconstruct, tvp


def orthogonal(n, r, seed):
    return np.linalg.qr(np.random.default_rng(seed).standard_normal((n, r)))[0]


def test_rank_one_fixed_point():
    u = orthogonal(8, 1, 0)[:, 0]
    f = CpFactors(u[:, None], [2.5])
    lam, v = power_extract(f, restarts=3, iters=5, seed=1)
    assert lam == pytest.approx(2.5, abs=1e-10)
    assert abs(abs(u @ v) - 1) < 1e-10


def test_negative_weight_flipped():
    # -2 u^{(x)3} == 2 (-u)^{(x)3}
    u = orthogonal(6, 1, 3)[:, 0]
    T = -2.0 * np.einsum("i,j,k->ijk", u, u, u)
    lam, v = power_extract(DenseTensor3(T, atol=1e-15), restarts=5, iters=20, seed=0)
    assert lam == pytest.approx(2.0, abs=1e-10)
    np.testing.assert_allclose(v, -u, atol=1e-10)


def test_top_of_rank_three():
    f = CpFactors(orthogonal(12, 3, 7), [3.0, 2.0, 1.0])
    lam, _ = power_extract(f, seed=2)
    assert lam == pytest.approx(3.0, abs=1e-8)


def test_zero_tensor_degenerate():
    with pytest.raises(DegenerateTensorError):
        power_extract(DenseTensor3(np.zeros((4, 4, 4))))
    f = CpFactors(orthogonal(5, 1, 0), [1.0])
    with pytest.raises(DegenerateTensorError):
        rtpm(f, 2, restarts=5, iters=30)
    with pytest.raises(ValueError):
        rtpm(f, 0)


def test_rank_two_recovered():
    U = orthogonal(10, 2, 11)
    f = CpFactors(U, [2.0, 1.0])
    est = rtpm(f, 2, seed=4)
    perm, signs = metrics.match_factors(est, f)
    cos = np.abs(np.sum(est.U[:, perm] * U, axis=0))
    assert np.all(np.arccos(np.minimum(cos, 1.0)) < 1e-8)


def test_rank_one_residual():
    f = CpFactors(orthogonal(7, 1, 2), [1.7])
    est = rtpm(f, 1, seed=0)
    resid = Deflated(f).push(est.sigma[0], est.U[:, 0])
    v = est.U[:, 0]
    assert np.linalg.norm(resid.tvp_many(v[:, None], v[:, None])) < 1e-10


@given(st.integers(3, 8), st.integers(0, 2**31))
def test_deflated_matches_dense(n, seed):
    rng = np.random.default_rng(seed)
    T = rng.standard_normal((n, n, n))
    T = (T + T.transpose(0, 2, 1) + T.transpose(1, 0, 2) + T.transpose(1, 2, 0)
         + T.transpose(2, 0, 1) + T.transpose(2, 1, 0)) / 6
    lam = rng.standard_normal(2)
    V = rng.standard_normal((n, 2))
    D = T - np.einsum("l,il,jl,kl->ijk", lam, V, V, V)
    A, B = rng.standard_normal((2, n, 3))
    got = Deflated(T).push(lam[0], V[:, 0]).push(lam[1], V[:, 1]).tvp_many(A, B)
    np.testing.assert_allclose(got, np.einsum("ijk,jl,kl->il", D, A, B), atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_exact_orthogonal_rank_three(seed):
    U = orthogonal(20, 3, 100 + seed)
    f = CpFactors(U, [3.0, 2.0, 1.0])
    est = rtpm(cp_reconstruct(f), 3, seed=seed)
    np.testing.assert_allclose(est.sigma, [3.0, 2.0, 1.0], atol=1e-8)
    assert metrics.d_inf(est, f) < 1e-8


def test_deterministic():
    f = CpFactors(orthogonal(9, 2, 5), [1.5, 1.0])
    a = rtpm(f, 2, seed=3)
    b = rtpm(f, 2, seed=3)
    np.testing.assert_array_equal(a.U, b.U)
    np.testing.assert_array_equal(a.sigma, b.sigma)


@pytest.mark.slow
def test_init_from_sparsified_moments():
    # p = 20 orthonormal sample vectors: T has orthogonal factors with unit weights.
    # At 20 n^1.5 samples the worst column error is 0.7-1.4, so the budget is 100 n^1.5.
    n, p = 50, 20
    m = int(np.ceil(100 * n**1.5))
    good = 0
    for seed in range(20):
        X = orthogonal(n, p, seed)
        f = CpFactors(X, np.ones(p))
        est = rtpm(sparsify(X, m, seed=seed), p, seed=seed)
        good += metrics.factor_errors(est, f).max() < 0.3
    assert good >= 18


def test_tvp_on_sparse_input_used():
    X = orthogonal(10, 2, 1)
    st_ = sparsify(X, 400, seed=0)
    est = rtpm(st_, 2, restarts=10, iters=30, seed=0)
    assert est.rank == 2 and np.all(est.sigma > 0)
    assert tvp(st_, est.U[:, 0], est.U[:, 0]).shape == (10,)


def test_synth_factors_feed_rtpm():
    f = synth.gen_orthogonal_factors(15, 2, 0.5, seed=2, sigma=np.array([2.0, 1.0]))
    est = rtpm(f, 2, seed=1)
    assert metrics.d_inf(est, f) < 1e-8
