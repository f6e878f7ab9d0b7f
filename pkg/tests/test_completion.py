import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tensamp import metrics, synth
from tensamp.completion import (
    NumericalError,
    WalsConfig,
    default_sweeps,
    split_omega,
    threshold,
    wals,
    wals_step,
    weighted_residual,
)
from tensamp.sampling import SamplePlan, dist_from_factor_rows, sample_tensor
from tensamp.tensor_core import CpFactors, SampledTensor, cp_reconstruct

from conftest import full_samples, lstsq_column


def perturbed(f, eps, seed):
    rng = np.random.default_rng(seed)
    V = f.U + eps * rng.standard_normal(f.U.shape) / np.sqrt(f.n)
    return CpFactors(V / np.linalg.norm(V, axis=0), f.sigma * (1 + eps * rng.uniform(-1, 1, f.rank)))


def test_split_sizes_and_partition():
    idx = np.array(list(itertools.product(range(3), repeat=3)))[:13]
    s13 = SampledTensor(3, idx, np.ones(13), np.ones(13))
    parts = split_omega(s13.subset(np.arange(12)), 4, seed=0)
    assert sorted(len(p) for p in parts) == [3, 3, 3, 3]
    parts = split_omega(s13, 4, seed=1)
    assert sorted(len(p) for p in parts) == [3, 3, 3, 4]
    allrows = np.concatenate(parts)
    assert sorted(allrows.tolist()) == list(range(13))
    np.testing.assert_array_equal(np.concatenate(split_omega(s13, 4, seed=1)), allrows)
    with pytest.raises(ValueError):
        split_omega(s13, 14)


def test_step_matches_normal_equations_fully_observed():
    f = synth.gen_orthogonal_factors(6, 2, 0.5, seed=1, sigma=np.array([2.0, 1.0]))
    T = cp_reconstruct(f).entries
    init = perturbed(f, 0.3, 2)
    s = full_samples(T)
    for q in range(2):
        u_hat = lstsq_column(s, np.array(init.U), np.array(init.sigma), q)
        out = wals_step(s, init, q)
        np.testing.assert_allclose(out.sigma[q], np.linalg.norm(u_hat), atol=1e-10)
        np.testing.assert_allclose(out.U[:, q] * out.sigma[q], u_hat, atol=1e-10)


def test_step_matches_normal_equations_weighted():
    f = synth.gen_orthogonal_factors(8, 2, 0.0, seed=3, sigma=np.array([1.5, 1.0]))
    T = cp_reconstruct(f)
    s = sample_tensor(T, dist_from_factor_rows(f.row_norms()), SamplePlan(200, "bernoulli", 5))
    init = perturbed(f, 0.2, 4)
    u_hat = lstsq_column(s, np.array(init.U), np.array(init.sigma), 1)
    out = wals_step(s, init, 1)
    np.testing.assert_allclose(out.U[:, 1] * out.sigma[1], u_hat, atol=1e-10)


def test_rank_one_lands_exactly():
    u = np.array([0.6, 0.8, 0.0, 0.0])
    f = CpFactors(u[:, None], [2.0])
    init = CpFactors(np.array([[0.5], [0.5], [0.5], [0.5]]), [1.0])
    out = wals_step(full_samples(cp_reconstruct(f).entries), init, 0)
    np.testing.assert_allclose(out.U[:, 0] * out.sigma[0], 2.0 * u * (init.U[:, 0] @ u) ** 2, atol=1e-12)


def test_exact_factors_fixed_point():
    f = synth.gen_orthogonal_factors(7, 3, 0.5, seed=0, sigma=np.array([3.0, 2.0, 1.0]))
    s = full_samples(cp_reconstruct(f).entries)
    for q in range(3):
        out = wals_step(s, f, q)
        np.testing.assert_allclose(out.U, f.U, atol=1e-12)
        np.testing.assert_allclose(out.sigma, f.sigma, atol=1e-12)


def test_residual_nonincreasing_per_step():
    f = synth.gen_orthogonal_factors(10, 2, 0.5, seed=6)
    s = sample_tensor(cp_reconstruct(f), dist_from_factor_rows(f.row_norms()), SamplePlan(600, "bernoulli", 1))
    cur = perturbed(f, 0.3, 7)
    before = weighted_residual(s, cur)
    for q in (0, 1, 0, 1):
        # the column solve alone is exact LS; caps and renormalization are off
        cur = wals_step(s, cur, q)
        after = weighted_residual(s, cur)
        assert after <= before * (1 + 1e-12)
        before = after


def test_threshold_caps():
    U = np.array([[0.9, 0.1], [0.3, 0.7], [0.3, 0.7]])
    U = U / np.linalg.norm(U, axis=0)
    caps = np.array([0.5, 0.6, 1.0])
    clipped = np.clip(U, -caps[:, None], caps[:, None])
    assert np.all(np.abs(clipped) <= caps[:, None])
    out = threshold(U, caps)
    np.testing.assert_allclose(np.linalg.norm(out, axis=0), 1.0)
    np.testing.assert_allclose(out * np.linalg.norm(clipped, axis=0), clipped)
    with pytest.raises(NumericalError):
        threshold(np.array([[1.0], [0.0]]), np.array([0.0, 1.0]))


@given(st.integers(2, 8), st.integers(0, 2**31))
def test_threshold_property(n, seed):
    rng = np.random.default_rng(seed)
    U = rng.standard_normal((n, 2))
    caps = rng.uniform(0.2, 1.0, n)
    out = threshold(U, caps)
    clip_norm = np.linalg.norm(np.clip(U, -caps[:, None], caps[:, None]), axis=0)
    np.testing.assert_allclose(np.linalg.norm(out, axis=0), 1.0)
    assert np.all(np.abs(out) <= caps[:, None] / clip_norm + 1e-12)


def test_wals_matches_dense_als_oracle():
    f = synth.gen_orthogonal_factors(6, 2, 0.3, seed=8, sigma=np.array([2.0, 1.0]))
    T = cp_reconstruct(f).entries
    s = full_samples(T)
    init = perturbed(f, 0.2, 9)
    U, sig = np.array(init.U), np.array(init.sigma)
    for _ in range(3):
        for q in range(2):
            u_hat = lstsq_column(s, U, sig, q)
            sig[q] = np.linalg.norm(u_hat)
            U[:, q] = u_hat / sig[q]
    out = wals(s, WalsConfig(2, 3), init)
    np.testing.assert_allclose(out.factors.U, U, atol=1e-10)
    np.testing.assert_allclose(out.factors.sigma, sig, atol=1e-10)


def test_rank_one_exact_init_converges():
    f = synth.gen_orthogonal_factors(5, 1, 0.0, seed=1, sigma=np.array([1.3]))
    out = wals(full_samples(cp_reconstruct(f).entries), WalsConfig(1, 1), f)
    assert out.diagnostics[0]["residual"] < 1e-10


def test_contraction_fully_observed():
    f = synth.gen_orthogonal_factors(12, 2, 0.5, seed=2, sigma=np.array([2.0, 1.0]))
    s = full_samples(cp_reconstruct(f).entries)
    init = perturbed(f, 0.02, 3)
    d = [metrics.d_inf(init, f)]
    out = wals(s, WalsConfig(2, 8, row_caps=2 * f.row_norms()), init, truth=f)
    d += [x["d_inf"] for x in out.diagnostics]
    for a, b in zip(d, d[1:]):
        if a < 1e-6:
            break
        assert b <= 0.5 * a
    assert d[-1] < 1e-6


def test_fresh_samples_mode_runs_and_is_deterministic():
    f = synth.gen_orthogonal_factors(10, 2, 0.5, seed=4)
    s = sample_tensor(cp_reconstruct(f), dist_from_factor_rows(f.row_norms()), SamplePlan(900, "bernoulli", 2))
    init = perturbed(f, 0.05, 5)
    cfg = WalsConfig(2, 3, fresh_samples=True, row_caps=2 * f.row_norms(), seed=7)
    a = wals(s, cfg, init)
    b = wals(s, cfg, init)
    np.testing.assert_array_equal(a.factors.U, b.factors.U)
    assert len(a.diagnostics) == 3


def test_config_validation():
    with pytest.raises(ValueError):
        WalsConfig(0)
    with pytest.raises(ValueError):
        WalsConfig(1, b=0)
    with pytest.raises(ValueError):
        WalsConfig(1, row_caps=[-1.0])
    f = synth.gen_orthogonal_factors(5, 1, seed=0)
    with pytest.raises(ValueError):
        wals(full_samples(cp_reconstruct(f).entries), WalsConfig(2, 1), f)


def test_default_sweeps():
    f = synth.gen_orthogonal_factors(5, 2, seed=0)
    s = full_samples(cp_reconstruct(f).entries)
    fro = np.sqrt(2.0)
    assert default_sweeps(s, 2) == int(np.ceil(4 * np.sqrt(2) * np.log(fro / 1e-6)))
    assert default_sweeps(s, 2, epsilon=1e-300) == 200


def test_zero_column_raises_with_diagnostics():
    n = 3
    idx = np.array([[0, 0, 0]])
    s = SampledTensor(n, idx, [0.0], [1.0])
    f = CpFactors(np.eye(n)[:, :1], [1.0])
    with pytest.raises(NumericalError) as exc:
        wals(s, WalsConfig(1, 2), f)
    assert exc.value.diagnostics["column"] == 0
