"""Seeded experiment drivers for the sparsification, completion and noise sweeps.

Each driver expands its config into independent cells (one per seed and grid
point), evaluates them on a thread pool, and returns rows sorted by key, so
the emitted CSV does not depend on the thread count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields

import numpy as np

from tensamp import factorize as fz
from tensamp import metrics, sampling, synth
from tensamp.completion import NumericalError, WalsConfig, wals
from tensamp.rtpm import DEFAULT_ITERS, DEFAULT_RESTARTS, DegenerateTensorError, rtpm
from tensamp.sparsify import moment_tensor, sparsify
from tensamp.tensor_core import ConvergenceError, cp_reconstruct

REFERENCE_N = 100
SUCCESS_RMSE = 0.01
SUCCESS_RATE = 0.8
# a failed run counts as an unsuccessful recovery, not an aborted sweep
NUMERICAL_FAILURES = (ConvergenceError, DegenerateTensorError, NumericalError, np.linalg.LinAlgError)


class UsageError(ValueError):
    """Invalid experiment configuration."""


def resolve_threads(threads):
    if threads < 0:
        raise UsageError("--threads must be >= 0")
    return threads or os.cpu_count() or 1


def pmap(fn, items, threads=1):
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(threads) as ex:
        return list(ex.map(fn, items))


def _tuple(v):
    return tuple(v) if isinstance(v, (list, tuple)) else (v,)


class _Config:
    """Shared config plumbing: build from a parsed key=value dict, validate."""

    @classmethod
    def from_dict(cls, d):
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(d) - set(known))
        if unknown:
            raise UsageError(f"unknown config keys for {cls.__name__}: {', '.join(unknown)}")
        kw = {}
        for k, v in d.items():
            if isinstance(known[k].default, tuple):
                v = () if v == "" else _tuple(v)
            kw[k] = v
        cfg = cls(**kw)
        cfg.validate()
        return cfg

    def header(self, name):
        lines = [f"experiment={name}"]
        lines += [f"{k}={','.join(map(str, v)) if isinstance(v, tuple) else v}" for k, v in asdict(self).items()]
        if getattr(self, "n", REFERENCE_N) != REFERENCE_N:
            lines.append(f"deviation: n={self.n} instead of n={REFERENCE_N} for desk-scale runtime")
        return lines

    def _check_common(self):
        if not self.dists:
            raise UsageError("distribution set is empty")
        bad = [d for d in self.dists if d not in sampling.FAMILIES]
        if bad:
            raise UsageError(f"unknown distributions: {', '.join(bad)}")
        if self.seeds < 1:
            raise UsageError("seeds must be positive")


def _check_sparsify_opts(cfg):
    if cfg.face_norm not in ("spectral", "frobenius"):
        raise UsageError("face_norm must be spectral or frobenius")
    if cfg.mode not in ("auto", *sampling.MODES):
        raise UsageError(f"mode must be auto or one of {sampling.MODES}")
    if cfg.ls_power <= 0:
        raise UsageError("ls_power must be positive")


@dataclass
class Fig1Config(_Config):
    """Sparsification error as the budget grows. ``m`` overrides ``m_mult``
    (multiples of ``n^1.5``) when given."""

    n: int = 100
    p: int = 50
    a: float = 0.5
    dists: tuple = ("tensorls", "uniform", "l2", "suml3")
    m_mult: tuple = (2, 4, 8, 16, 32)
    m: tuple = ()
    seeds: int = 20
    seed0: int = 0
    ls_power: float = 1.5
    mode: str = "auto"
    face_norm: str = "spectral"

    def validate(self):
        self._check_common()
        if self.n < 2 or self.p < 1 or self.a < 0:
            raise UsageError("need n >= 2, p >= 1, a >= 0")
        if not self.grid() or min(self.grid()) <= 0:
            raise UsageError("m-grid must be a non-empty list of positive budgets")
        _check_sparsify_opts(self)

    def grid(self):
        if self.m:
            return tuple(int(v) for v in self.m)
        if any(c <= 0 for c in self.m_mult):
            return (0,)
        return tuple(int(math.ceil(c * self.n**1.5)) for c in self.m_mult)


@dataclass
class Fig2Config(_Config):
    """Sparsification error as the number of sample vectors grows at fixed budget."""

    n: int = 100
    p_grid: tuple = (10, 20, 50, 100, 200)
    a: float = 0.5
    dists: tuple = ("tensorls", "uniform", "l2", "suml3")
    m: int = 0  # 0: ceil(10 n^1.5)
    seeds: int = 20
    seed0: int = 0
    ls_power: float = 1.5
    mode: str = "auto"
    face_norm: str = "spectral"

    def validate(self):
        self._check_common()
        if self.n < 2 or self.a < 0 or self.m < 0:
            raise UsageError("need n >= 2, a >= 0, m >= 0")
        if not self.p_grid or min(self.p_grid) <= 0:
            raise UsageError("p_grid must be a non-empty list of positive integers")
        _check_sparsify_opts(self)

    def budget(self):
        return self.m or int(math.ceil(10 * self.n**1.5))


@dataclass
class Fig3aConfig(_Config):
    """Smallest budget reaching the success rate, by log-scale bisection on ``m``."""

    n: int = 50
    r: int = 5
    a_grid: tuple = (0.0, 0.5, 1.0, 1.5)
    dists: tuple = ("tensorls", "uniform", "l2")
    m_lo: int = 0  # 0: ceil(n^1.5)
    m_hi: int = 0  # 0: n^3
    rel_tol: float = 0.1
    seeds: int = 20
    seed0: int = 0
    b: int = 30
    rtpm_restarts: int = DEFAULT_RESTARTS
    rtpm_iters: int = DEFAULT_ITERS

    def validate(self):
        self._check_common()
        if not 1 <= self.r <= self.n:
            raise UsageError("need 1 <= r <= n")
        if self.m_lo < 0 or self.m_hi < 0 or (self.m_hi and self.m_hi <= self.m_lo):
            raise UsageError("budget bracket must be nonnegative with m_hi > m_lo")
        if not self.a_grid or min(self.a_grid) < 0:
            raise UsageError("a_grid must be a non-empty list of nonnegative exponents")
        if self.rel_tol <= 0:
            raise UsageError("rel_tol must be positive")

    def bracket(self):
        return self.m_lo or int(math.ceil(self.n**1.5)), self.m_hi or self.n**3


@dataclass
class Fig3bConfig(_Config):
    """Factor RMSE of two-pass factorization across a noise sweep."""

    n: int = 50
    r: int = 5
    a: float = 0.5
    noise_grid: tuple = (0.0, 0.0004, 0.002, 0.01, 0.05)
    dists: tuple = ("noisy", "uniform", "l2")
    m: int = 0  # 0: ceil(10 n^1.5 r)
    flatness: float = 3.0
    seeds: int = 20
    seed0: int = 0
    b: int = 30
    rtpm_restarts: int = DEFAULT_RESTARTS
    rtpm_iters: int = DEFAULT_ITERS

    def validate(self):
        self._check_common()
        bad = [d for d in self.dists if d not in fz.FACTORIZE_DISTS]
        if bad:
            raise UsageError(f"factorization supports {fz.FACTORIZE_DISTS}, got {', '.join(bad)}")
        if not 1 <= self.r <= self.n or self.m < 0:
            raise UsageError("need 1 <= r <= n and m >= 0")
        if not self.noise_grid or min(self.noise_grid) < 0:
            raise UsageError("noise_grid must be a non-empty list of nonnegative levels")

    def budget(self):
        return self.m or completion_budget(self.n, self.r)


def completion_budget(n, r):
    return int(math.ceil(10 * n**1.5 * r))


def _mode(mode):
    return None if mode in ("auto", None) else mode


# cells ---------------------------------------------------------------------

def sparsify_error(n, p, a, dist, m, seed, ls_power=1.5, mode=None, face_norm="spectral"):
    """L2,2 distance between the sparsified moment tensor and the dense oracle."""
    X = synth.gen_samples(n, p, a, seed)
    T = moment_tensor(X)
    st = sparsify(X, m, seed, dist=dist, mode=_mode(mode), ls_power=ls_power)
    return metrics.l22_error(st.to_dense(), T, face_norm)


def completion_dist(dist, factors, T):
    """Sampling distribution for completion of a known low-rank instance.

    Row families use the factor row norms (``tensorls`` with power 3/2);
    entry families use the dense tensor.
    """
    if dist in ("tensorls", "suml3", "prodl3", "uniform"):
        return sampling.make_distribution(dist, n=factors.n, row_norms=factors.row_norms(), ls_power=1.5)
    return sampling.make_distribution(dist, tensor=T)


def completion_rmse(n, r, a, dist, m, seed, b=30, restarts=DEFAULT_RESTARTS, iters=DEFAULT_ITERS):
    """Sample a biased orthogonal instance, initialize by RTPM, refine by WALS
    with caps at twice the true row norms; return the matched factor RMSE."""
    f = synth.gen_orthogonal_factors(n, r, a, seed)
    T = cp_reconstruct(f)
    st = sampling.sample_tensor(T, completion_dist(dist, f, T), sampling.SamplePlan(m, "bernoulli", seed))
    try:
        init = rtpm(st, r, restarts, iters, seed)
        res = wals(st, WalsConfig(r, b, row_caps=2 * f.row_norms(), seed=seed), init)
    except NUMERICAL_FAILURES:
        return math.inf
    return metrics.factor_rmse(res.factors, f)


def factorize_rmse(n, r, a, dist, noise_fro, m, seed, b=30, flatness=3.0,
                   restarts=DEFAULT_RESTARTS, iters=DEFAULT_ITERS):
    f = synth.gen_orthogonal_factors(n, r, a, seed)
    T, _ = fz.noisy_tensor(f, fz.NoiseSpec(noise_fro, flatness), seed)
    try:
        res = fz.factorize(T, m, r, b=b, seed=seed, dist=dist, restarts=restarts, iters=iters)
    except NUMERICAL_FAILURES:
        return math.inf
    return metrics.factor_rmse(res.factors, f)


# drivers -------------------------------------------------------------------

def run_fig1(cfg, threads=1):
    seeds = range(cfg.seed0, cfg.seed0 + cfg.seeds)
    cells = [(d, m, s) for d in cfg.dists for m in cfg.grid() for s in seeds]

    def one(c):
        d, m, s = c
        return (d, m, s, sparsify_error(cfg.n, cfg.p, cfg.a, d, m, s, cfg.ls_power, cfg.mode, cfg.face_norm))

    return ("dist", "m", "seed", "l22_error"), sorted(pmap(one, cells, threads))


def run_fig2(cfg, threads=1):
    seeds = range(cfg.seed0, cfg.seed0 + cfg.seeds)
    m = cfg.budget()
    cells = [(d, p, s) for d in cfg.dists for p in cfg.p_grid for s in seeds]

    def one(c):
        d, p, s = c
        return (d, int(p), s, sparsify_error(cfg.n, int(p), cfg.a, d, m, s, cfg.ls_power, cfg.mode, cfg.face_norm))

    return ("dist", "p", "seed", "l22_error"), sorted(pmap(one, cells, threads))


def success_rate(n, r, a, dist, m, seeds, b=30, restarts=DEFAULT_RESTARTS, iters=DEFAULT_ITERS, threads=1):
    rmse = pmap(lambda s: completion_rmse(n, r, a, dist, m, s, b, restarts, iters), seeds, threads)
    return float(np.mean(np.asarray(rmse) < SUCCESS_RMSE))


def find_m_star(ok, lo, hi, rel_tol=0.1):
    """Smallest budget (to relative precision ``rel_tol``) with ``ok(m)`` true,
    assuming monotone success. ``inf`` if even ``hi`` fails."""
    if ok(lo):
        return lo
    if not ok(hi):
        return math.inf
    while hi > lo * (1 + rel_tol) and hi - lo > 1:
        mid = int(round(math.sqrt(lo * hi)))
        mid = min(max(mid, lo + 1), hi - 1)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def run_fig3a(cfg, threads=1):
    seeds = list(range(cfg.seed0, cfg.seed0 + cfg.seeds))
    lo, hi = cfg.bracket()
    rows = []
    for d in cfg.dists:
        for a in cfg.a_grid:
            def ok(m, a=a, d=d):
                rate = success_rate(cfg.n, cfg.r, a, d, m, seeds, cfg.b, cfg.rtpm_restarts, cfg.rtpm_iters, threads)
                return rate >= SUCCESS_RATE
            rows.append((d, float(a), find_m_star(ok, lo, hi, cfg.rel_tol)))
    return ("dist", "a", "m_star"), sorted(rows)


def run_fig3b(cfg, threads=1):
    seeds = range(cfg.seed0, cfg.seed0 + cfg.seeds)
    m = cfg.budget()
    cells = [(d, float(e), s) for d in cfg.dists for e in cfg.noise_grid for s in seeds]

    def one(c):
        d, e, s = c
        return (d, e, s, factorize_rmse(cfg.n, cfg.r, cfg.a, d, e, m, s, cfg.b, cfg.flatness,
                                        cfg.rtpm_restarts, cfg.rtpm_iters))

    return ("dist", "noise_fro", "seed", "factor_rmse"), sorted(pmap(one, cells, threads))


EXPERIMENTS = {
    "fig1": (Fig1Config, run_fig1),
    "fig2": (Fig2Config, run_fig2),
    "fig3a": (Fig3aConfig, run_fig3a),
    "fig3b": (Fig3bConfig, run_fig3b),
}


def run(name, config=None, threads=1):
    """Run a named experiment from a parsed config dict; returns ``(header, rows, comments)``."""
    if name not in EXPERIMENTS:
        raise UsageError(f"unknown experiment {name!r}; choose from {sorted(EXPERIMENTS)}")
    cls, fn = EXPERIMENTS[name]
    cfg = cls.from_dict(config or {})
    header, rows = fn(cfg, resolve_threads(threads))
    return header, rows, cfg.header(name)


def medians(rows, key_cols=2):
    """Median of the last column grouped by the first ``key_cols`` columns."""
    groups = {}
    for row in rows:
        groups.setdefault(tuple(row[:key_cols]), []).append(row[-1])
    return {k: float(np.median(v)) for k, v in sorted(groups.items())}
