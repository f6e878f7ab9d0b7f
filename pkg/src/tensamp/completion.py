"""Weighted alternating least squares for symmetric orthogonal tensor completion."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from tensamp import metrics
from tensamp.tensor_core import CpFactors

MAX_DEFAULT_SWEEPS = 200


class NumericalError(RuntimeError):
    """A WALS update produced a non-finite or zero column."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass
class WalsConfig:
    r: int
    b: int | None = None
    fresh_samples: bool = False
    row_caps: np.ndarray | None = None
    epsilon: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.r < 1:
            raise ValueError("rank r must be at least 1")
        if self.b is not None and self.b < 1:
            raise ValueError("iteration count b must be at least 1")
        if self.row_caps is not None:
            self.row_caps = np.asarray(self.row_caps, dtype=float)
            if np.any(self.row_caps < 0):
                raise ValueError("row caps must be nonnegative")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


def default_sweeps(samples, r, epsilon=1e-6):
    """``ceil(4 sqrt(r) log(||T||_F / eps))`` with the norm estimated from the samples."""
    fro = np.sqrt(np.sum(samples.weight * samples.values**2))
    if fro <= epsilon:
        return 1
    return int(min(max(np.ceil(4 * np.sqrt(r) * np.log(fro / epsilon)), 1), MAX_DEFAULT_SWEEPS))


def split_omega(samples, parts, seed=0):
    """Random partition of the sample rows into ``parts`` near-equal index sets."""
    if parts < 1 or len(samples) < parts:
        raise ValueError(f"cannot split {len(samples)} samples into {parts} parts")
    perm = np.random.default_rng([seed, 2]).permutation(len(samples))
    return np.array_split(perm, parts)


def threshold(U, caps):
    """Clip ``|U_iq|`` at ``caps[i]`` and renormalize the columns."""
    U = np.clip(U, -caps[:, None], caps[:, None])
    norms = np.linalg.norm(U, axis=0)
    if np.any(norms == 0):
        raise NumericalError("thresholding zeroed a factor column")
    return U / norms


def _predictions(idx, U, sigma):
    return (U[idx[:, 0]] * U[idx[:, 1]] * U[idx[:, 2]]) @ sigma


def _column_update(idx, vals, w, U, sigma, q, n):
    """Closed-form weighted LS for ``u`` in ``u (x) U_q (x) U_q``; returns ``u_hat``.

    Coordinates with no usable sample (zero denominator) keep ``sigma_q U_iq``.
    """
    i, j, k = idx[:, 0], idx[:, 1], idx[:, 2]
    prod = U[i] * U[j] * U[k]
    others = prod @ sigma - prod[:, q] * sigma[q]
    a = U[j, q] * U[k, q]
    num = np.bincount(i, weights=w * (vals - others) * a, minlength=n)
    den = np.bincount(i, weights=w * a * a, minlength=n)
    u_hat = sigma[q] * U[:, q]
    ok = den > 0
    u_hat[ok] = num[ok] / den[ok]
    return u_hat


def _apply_update(U, sigma, q, u_hat, caps):
    if not np.all(np.isfinite(u_hat)):
        raise NumericalError(f"non-finite update for column {q}", {"column": q, "u_hat": u_hat})
    s = np.linalg.norm(u_hat)
    if s == 0:
        raise NumericalError(f"column {q} collapsed to zero", {"column": q})
    sigma[q] = s
    col = u_hat / s
    if caps is not None:
        col = threshold(col[:, None], caps)[:, 0]
    U[:, q] = col


def wals_step(samples, factors, q, caps=None):
    """One closed-form update of column ``q`` (and its weight) from ``samples``."""
    if len(samples) == 0:
        raise ValueError("empty sample subset")
    U = np.array(factors.U)
    sigma = np.array(factors.sigma)
    u_hat = _column_update(samples.idx, samples.values, samples.weight, U, sigma, q, samples.n)
    _apply_update(U, sigma, q, u_hat, None if caps is None else np.asarray(caps, dtype=float))
    return CpFactors(U, sigma)


def weighted_residual(samples, factors):
    pred = _predictions(samples.idx, factors.U, factors.sigma)
    return float(np.sqrt(np.sum(samples.weight * (samples.values - pred) ** 2)))


@dataclass
class WalsResult:
    factors: CpFactors
    diagnostics: list = field(default_factory=list)

    @property
    def tensor(self):
        """Completed tensor in CP form; pass to ``cp_reconstruct`` to materialize."""
        return self.factors


def wals(samples, cfg, init, truth=None, callback=None):
    """Run ``b`` sweeps of column-wise weighted least squares.

    With ``cfg.fresh_samples`` the samples are split into ``r*b`` random parts and
    step ``(t, q)`` uses part ``t*r + q``; otherwise every step uses all samples.
    ``init`` is thresholded at ``cfg.row_caps`` first (a no-op when it already
    satisfies them). Per-sweep diagnostics hold the weighted residual on the
    samples and, when ``truth`` is given, ``d_inf`` to it.
    """
    r = cfg.r
    if init.rank != r:
        raise ValueError(f"init has rank {init.rank}, config asks for {r}")
    b = cfg.b if cfg.b is not None else default_sweeps(samples, r, cfg.epsilon)
    caps = cfg.row_caps
    U = np.array(init.U)
    sigma = np.array(init.sigma)
    if caps is not None:
        U = threshold(U, caps)
    if cfg.fresh_samples:
        parts = [samples.subset(p) for p in split_omega(samples, r * b, cfg.seed)]
    diagnostics = []
    for t in range(b):
        for q in range(r):
            sub = parts[t * r + q] if cfg.fresh_samples else samples
            u_hat = _column_update(sub.idx, sub.values, sub.weight, U, sigma, q, samples.n)
            try:
                _apply_update(U, sigma, q, u_hat, caps)
            except NumericalError as exc:
                exc.diagnostics.update(sweep=t + 1, history=diagnostics, U=U.copy(), sigma=sigma.copy())
                raise
        current = CpFactors(U.copy(), sigma.copy())
        diag = {"sweep": t + 1, "residual": weighted_residual(samples, current)}
        if truth is not None:
            diag["d_inf"] = metrics.d_inf(current, truth)
        diagnostics.append(diag)
        if callback is not None:
            callback(current, diag)
    return WalsResult(CpFactors(U, sigma), diagnostics)
