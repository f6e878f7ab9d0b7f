"""Robust tensor power method with implicit deflation."""

from __future__ import annotations

import numpy as np

from tensamp.tensor_core import CpFactors, tvp_many

DEFAULT_RESTARTS = 30
DEFAULT_ITERS = 100
COLLAPSE_TOL = 1e-14
_STREAM = 4  # substream tag, distinct from the sampling streams


class DegenerateTensorError(ValueError):
    """Every power-iteration restart collapsed to zero."""


class Deflated:
    """``t - sum_l lam_l u_l (x) u_l (x) u_l`` without forming the difference."""

    def __init__(self, base, lambdas=(), vectors=None):
        self.base = base
        self.lambdas = np.asarray(lambdas, dtype=float)
        n = base.n if hasattr(base, "n") else np.asarray(base).shape[0]
        self.vectors = np.zeros((n, 0)) if vectors is None else np.asarray(vectors, dtype=float)
        self.n = n

    def tvp_many(self, A, B):
        out = tvp_many(self.base, A, B)
        if self.lambdas.size:
            V = self.vectors
            out = out - V @ (self.lambdas[:, None] * (V.T @ A) * (V.T @ B))
        return out

    def push(self, lam, u):
        return Deflated(self.base, np.append(self.lambdas, lam), np.column_stack([self.vectors, u]))


def _iterate(t, V, iters):
    for _ in range(iters):
        W = tvp_many(t, V, V)
        norms = np.linalg.norm(W, axis=0)
        ok = norms >= COLLAPSE_TOL
        V = np.where(ok, W / np.where(ok, norms, 1.0), V)
    return V


def _restart_starts(n, restarts, seed, round_idx):
    # one substream per restart so results do not depend on how restarts are batched
    cols = [np.random.default_rng([seed, _STREAM, round_idx, s]).standard_normal(n) for s in range(restarts)]
    V = np.column_stack(cols)
    return V / np.linalg.norm(V, axis=0)


def power_extract(t, restarts=DEFAULT_RESTARTS, iters=DEFAULT_ITERS, seed=0, round_idx=0):
    """Best of ``restarts`` power iterations ``u <- T(I,u,u)/||T(I,u,u)||``.

    Returns ``(lam, u)`` with ``lam = <u, T(I,u,u)>`` after a polish of
    ``iters`` further iterations on the winning restart. If ``lam`` comes out
    negative, ``u`` is negated: for odd order ``lam u^{(x)3} = (-lam)(-u)^{(x)3}``.
    """
    n = t.n if hasattr(t, "n") else np.asarray(t).shape[0]
    V = _restart_starts(n, restarts, seed, round_idx)
    V = _iterate(t, V, iters)
    W = tvp_many(t, V, V)
    if np.all(np.linalg.norm(W, axis=0) < COLLAPSE_TOL):
        raise DegenerateTensorError("all power-iteration restarts collapsed; tensor is (numerically) zero")
    lam = np.einsum("il,il->l", V, W)
    best = int(np.argmax(lam))  # argmax returns the lowest index on ties
    u = _iterate(t, V[:, [best]], iters)[:, 0]
    w = tvp_many(t, u[:, None], u[:, None])[:, 0]
    if np.linalg.norm(w) < COLLAPSE_TOL:
        raise DegenerateTensorError("winning restart collapsed during polish")
    lam = float(u @ w)
    if lam < 0:
        lam, u = -lam, -u
    return lam, u


def rtpm(t, r, restarts=DEFAULT_RESTARTS, iters=DEFAULT_ITERS, seed=0):
    """Extract ``r`` components by power iteration with deflation between rounds."""
    if r < 1:
        raise ValueError("target rank must be at least 1")
    residual = t if isinstance(t, Deflated) else Deflated(t)
    lams, vecs = [], []
    for q in range(r):
        lam, u = power_extract(residual, restarts, iters, seed, round_idx=q)
        if lam < COLLAPSE_TOL:
            raise DegenerateTensorError(f"residual vanished after {q} of {r} components")
        lams.append(lam)
        vecs.append(u / np.linalg.norm(u))
        residual = residual.push(lam, vecs[-1])
    return CpFactors(np.column_stack(vecs), np.array(lams))
