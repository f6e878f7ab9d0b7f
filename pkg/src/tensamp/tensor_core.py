"""Dense, sampled and CP representations of symmetric order-3 tensors.

Every tensor-like object here exposes ``n`` and ``tvp_many(A, B)``, the
batched contraction ``T(I, a_l, b_l)`` for the columns of two ``n x L``
matrices. :func:`tvp` is the single-vector convenience wrapper.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import permutations

import numpy as np
from scipy import sparse

MAX_DENSE_N = 512
KHATRI_RAO_LIMIT = 4_000_000
GATHER_CHUNK = 1 << 16


class ConvergenceError(RuntimeError):
    """Power iteration did not meet its tolerance."""

    def __init__(self, message, residual):
        super().__init__(f"{message} (final relative change {residual:.3e})")
        self.residual = residual


def canonical_gather_index(n):
    """Linear index of the sorted-triple representative for every cell of the cube."""
    i, j, k = np.indices((n, n, n)).reshape(3, -1)
    s = np.sort(np.stack([i, j, k]), axis=0)
    return (s[0] * n + s[1]) * n + s[2]


def symmetrize(arr):
    """Average over the six index permutations, then copy each value from its
    sorted-index representative so the result is bitwise symmetric."""
    arr = np.asarray(arr, dtype=float)
    avg = sum(np.transpose(arr, p) for p in permutations(range(3))) / 6.0
    return _canonicalize(avg)


def _canonicalize(arr):
    n = arr.shape[0]
    return arr.reshape(-1)[canonical_gather_index(n)].reshape(n, n, n)


def _check_dims(n, *vectors):
    for v in vectors:
        if v.shape[0] != n:
            raise ValueError(f"dimension mismatch: tensor has n={n}, vector has {v.shape[0]}")


class DenseTensor3:
    """Full ``n x n x n`` symmetric tensor.

    Symmetry is checked on construction (exact by default; pass ``atol`` to
    accept round-off). Use :func:`symmetrize` to build one from an
    arbitrary array.
    """

    def __init__(self, entries, atol=0.0):
        arr = np.array(entries, dtype=float)
        if arr.ndim != 3 or len(set(arr.shape)) != 1 or arr.shape[0] == 0:
            raise ValueError(f"expected a non-empty cubic array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("tensor entries must be finite")
        for p in permutations(range(3)):
            if not np.allclose(arr, np.transpose(arr, p), rtol=0.0, atol=atol):
                raise ValueError(f"tensor is not symmetric under permutation {p}")
        arr.setflags(write=False)
        self.entries = arr

    @property
    def n(self):
        return self.entries.shape[0]

    def tvp_many(self, A, B):
        _check_dims(self.n, A, B)
        return np.einsum("ijk,jl,kl->il", self.entries, A, B, optimize=True)

    def face(self, i):
        return self.entries[i]

    def __sub__(self, other):
        return _raw(self) - _raw(other)

    def __repr__(self):
        return f"DenseTensor3(n={self.n})"


@dataclass(frozen=True)
class CpFactors:
    """Symmetric CP form ``sum_l sigma_l U_l (x) U_l (x) U_l`` with unit columns."""

    U: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        U = np.array(self.U, dtype=float, ndmin=2)
        sigma = np.array(self.sigma, dtype=float, ndmin=1)
        if U.ndim != 2 or sigma.ndim != 1 or U.shape[1] != sigma.shape[0]:
            raise ValueError(f"shape mismatch: U {U.shape}, sigma {sigma.shape}")
        if not (np.all(np.isfinite(U)) and np.all(np.isfinite(sigma))):
            raise ValueError("factors must be finite")
        norms = np.linalg.norm(U, axis=0)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise ValueError(f"columns of U must have unit norm, got {norms}")
        if np.any(sigma <= 0):
            raise ValueError(f"weights must be strictly positive, got {sigma}")
        U.setflags(write=False)
        sigma.setflags(write=False)
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "sigma", sigma)

    @classmethod
    def from_unnormalized(cls, V, sigma=None):
        """Normalize the columns of ``V``; their norms (times ``sigma``) become the weights."""
        V = np.array(V, dtype=float, ndmin=2)
        norms = np.linalg.norm(V, axis=0)
        w = norms if sigma is None else norms * np.asarray(sigma, dtype=float)
        return cls(V / norms, w)

    @property
    def n(self):
        return self.U.shape[0]

    @property
    def rank(self):
        return self.U.shape[1]

    @property
    def kappa(self):
        return float(self.sigma.max() / self.sigma.min())

    def tvp_many(self, A, B):
        _check_dims(self.n, A, B)
        return self.U @ (self.sigma[:, None] * (self.U.T @ A) * (self.U.T @ B))

    def values_at(self, idx):
        """Entries of the reconstructed tensor at the rows of an ``(m, 3)`` index array."""
        idx = np.asarray(idx)
        U = self.U
        return (U[idx[:, 0]] * U[idx[:, 1]] * U[idx[:, 2]]) @ self.sigma

    def row_norms(self):
        return np.linalg.norm(self.U, axis=1)


@dataclass(frozen=True)
class SampledTensor:
    """Sparse set of observed entries with inclusion probabilities.

    ``idx`` is an ``(m, 3)`` integer array of (i, j, k) keys, ``values`` the raw
    tensor entries and ``p_hat`` the inclusion probability of each key. The
    reweighted tensor has value ``values * weight`` at each key, zero elsewhere.
    """

    n: int
    idx: np.ndarray
    values: np.ndarray
    p_hat: np.ndarray
    _unfold: sparse.csr_matrix | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        idx = np.array(self.idx, dtype=np.int64).reshape(-1, 3)
        values = np.array(self.values, dtype=float).reshape(-1)
        p_hat = np.array(self.p_hat, dtype=float).reshape(-1)
        if not (len(idx) == len(values) == len(p_hat)):
            raise ValueError("idx, values and p_hat must have equal length")
        if len(idx) and (idx.min() < 0 or idx.max() >= self.n):
            raise ValueError(f"indices out of range for n={self.n}")
        if np.any(p_hat <= 0) or np.any(p_hat > 1):
            raise ValueError("p_hat must lie in (0, 1]")
        if not np.all(np.isfinite(values)):
            raise ValueError("sampled values must be finite")
        if len(np.unique(self.linear_index(idx))) != len(idx):
            raise ValueError("duplicate (i, j, k) keys")
        for a in (idx, values, p_hat):
            a.setflags(write=False)
        object.__setattr__(self, "idx", idx)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "p_hat", p_hat)

    def linear_index(self, idx=None):
        idx = self.idx if idx is None else idx
        return (idx[:, 0] * self.n + idx[:, 1]) * self.n + idx[:, 2]

    @property
    def weight(self):
        return 1.0 / self.p_hat

    @property
    def reweighted(self):
        return self.values * self.weight

    def __len__(self):
        return len(self.values)

    def subset(self, rows):
        return SampledTensor(self.n, self.idx[rows], self.values[rows], self.p_hat[rows])

    def unfolding(self):
        """Reweighted mode-1 unfolding as an ``n x n^2`` CSR matrix (cached)."""
        if self._unfold is None:
            mat = sparse.csr_matrix(
                (self.reweighted, (self.idx[:, 0], self.idx[:, 1] * self.n + self.idx[:, 2])),
                shape=(self.n, self.n * self.n),
            )
            object.__setattr__(self, "_unfold", mat)
        return self._unfold

    def tvp_many(self, A, B):
        _check_dims(self.n, A, B)
        n, L = self.n, A.shape[1]
        if n * n * L <= KHATRI_RAO_LIMIT:
            return np.asarray(self.unfolding() @ (A[:, None, :] * B[None, :, :]).reshape(n * n, L))
        out = np.zeros((n, L))
        w = self.reweighted
        for s in range(0, len(self), GATHER_CHUNK):
            i, j, k = self.idx[s:s + GATHER_CHUNK].T
            contrib = w[s:s + GATHER_CHUNK, None] * A[j] * B[k]
            out += sparse.csr_matrix(
                (np.ones(len(i)), (i, np.arange(len(i)))), shape=(n, len(i))
            ) @ contrib
        return out

    def to_dense(self):
        """Scatter the reweighted values into a zero cube (not symmetrized)."""
        out = np.zeros(self.n**3)
        out[self.linear_index()] = self.reweighted
        return out.reshape(self.n, self.n, self.n)


def _raw(t):
    if isinstance(t, DenseTensor3):
        return t.entries
    if isinstance(t, SampledTensor):
        return t.to_dense()
    if isinstance(t, CpFactors):
        return cp_reconstruct(t).entries
    arr = np.asarray(t, dtype=float)
    if arr.ndim != 3:
        raise TypeError(f"not a tensor-like object: {type(t).__name__}")
    return arr


def tvp_many(t, A, B):
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if hasattr(t, "tvp_many"):
        return t.tvp_many(A, B)
    arr = _raw(t)
    _check_dims(arr.shape[0], A, B)
    return np.einsum("ijk,jl,kl->il", arr, A, B, optimize=True)


def tvp(t, u, v):
    """Contraction ``T(I, u, v)``: the vector with entries ``sum_jk T_ijk u_j v_k``."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.ndim != 1 or v.ndim != 1:
        raise ValueError("tvp expects 1-d vectors")
    return tvp_many(t, u[:, None], v[:, None])[:, 0]


def cp_reconstruct(f, max_n=MAX_DENSE_N):
    if f.n > max_n:
        raise MemoryError(
            f"refusing to materialize n={f.n} tensor ({f.n**3 * 8 / 2**20:.0f} MiB); "
            f"limit is n={max_n}"
        )
    arr = np.einsum("l,il,jl,kl->ijk", f.sigma, f.U, f.U, f.U, optimize=True)
    return DenseTensor3(_canonicalize(arr))


def frobenius_norm(t):
    if isinstance(t, CpFactors):
        gram = t.U.T @ t.U
        return float(np.sqrt(max(t.sigma @ (gram**3) @ t.sigma, 0.0)))
    if isinstance(t, SampledTensor):
        return float(np.linalg.norm(t.reweighted))
    return float(np.linalg.norm(_raw(t)))


def face_frobenius(t, i):
    arr = _raw(t)
    if not 0 <= i < arr.shape[0]:
        raise IndexError(f"face {i} out of range for n={arr.shape[0]}")
    return float(np.linalg.norm(arr[i]))


def face_spectral_norms(arr, tol=1e-10, max_iter=1000, seed=0, block=8):
    """Largest singular value of every face ``arr[i]``.

    Block power iteration on ``F^T F`` (``block`` vectors, Rayleigh-Ritz on the
    block), batched over faces, from a fixed seeded start. Stops per face when
    the top Ritz value changes by at most ``tol`` relative. All-zero faces
    return 0 without iterating.
    """
    arr = np.asarray(arr, dtype=float)
    n = arr.shape[0]
    out = np.zeros(n)
    live = np.flatnonzero(np.any(arr.reshape(n, -1) != 0, axis=1))
    if live.size == 0:
        return out
    faces = arr[live]
    cols = arr.shape[2]
    k = min(block, cols)
    X0 = np.linalg.qr(np.random.default_rng(seed).standard_normal((cols, k)))[0]
    X = np.broadcast_to(X0, (live.size, cols, k)).copy()
    est = np.zeros(live.size)
    change = np.full(live.size, np.inf)
    active = np.ones(live.size, dtype=bool)
    for _ in range(max_iter):
        F = faces[active]
        Y = F @ X[active]
        lam = np.linalg.eigvalsh(np.swapaxes(Y, 1, 2) @ Y)[:, -1]
        change[active] = np.abs(lam - est[active]) / np.maximum(lam, np.finfo(float).tiny)
        est[active] = lam
        X[active] = np.linalg.qr(np.swapaxes(F, 1, 2) @ Y)[0]
        active[np.flatnonzero(active)[change[active] <= tol]] = False
        if not active.any():
            break
    else:
        raise ConvergenceError("face power iteration did not converge", float(change.max()))
    out[live] = np.sqrt(np.maximum(est, 0.0))
    return out


def l22_norm(t, face_norm="spectral"):
    """Square root of the sum of squared per-face norms (faces along the first index).

    ``face_norm="spectral"`` uses matrix spectral norms (the default surrogate
    for the tensor spectral norm); ``"frobenius"`` collapses to the Frobenius norm.
    """
    arr = _raw(t)
    if face_norm == "spectral":
        per_face = face_spectral_norms(arr)
    elif face_norm == "frobenius":
        per_face = np.linalg.norm(arr.reshape(arr.shape[0], -1), axis=1)
    else:
        raise ValueError(f"unknown face norm {face_norm!r}")
    return float(np.sqrt(np.sum(per_face**2)))
