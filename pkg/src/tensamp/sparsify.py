"""Two-pass sparsification of the moment tensor ``sum_l X_l (x) X_l (x) X_l``.

The full tensor is never formed for the row-norm families: pass one reads
the row norms of ``X``, pass two evaluates only the drawn entries.
"""

from __future__ import annotations

import numpy as np
from scipy import sparse

from tensamp import sampling
from tensamp.tensor_core import DenseTensor3, _canonicalize

ROW_FAMILIES = ("uniform", "suml3", "prodl3", "tensorls")
ENTRY_CHUNK = 1 << 14


class SampleMatrix:
    """``n x p`` matrix whose columns are sample vectors.

    Dense arrays and scipy sparse matrices are both accepted. ``passes``
    counts full sweeps over the data; point queries via :func:`entry` do not
    count.
    """

    def __init__(self, data):
        if sparse.issparse(data):
            data = sparse.csr_matrix(data, dtype=float)
            vals = data.data
        else:
            data = np.array(data, dtype=float, ndmin=2)
            vals = data
        if data.ndim != 2 or 0 in data.shape:
            raise ValueError(f"sample matrix must be a non-empty 2-d array, got shape {data.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("sample matrix entries must be finite")
        if not np.any(vals != 0):
            raise ValueError("sample matrix has no nonzero column")
        self._data = data
        self.passes = 0

    @property
    def n(self):
        return self._data.shape[0]

    @property
    def p(self):
        return self._data.shape[1]

    @property
    def is_sparse(self):
        return sparse.issparse(self._data)

    def nnz(self):
        return self._data.nnz if self.is_sparse else int(np.count_nonzero(self._data))

    def toarray(self):
        return self._data.toarray() if self.is_sparse else self._data.copy()

    def _rows(self, rows):
        block = self._data[rows]
        return block.toarray() if self.is_sparse else block


def row_norm_pass(x):
    """Euclidean norm of every row of ``X`` (one pass)."""
    x.passes += 1
    if x.is_sparse:
        d = x._data
        sq = np.bincount(np.repeat(np.arange(x.n), np.diff(d.indptr)), weights=d.data**2, minlength=x.n)
        return np.sqrt(sq)
    return np.linalg.norm(x._data, axis=1)


def entry(x, i, j, k):
    """Moment-tensor entry ``sum_l X_il X_jl X_kl``."""
    rows = x._rows([i, j, k])
    return float(np.sum(rows[0] * rows[1] * rows[2]))


def evaluate_entries(x, idx):
    """Entries at every row of an ``(m, 3)`` index array (one pass).

    Work is grouped by first index so each row slice of ``X`` is read once per chunk.
    """
    x.passes += 1
    idx = np.asarray(idx, dtype=np.int64).reshape(-1, 3)
    out = np.empty(len(idx))
    order = np.argsort(idx[:, 0], kind="stable")
    for start in range(0, len(idx), ENTRY_CHUNK):
        sel = order[start:start + ENTRY_CHUNK]
        sub = idx[sel]
        uniq, inv = np.unique(sub, return_inverse=True)
        rows = x._rows(uniq)
        inv = inv.reshape(-1, 3)
        out[sel] = np.einsum("mp,mp,mp->m", rows[inv[:, 0]], rows[inv[:, 1]], rows[inv[:, 2]])
    return out


def moment_tensor(x):
    """Dense ``sum_l X_l^{(x)3}`` (one pass). Oracle and entry-family use only."""
    x.passes += 1
    X = x.toarray()
    return DenseTensor3(_canonicalize(np.einsum("il,jl,kl->ijk", X, X, X, optimize=True)))


def default_budget(n):
    return int(np.ceil(10 * n**1.5))


def sparsify(x, m=None, seed=0, dist="tensorls", mode=None, threads=1, ls_power=3.0):
    """Sampled and reweighted moment tensor built in exactly two passes over ``x``.

    Row-norm families (``tensorls``, ``prodl3``, ``suml3``, ``uniform``) never
    materialize the tensor. Entry families (``l1``, ``l2``, ``noisy``) need the
    dense tensor to build the distribution: pass one then forms it and pass two
    reads the drawn entries from ``X`` as usual. ``ls_power`` is the row-norm
    exponent of the ``tensorls`` pair shape (3 by default; 1.5 gives the
    flatter variant).
    """
    if not isinstance(x, SampleMatrix):
        x = SampleMatrix(x)
    m = default_budget(x.n) if m is None else m
    plan = sampling.SamplePlan(m, mode, seed)
    if dist in ROW_FAMILIES:
        norms = row_norm_pass(x)
        d = sampling.make_distribution(dist, n=x.n, row_norms=norms, ls_power=ls_power)
    else:
        d = sampling.make_distribution(dist, tensor=moment_tensor(x))
    drawn = sampling.draw(d, plan, threads)
    return sampling.reweight(drawn, evaluate_entries(x, drawn.idx))
