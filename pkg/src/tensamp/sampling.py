"""Entry-sampling distributions over the index cube and the sampling step.

A distribution is a mixture of up to three symmetric component shapes:

* ``pair``: ``(a_i a_j + a_j a_k + a_k a_i) / (3 n A^2)`` with ``A = sum(a)``
* ``sum``: ``(a_i + a_j + a_k) / (3 n^2 A)``
* ``entry``: an explicit normalized cube (``|T|`` or ``T^2`` mass)

Uniform sampling is the ``pair`` shape with ``a = 1``. All seven families
(uniform, l1, l2, suml3, prodl3, tensorls, noisy) are built from these.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from tensamp.tensor_core import SampledTensor, _raw

FAMILIES = ("uniform", "l1", "l2", "suml3", "prodl3", "tensorls", "noisy")
MODES = ("bernoulli", "categorical")
BERNOULLI_MAX_N = 200
CATEGORICAL_BLOCK = 1 << 16
_BERNOULLI_STREAM = 0
_CATEGORICAL_STREAM = 1


@dataclass(frozen=True)
class Component:
    kind: str  # "pair" | "sum" | "entry"
    weight: float
    data: np.ndarray  # per-index weights a, or the normalized cube for "entry"

    @property
    def total(self):
        return float(self.data.sum())


@dataclass(frozen=True, eq=False)
class EntryDistribution:
    """Probability mass over index triples ``(i, j, k)`` of an ``n``-cube.

    ``row_stat`` holds the per-index statistic the family was built from (row
    norms, or ``nu`` for the noisy mixture) and ``norm_const`` its normalizer
    (``sum a`` for product/sum shapes, ``Z`` for the noisy mixture).
    """

    n: int
    family: str
    components: tuple
    row_stat: np.ndarray | None = None
    norm_const: float = 1.0
    _tables: dict = field(default_factory=dict, repr=False)

    def face(self, i):
        """Probabilities ``p(i, :, :)`` as an ``n x n`` array."""
        n = self.n
        out = np.zeros((n, n))
        for c in self.components:
            if c.kind == "pair":
                a = c.data
                A = c.total
                out += c.weight * (a[i] * (a[:, None] + a[None, :]) + np.outer(a, a)) / (3 * n * A * A)
            elif c.kind == "sum":
                a = c.data
                out += c.weight * (a[i] + a[:, None] + a[None, :]) / (3 * n * n * c.total)
            else:
                out += c.weight * c.data[i]
        return out

    def prob(self, idx):
        """Probabilities at the rows of an ``(m, 3)`` index array."""
        idx = np.asarray(idx, dtype=np.int64).reshape(-1, 3)
        i, j, k = idx.T
        n = self.n
        out = np.zeros(len(idx))
        for c in self.components:
            if c.kind == "pair":
                a = c.data
                A = c.total
                out += c.weight * (a[i] * a[j] + a[j] * a[k] + a[k] * a[i]) / (3 * n * A * A)
            elif c.kind == "sum":
                a = c.data
                out += c.weight * (a[i] + a[j] + a[k]) / (3 * n * n * c.total)
            else:
                out += c.weight * c.data[i, j, k]
        return out

    def dense(self):
        return np.stack([self.face(i) for i in range(self.n)])

    @property
    def nu(self):
        if self.family != "noisy":
            raise AttributeError("nu is only defined for the noisy mixture")
        return self.row_stat

    @property
    def Z(self):
        if self.family != "noisy":
            raise AttributeError("Z is only defined for the noisy mixture")
        return self.norm_const

    def _cumulative(self, key, weights):
        if key not in self._tables:
            cdf = np.cumsum(weights, dtype=float)
            self._tables[key] = cdf / cdf[-1]
        return self._tables[key]


def _row_weights(row_norms, power):
    r = np.asarray(row_norms, dtype=float)
    if r.ndim != 1 or r.size == 0:
        raise ValueError("row norms must be a non-empty vector")
    if np.any(r < 0) or not np.all(np.isfinite(r)):
        raise ValueError("row norms must be finite and nonnegative")
    if not np.any(r > 0):
        raise ValueError("all row norms are zero; distribution undefined")
    return r, r**power


def dist_from_samples(row_norms):
    """Two-pass sparsification distribution: pair shape on ``||X^i||^3``."""
    return dist_pair(row_norms, 3)


def dist_from_factor_rows(row_norms):
    """Completion distribution: pair shape on ``||U^i||^{3/2}``."""
    return dist_pair(row_norms, 1.5)


def dist_sum_l3(row_norms):
    r, a = _row_weights(row_norms, 3)
    return EntryDistribution(len(r), "suml3", (Component("sum", 1.0, a),), r, float(a.sum()))


def dist_prod_l3(row_norms):
    return dist_pair(row_norms, 3, family="prodl3")


def dist_uniform(n):
    if n < 1:
        raise ValueError("n must be positive")
    return EntryDistribution(n, "uniform", (Component("pair", 1.0, np.ones(n)),))


def _entry_mass(t, power):
    arr = np.abs(_raw(t)) ** power
    total = arr.sum()
    if total == 0:
        raise ValueError("entry-valued distribution needs a nonzero tensor")
    return arr / total


def dist_l1(t):
    q = _entry_mass(t, 1)
    return EntryDistribution(q.shape[0], "l1", (Component("entry", 1.0, q),))


def dist_l2(t):
    q = _entry_mass(t, 2)
    return EntryDistribution(q.shape[0], "l2", (Component("entry", 1.0, q),))


def noisy_weights(face_fro, fro):
    """``nu_i = ||T_i||_F / ||T||_F + 1/sqrt(n)`` and ``Z = (sum nu^{3/2})^2``."""
    face_fro = np.asarray(face_fro, dtype=float)
    if fro <= 0:
        raise ValueError("noisy mixture needs a nonzero tensor")
    nu = face_fro / fro + 1.0 / np.sqrt(len(face_fro))
    Z = float(np.sum(nu**1.5) ** 2)
    return nu, Z


def noisy_face_probs(nu, i, face, fro):
    """``p(i, :, :)`` of the noisy mixture from ``nu`` and the raw face values."""
    n = len(nu)
    a = nu**1.5
    A = a.sum()
    pair = (a[i] * (a[:, None] + a[None, :]) + np.outer(a, a)) / (3 * n * A * A)
    return 0.5 * pair + 0.5 * np.asarray(face) ** 2 / fro**2


def dist_noisy_mixture(t):
    arr = _raw(t)
    n = arr.shape[0]
    fro = float(np.linalg.norm(arr))
    nu, Z = noisy_weights(np.linalg.norm(arr.reshape(n, -1), axis=1), fro)
    comps = (Component("pair", 0.5, nu**1.5), Component("entry", 0.5, arr**2 / fro**2))
    return EntryDistribution(n, "noisy", comps, nu, Z)


def dist_pair(row_norms, power, family="tensorls"):
    """Pair shape on ``row_norms ** power``."""
    r, a = _row_weights(row_norms, power)
    return EntryDistribution(len(r), family, (Component("pair", 1.0, a),), r, float(a.sum()))


def make_distribution(family, n=None, row_norms=None, tensor=None, ls_power=3.0):
    """Dispatch on a family name as used by the CLI ``--dist`` flag.

    Row-norm families take ``row_norms``; ``tensorls`` raises them to
    ``ls_power`` (3 for sample-matrix rows, 3/2 for factor rows). Entry-valued
    families take the dense ``tensor``.
    """
    if family == "uniform":
        return dist_uniform(n if n is not None else len(row_norms))
    if family == "l1":
        return dist_l1(tensor)
    if family == "l2":
        return dist_l2(tensor)
    if family == "noisy":
        return dist_noisy_mixture(tensor)
    if family == "suml3":
        return dist_sum_l3(row_norms)
    if family == "prodl3":
        return dist_prod_l3(row_norms)
    if family == "tensorls":
        return dist_pair(row_norms, ls_power)
    raise ValueError(f"unknown distribution family {family!r}; choose from {FAMILIES}")


@dataclass(frozen=True)
class SamplePlan:
    m: int
    mode: str | None = None  # None picks bernoulli for n <= 200, categorical above
    seed: int = 0

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise ValueError(f"sample budget m must be a positive integer, got {self.m}")
        if self.mode is not None and self.mode not in MODES:
            raise ValueError(f"unknown sampling mode {self.mode!r}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")

    def resolved_mode(self, n):
        if self.mode is not None:
            return self.mode
        return "bernoulli" if n <= BERNOULLI_MAX_N else "categorical"


@dataclass(frozen=True)
class SampleSet:
    """Drawn triples (sorted by linear index) with their inclusion probabilities."""

    n: int
    idx: np.ndarray
    p_hat: np.ndarray

    def __len__(self):
        return len(self.p_hat)

    @property
    def n_forced(self):
        """Triples included with certainty (``p_hat == 1``)."""
        return int(np.count_nonzero(self.p_hat >= 1.0))

    @property
    def n_random(self):
        return len(self) - self.n_forced


def bernoulli_face(p_face, m, rng):
    """Independent inclusion of every cell of one face with ``min(m p, 1)``."""
    ph = np.minimum(m * p_face, 1.0)
    keep = rng.random(ph.shape) < ph
    jk = np.argwhere(keep)
    return jk, ph[keep]


def face_stream(seed, i):
    return np.random.default_rng([seed, _BERNOULLI_STREAM, i])


def _pmap(fn, items, threads):
    items = list(items)
    if threads is None or threads == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads or None) as ex:
        return list(ex.map(fn, items))


def _draw_bernoulli(dist, plan, threads):
    def one(i):
        jk, ph = bernoulli_face(dist.face(i), plan.m, face_stream(plan.seed, i))
        ijk = np.column_stack([np.full(len(jk), i), jk]) if len(jk) else np.zeros((0, 3), int)
        return ijk, ph

    parts = _pmap(one, range(dist.n), threads)
    idx = np.concatenate([p[0] for p in parts]).astype(np.int64)
    return SampleSet(dist.n, idx.reshape(-1, 3), np.concatenate([p[1] for p in parts]))


def _categorical_block(dist, count, rng):
    n = dist.n
    weights = np.array([c.weight for c in dist.components])
    which = rng.choice(len(weights), size=count, p=weights / weights.sum())
    out = np.empty((count, 3), dtype=np.int64)
    for ci, c in enumerate(dist.components):
        sel = np.flatnonzero(which == ci)
        if sel.size == 0:
            continue
        if c.kind == "entry":
            cdf = dist._cumulative(("entry", ci), c.data.reshape(-1))
            lin = np.minimum(np.searchsorted(cdf, rng.random(sel.size), side="right"), n**3 - 1)
            out[sel] = np.column_stack(np.unravel_index(lin, (n, n, n)))
            continue
        cdf = dist._cumulative(("row", ci), c.data)
        n_cat = 2 if c.kind == "pair" else 1
        # cyclic orientation: slots (o, o+1) categorical for pair, slot o for sum
        orient = rng.integers(0, 3, size=sel.size)
        cat = np.minimum(np.searchsorted(cdf, rng.random((sel.size, n_cat)), side="right"), n - 1)
        uni = rng.integers(0, n, size=(sel.size, 3 - n_cat))
        vals = np.concatenate([cat, uni], axis=1)
        slots = (orient[:, None] + np.arange(3)[None, :]) % 3
        tri = np.empty((sel.size, 3), dtype=np.int64)
        np.put_along_axis(tri, slots, vals, axis=1)
        out[sel] = tri
    return out


def _draw_categorical(dist, plan, threads):
    n, m = dist.n, plan.m
    blocks = [(b, min(CATEGORICAL_BLOCK, m - b * CATEGORICAL_BLOCK))
              for b in range((m + CATEGORICAL_BLOCK - 1) // CATEGORICAL_BLOCK)]

    def one(block):
        b, count = block
        return _categorical_block(dist, count, np.random.default_rng([plan.seed, _CATEGORICAL_STREAM, b]))

    tri = np.concatenate(_pmap(one, blocks, threads))
    lin = np.unique((tri[:, 0] * n + tri[:, 1]) * n + tri[:, 2])
    idx = np.column_stack(np.unravel_index(lin, (n, n, n))).astype(np.int64)
    p = dist.prob(idx)
    with np.errstate(divide="ignore"):
        p_hat = -np.expm1(m * np.log1p(-np.minimum(p, 1.0)))
    return SampleSet(n, idx, p_hat)


def draw(dist, plan, threads=1):
    """Draw a sample set. Deterministic in ``(dist, plan)`` for any ``threads``.

    ``bernoulli`` includes every triple independently with ``min(m p, 1)``;
    ``categorical`` draws ``m`` i.i.d. triples, deduplicates, and reports the
    true inclusion probability ``1 - (1 - p)^m``.
    """
    if plan.resolved_mode(dist.n) == "bernoulli":
        return _draw_bernoulli(dist, plan, threads)
    return _draw_categorical(dist, plan, threads)


def inclusion_probability(p, m, mode):
    p = np.asarray(p, dtype=float)
    if mode == "bernoulli":
        return np.minimum(m * p, 1.0)
    with np.errstate(divide="ignore"):
        return -np.expm1(m * np.log1p(-np.minimum(p, 1.0)))


def reweight(samples, values):
    """Attach raw values to drawn triples; weights ``1/p_hat`` follow from ``p_hat``."""
    values = np.asarray(values, dtype=float)
    if values.shape != (len(samples),):
        raise ValueError(f"expected {len(samples)} values, got shape {values.shape}")
    return SampledTensor(samples.n, samples.idx, values, samples.p_hat)


def sample_tensor(t, dist, plan, threads=1):
    """Draw from ``dist`` and read the sampled entries out of a dense tensor."""
    arr = _raw(t)
    s = draw(dist, plan, threads)
    return reweight(s, arr[s.idx[:, 0], s.idx[:, 1], s.idx[:, 2]])
