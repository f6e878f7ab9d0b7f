"""File formats: sampled tensors, factors, sample matrices, binary dense tensors,
caps, and key=value experiment configs.

Reals are written with 17 significant digits so they round-trip exactly.
"""

from __future__ import annotations

import struct

import numpy as np
from scipy import sparse

from tensamp.tensor_core import CpFactors, SampledTensor

SAMPLED_HEADER = "i,j,k,value,p_hat"
SPARSE_X_HEADER = "row,col,value"
FACTOR_SIGMA_HEADER = "col,sigma"
FACTOR_U_HEADER = "row,col,value"
CAPS_HEADER = "row,cap"
TNS3_MAGIC = b"TNS3"


class FormatError(ValueError):
    pass


def fmt(x):
    return f"{float(x):.17g}"


def _lines(path):
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if line and not line.startswith("#"):
                yield line


def _comments(lines):
    return "".join(f"# {c}\n" for c in lines)


def write_sampled(path, st, comments=()):
    # "# n=<n>" keeps the dimension when trailing indices are unsampled
    with open(path, "w") as fh:
        fh.write(_comments([f"n={st.n}", *comments]))
        fh.write(SAMPLED_HEADER + "\n")
        for (i, j, k), v, p in zip(st.idx, st.values, st.p_hat):
            fh.write(f"{i},{j},{k},{fmt(v)},{fmt(p)}\n")


def read_sampled(path, n=None):
    with open(path) as fh:
        text = fh.read().splitlines()
    for line in text:
        if line.startswith("# n="):
            n = int(line[4:]) if n is None else n
    body = [ln.strip() for ln in text if ln.strip() and not ln.startswith("#")]
    if not body or body[0] != SAMPLED_HEADER:
        raise FormatError(f"{path}: expected header {SAMPLED_HEADER!r}")
    rows = [ln.split(",") for ln in body[1:]]
    if any(len(r) != 5 for r in rows):
        raise FormatError(f"{path}: every record needs 5 fields")
    idx = np.array([[int(r[0]), int(r[1]), int(r[2])] for r in rows], dtype=np.int64).reshape(-1, 3)
    vals = np.array([float(r[3]) for r in rows])
    ph = np.array([float(r[4]) for r in rows])
    if n is None:
        n = int(idx.max()) + 1 if len(idx) else 0
    return SampledTensor(n, idx, vals, ph)


def write_factors(path, f, comments=()):
    with open(path, "w") as fh:
        fh.write(_comments([f"n={f.n}", f"r={f.rank}", *comments]))
        fh.write(FACTOR_SIGMA_HEADER + "\n")
        for c, s in enumerate(f.sigma):
            fh.write(f"{c},{fmt(s)}\n")
        fh.write(FACTOR_U_HEADER + "\n")
        for i in range(f.n):
            for c in range(f.rank):
                fh.write(f"{i},{c},{fmt(f.U[i, c])}\n")


def read_factors(path):
    lines = list(_lines(path))
    if not lines or lines[0] != FACTOR_SIGMA_HEADER:
        raise FormatError(f"{path}: expected header {FACTOR_SIGMA_HEADER!r}")
    try:
        split = lines.index(FACTOR_U_HEADER)
    except ValueError:
        raise FormatError(f"{path}: missing {FACTOR_U_HEADER!r} section") from None
    sig = {int(c): float(s) for c, s in (ln.split(",") for ln in lines[1:split])}
    r = len(sig)
    entries = [ln.split(",") for ln in lines[split + 1:]]
    n = max(int(e[0]) for e in entries) + 1
    U = np.zeros((n, r))
    for i, c, v in entries:
        U[int(i), int(c)] = float(v)
    return CpFactors(U, np.array([sig[c] for c in range(r)]))


def read_matrix(path):
    """Sample matrix CSV: sparse ``row,col,value`` triplets (detected by header,
    optional ``# shape=n,p`` comment) or a dense numeric grid."""
    with open(path) as fh:
        text = fh.read().splitlines()
    shape = None
    for line in text:
        if line.startswith("# shape="):
            shape = tuple(int(v) for v in line[8:].split(","))
    body = [ln.strip() for ln in text if ln.strip() and not ln.startswith("#")]
    if not body:
        raise FormatError(f"{path}: empty matrix file")
    if body[0] == SPARSE_X_HEADER:
        trip = np.array([[float(v) for v in ln.split(",")] for ln in body[1:]]).reshape(-1, 3)
        rows, cols = trip[:, 0].astype(int), trip[:, 1].astype(int)
        if shape is None:
            shape = (rows.max() + 1, cols.max() + 1)
        return sparse.csr_matrix((trip[:, 2], (rows, cols)), shape=shape)
    return np.array([[float(v) for v in ln.split(",")] for ln in body])


def write_matrix(path, X, sparse_format=False):
    X = X.toarray() if sparse.issparse(X) else np.asarray(X)
    with open(path, "w") as fh:
        if sparse_format:
            fh.write(f"# shape={X.shape[0]},{X.shape[1]}\n{SPARSE_X_HEADER}\n")
            for i, j in np.argwhere(X != 0):
                fh.write(f"{i},{j},{fmt(X[i, j])}\n")
        else:
            for row in X:
                fh.write(",".join(fmt(v) for v in row) + "\n")


def write_tns3(path, arr):
    arr = np.ascontiguousarray(arr, dtype="<f8")
    n = arr.shape[0]
    if arr.shape != (n, n, n):
        raise FormatError(f"TNS3 needs a cubic tensor, got shape {arr.shape}")
    with open(path, "wb") as fh:
        fh.write(TNS3_MAGIC + struct.pack("<I", n))
        fh.write(arr.tobytes(order="C"))


def read_tns3(path):
    with open(path, "rb") as fh:
        head = fh.read(8)
        if len(head) != 8 or head[:4] != TNS3_MAGIC:
            raise FormatError(f"{path}: not a TNS3 file")
        (n,) = struct.unpack("<I", head[4:])
        data = fh.read()
    if len(data) != 8 * n**3:
        raise FormatError(f"{path}: expected {n**3} values, found {len(data) // 8}")
    return np.frombuffer(data, dtype="<f8").reshape(n, n, n).astype(float)


def write_caps(path, caps):
    with open(path, "w") as fh:
        fh.write(CAPS_HEADER + "\n")
        for i, c in enumerate(caps):
            fh.write(f"{i},{fmt(c)}\n")


def read_caps(path):
    lines = list(_lines(path))
    if not lines or lines[0] != CAPS_HEADER:
        raise FormatError(f"{path}: expected header {CAPS_HEADER!r}")
    pairs = sorted((int(i), float(c)) for i, c in (ln.split(",") for ln in lines[1:]))
    return np.array([c for _, c in pairs])


def parse_config(text):
    """``key = value`` lines; ``#`` starts a comment; commas make lists.

    Values become int, float, bool (true/false) or str; a value containing a
    comma becomes a list of such scalars.
    """
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"config line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise FormatError(f"config line {lineno}: empty key")
        if "," in value:
            out[key] = [_scalar(v.strip()) for v in value.split(",") if v.strip()]
        else:
            out[key] = _scalar(value)
    return out


def _scalar(s):
    low = s.lower()
    if low in ("true", "false"):
        return low == "true"
    for conv in (int, float):
        try:
            return conv(s)
        except ValueError:
            pass
    return s


def write_csv(path, header, rows, comments=()):
    """Rows are written in the order given; floats with 17 significant digits."""
    with open(path, "w") as fh:
        fh.write(_comments(comments))
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) if isinstance(v, float) else str(v) for v in row) + "\n")
