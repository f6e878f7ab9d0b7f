import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import sparse

from tensamp import io
from tensamp.tensor_core import CpFactors, SampledTensor

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@given(st.lists(finite, min_size=1, max_size=20))
def test_fmt_round_trips(xs):
    assert [float(io.fmt(x)) for x in xs] == xs


def test_sampled_round_trip(tmp_path):
    idx = np.array([[0, 1, 2], [3, 3, 0]])
    s = SampledTensor(6, idx, [0.1, -1 / 3], [0.5, 1e-7])
    path = tmp_path / "s.csv"
    io.write_sampled(path, s, comments=["seed=4"])
    back = io.read_sampled(path)
    # n survives even though index 5 is never sampled
    assert back.n == 6
    np.testing.assert_array_equal(back.idx, s.idx)
    assert back.values.tobytes() == s.values.tobytes()
    assert back.p_hat.tobytes() == s.p_hat.tobytes()


def test_sampled_empty_and_errors(tmp_path):
    path = tmp_path / "e.csv"
    io.write_sampled(path, SampledTensor(3, np.zeros((0, 3), int), [], []))
    assert len(io.read_sampled(path)) == 0 and io.read_sampled(path).n == 3
    path.write_text("a,b\n")
    with pytest.raises(io.FormatError):
        io.read_sampled(path)
    path.write_text(io.SAMPLED_HEADER + "\n0,0,0,1.0\n")
    with pytest.raises(io.FormatError):
        io.read_sampled(path)


def test_factors_round_trip(tmp_path, rng):
    U = np.linalg.qr(rng.standard_normal((7, 3)))[0]
    f = CpFactors(U, [3.0, 2.0, 0.1])
    path = tmp_path / "f.csv"
    io.write_factors(path, f)
    g = io.read_factors(path)
    assert g.U.tobytes() == f.U.tobytes()
    assert g.sigma.tobytes() == f.sigma.tobytes()
    path.write_text(io.FACTOR_SIGMA_HEADER + "\n0,1.0\n")
    with pytest.raises(io.FormatError):
        io.read_factors(path)


def test_matrix_dense_and_sparse(tmp_path, rng):
    X = rng.standard_normal((5, 4))
    X[X < 0.3] = 0.0
    X[4] = 0.0
    X[:, 3] = 0.0
    dense_p = tmp_path / "d.csv"
    io.write_matrix(dense_p, X)
    np.testing.assert_array_equal(io.read_matrix(dense_p), X)
    sp_p = tmp_path / "s.csv"
    io.write_matrix(sp_p, sparse.csr_matrix(X), sparse_format=True)
    back = io.read_matrix(sp_p)
    assert sparse.issparse(back) and back.shape == (5, 4)
    np.testing.assert_array_equal(back.toarray(), X)
    (tmp_path / "z.csv").write_text("# nothing\n")
    with pytest.raises(io.FormatError):
        io.read_matrix(tmp_path / "z.csv")


def test_tns3_exact_bytes(tmp_path):
    T = np.arange(8, dtype=float).reshape(2, 2, 2) / 7
    path = tmp_path / "t.tns3"
    io.write_tns3(path, T)
    raw = path.read_bytes()
    assert raw[:8] == b"TNS3" + struct.pack("<I", 2)
    assert raw[8:] == T.astype("<f8").tobytes()
    assert io.read_tns3(path).tobytes() == T.tobytes()
    with pytest.raises(io.FormatError):
        io.write_tns3(path, np.zeros((2, 3, 2)))
    path.write_bytes(raw[:-8])
    with pytest.raises(io.FormatError):
        io.read_tns3(path)
    path.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(io.FormatError):
        io.read_tns3(path)


def test_caps_round_trip(tmp_path):
    path = tmp_path / "c.csv"
    caps = np.array([0.5, 1 / 3, 2.0])
    io.write_caps(path, caps)
    assert io.read_caps(path).tobytes() == caps.tobytes()
    path.write_text("row,cap\n1,2.0\n0,1.0\n")
    np.testing.assert_array_equal(io.read_caps(path), [1.0, 2.0])
    path.write_text("x\n")
    with pytest.raises(io.FormatError):
        io.read_caps(path)


def test_parse_config_grammar():
    text = """
    # comment line
    n = 30        # trailing comment
    a = 0.5
    dists = tensorls, uniform,
    name = run one
    flag = True
    """
    cfg = io.parse_config(text)
    assert cfg == {"n": 30, "a": 0.5, "dists": ["tensorls", "uniform"], "name": "run one", "flag": True}
    assert isinstance(cfg["n"], int)
    with pytest.raises(io.FormatError):
        io.parse_config("justakey")
    with pytest.raises(io.FormatError):
        io.parse_config(" = 3")


def test_write_csv(tmp_path):
    path = tmp_path / "r.csv"
    io.write_csv(path, ["d", "m", "err"], [("l2", 10, 0.1), ("uniform", 20, 1 / 3)], comments=["seed0=0"])
    assert path.read_text() == "# seed0=0\nd,m,err\nl2,10,0.10000000000000001\nuniform,20,0.33333333333333331\n"
