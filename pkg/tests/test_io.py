import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kgfgr import io
from kgfgr.fgr import synthetic_operator
from kgfgr.normalform import SparsePolynomial, stock_quartic
from kgfgr.resonance import FrequencySpec, ResonancePair, lambda_star, enumerate_lambda

P = ResonancePair


def test_fmt_roundtrips_floats():
    for x in (0.1, 1 / 3, 1e-300, -2.5e17, 0.45):
        assert float(io.fmt(x)) == x


@settings(max_examples=200)
@given(st.floats(allow_nan=False, allow_infinity=False))
def test_fmt_roundtrip_property(x):
    assert float(io.fmt(x)) == x


def test_atomic_write(tmp_path):
    path = tmp_path / "sub" / "file.txt"
    io.atomic_write(path, "first\n")
    io.atomic_write(path, "second\n")
    assert path.read_text() == "second\n"
    assert os.listdir(path.parent) == ["file.txt"]


def test_atomic_write_leaves_target_on_failure(tmp_path):
    path = tmp_path / "file.txt"
    io.atomic_write(path, "keep\n")

    class Boom:
        def __str__(self):
            raise RuntimeError

    with pytest.raises(TypeError):
        io.atomic_write(path, Boom())
    assert path.read_text() == "keep\n"
    assert os.listdir(tmp_path) == ["file.txt"]


def test_frequency_roundtrip(tmp_path):
    f = FrequencySpec(1.0, (0.45, 0.25), (2, 1))
    io.write_frequency(tmp_path / "f.toml", f)
    g = io.read_frequency(tmp_path / "f.toml")
    assert g.omegas == f.omegas and g.multiplicities == f.multiplicities and g.m == f.m
    (tmp_path / "t.toml").write_text("[frequency]\nm = 1.0\nomegas = [0.8]\n")
    assert io.read_frequency(tmp_path / "t.toml").omegas == (0.8,)
    with pytest.raises(ValueError):
        io.freq_from_mapping({"m": 1.0})


def test_parse_pair():
    assert io.parse_pair("4,0;0,1") == P((4, 0), (0, 1))
    assert io.parse_pair("(3, 0); (0, 0)") == P((3, 0), (0, 0))
    with pytest.raises(ValueError):
        io.parse_pair("4,0")
    with pytest.raises(ValueError):
        io.parse_pair("4,0;1")


def test_pairs_roundtrip(tmp_path, bad_freq):
    full = enumerate_lambda(bad_freq, 5)
    star = lambda_star(bad_freq, 5)
    io.atomic_write(tmp_path / "pairs.txt", io.format_pairs(full, bad_freq, star))
    got, got_star = io.read_pairs(tmp_path / "pairs.txt")
    assert got == sorted(full) and set(got_star) == set(star)
    line = io.format_pair_line(P((4, 0), (0, 1)), bad_freq, True)
    assert line == "lambda=[4, 0];rho=[0, 1];dot=1.0700000000000001;minimal=1;bad_modes=[2]"
    (tmp_path / "bad.txt").write_text("lambda=[1,x];rho=[0,0]\n")
    with pytest.raises(ValueError):
        io.read_pairs(tmp_path / "bad.txt")


def test_polynomial_roundtrip(tmp_path):
    H = stock_quartic() + SparsePolynomial.monomial((0.45, 0.25), (1, 0), (0, 2), 0.3 - 1e-7j)
    io.write_polynomial(tmp_path / "h.txt", H, header=["stock quartic"])
    text = (tmp_path / "h.txt").read_text()
    assert text.startswith("# stock quartic\n# omegas = [0.45000000000000001, 0.25]\n")
    G = io.read_polynomial(tmp_path / "h.txt")
    assert G.terms == H.terms
    (tmp_path / "n.txt").write_text("mu=[1] nu=[0] re=1 im=0\n")
    with pytest.raises(ValueError):
        io.read_polynomial(tmp_path / "n.txt")
    assert io.read_polynomial(tmp_path / "n.txt", omegas=[0.5])[(1,), (0,)] == 1.0
    (tmp_path / "m.txt").write_text("# omegas = [0.5]\nmu=1 nu=0\n")
    with pytest.raises(ValueError):
        io.read_polynomial(tmp_path / "m.txt")


def test_operator_and_couplings_roundtrip(tmp_path):
    op = synthetic_operator(dim=20, seed=4)
    io.write_operator(tmp_path / "op.npz", op)
    op2 = io.read_operator(tmp_path / "op.npz")
    assert np.array_equal(op2.eigenvalues, op.eigenvalues)
    assert np.array_equal(op2.b_squared, op.b_squared) and op2.m == op.m
    cpl = {((0, 0), (4, 0)): np.arange(20.0) + 1j, ((1, 0), (0, 0)): np.ones(20)}
    io.write_couplings(tmp_path / "c.npz", cpl)
    got = io.read_couplings(tmp_path / "c.npz")
    assert set(got) == set(cpl)
    for k in cpl:
        assert np.array_equal(got[k], cpl[k])
    np.savez(tmp_path / "x.npz", junk=np.ones(3))
    with pytest.raises(ValueError):
        io.read_couplings(tmp_path / "x.npz")
    with pytest.raises(ValueError):
        io.read_operator(tmp_path / "x.npz")


def test_csv_roundtrip(tmp_path):
    cols = {"t": np.array([0.0, 1.0, 1e12]), "X_1": np.array([1e-4, 1 / 3, 2e-300])}
    io.write_csv(tmp_path / "a.csv", cols)
    got = io.read_csv(tmp_path / "a.csv")
    assert list(got) == ["t", "X_1"]
    for k in cols:
        assert np.array_equal(got[k], cols[k])
    assert io.format_csv({"a": []}) == "a\n"
