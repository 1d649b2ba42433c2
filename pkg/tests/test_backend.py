import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special, stats

from mvassoc import _pykernels as py
from mvassoc._backend import compiled_kernels

cy = compiled_kernels()
needs_ext = pytest.mark.skipif(cy is None, reason="compiled extension not built")
BACKENDS = [py] + ([cy] if cy is not None else [])
GRID = np.linspace(0, 1, 11)


@needs_ext
def test_chi2_sf_vs_scipy():
    worst = 0.0
    for df in (0.3, 0.5, 1.0, 1.7, 3.0, 10.0, 47.5, 120.0, 250.0):
        x = np.geomspace(1e-8, 2000, 400)
        ref = special.chdtrc(df, x)
        got = cy.chi2_sf_array(df, x)
        ok = ref > 1e-300
        worst = max(worst, float(np.max(np.abs(got[ok] / ref[ok] - 1))))
    assert worst < 1e-12


@needs_ext
@pytest.mark.parametrize("df", [0.4, 1.0, 2.0, 3.3, 17.0, 150.0])
@pytest.mark.parametrize("p", [0.9, 0.5, 0.05, 1e-4, 1e-30, 1e-250])
def test_chi2_isf(df, p):
    q = cy.chi2_isf_scalar(df, p)
    assert q == pytest.approx(special.chdtri(df, p), rel=1e-10)
    assert special.chdtrc(df, q) == pytest.approx(p, rel=1e-10)


@pytest.mark.parametrize("kern", BACKENDS)
@pytest.mark.parametrize("df, nc", [(1.0, 0.5), (3.0, 4.0), (2.5, 30.0), (10.0, 0.01)])
def test_ncx2_sf(kern, df, nc):
    for x in (0.5, df + nc, 3 * (df + nc)):
        assert kern.ncx2_sf(df, nc, x) == pytest.approx(stats.ncx2.sf(x, df, nc), rel=1e-8)


@pytest.mark.parametrize("deg", range(0, 23))
def test_gk15_polynomial_exactness(deg):
    # the 15-point Kronrod rule integrates polynomials up to degree 22 exactly
    val, _ = py._gk15(lambda x: x ** deg, -1.0, 2.0)
    exact = (2.0 ** (deg + 1) - (-1.0) ** (deg + 1)) / (deg + 1)
    assert val == pytest.approx(exact, rel=1e-13, abs=1e-13)


def test_adaptive_gk_kinked():
    f = lambda x: np.abs(x - 0.3) * np.exp(-x)
    val, err, ok = py.adaptive_gk(f, [0.0, 0.3, 2.0], 1e-13)
    from scipy.integrate import quad

    ref = quad(f, 0, 2, points=[0.3], epsabs=1e-14)[0]
    assert ok and val == pytest.approx(ref, abs=1e-12)


@pytest.mark.parametrize("kern", BACKENDS)
@pytest.mark.parametrize(
    "tail, code, idx",
    [
        (b"0\t1\t2\n", 0, -1),
        (b"0\tNA\t2\r\n", 1, -1),
        (b"0\t1\n", -2, 2),
        (b"0\t1\t2\t1\n", -2, 4),
        (b"0\tx\t2\n", -1, 1),
        (b"0\t\t2\n", -1, 1),
        (b"0\t1\t2.5\n", -3, 2),
        (b"-0.1\t1\t2\n", -3, 0),
        (b"0\t1e0\t.5\n", 0, -1),
        (b"0\t1-\t1\n", -1, 1),
    ],
)
def test_parse_dosages(kern, tail, code, idx):
    out = np.empty(3)
    assert tuple(kern.parse_dosages(tail, 3, out)) == (code, idx)


@needs_ext
def test_parse_dosages_agree_on_values():
    out_a, out_b = np.empty(4), np.empty(4)
    line = b"0.125\t1.99999\tNA\t2\n"
    assert cy.parse_dosages(line, 4, out_a) == py.parse_dosages(line, 4, out_b)
    np.testing.assert_array_equal(out_a, out_b)


@needs_ext
@settings(max_examples=40, deadline=None)
@given(
    eigs=st.lists(st.floats(0.01, 5.0), min_size=2, max_size=8),
    t_m=st.floats(0.0, 60.0),
    t_s=st.floats(0.0, 200.0),
)
def test_usat_backends_agree(eigs, t_m, t_s):
    c = np.array(eigs)
    a = py.usat_core(c, t_m, t_s, GRID)
    b = cy.usat_core(c, t_m, t_s, GRID)
    assert a[4] == b[4] == 0
    assert a[2] == b[2] or abs(a[0][a[2]] - b[0][b[2]]) <= 1e-12 * a[0][a[2]] + 1e-300
    np.testing.assert_allclose(b[0], a[0], rtol=1e-9, atol=1e-300)
    assert b[3] == pytest.approx(a[3], rel=1e-8)


@needs_ext
def test_batch_backends_agree():
    rng = np.random.default_rng(3)
    base = np.array([0.02, 0.05, 0.2])
    xtx = rng.uniform(100, 2000, 50)
    t_m = rng.chisquare(3, 50) * rng.uniform(0.5, 4, 50)
    t_s = t_m * xtx * base.mean() * rng.uniform(0.5, 2, 50)
    for fn in ("usat_batch", "min_p_batch"):
        ra, rb = getattr(py, fn)(base, xtx, t_m, t_s, GRID), getattr(cy, fn)(base, xtx, t_m, t_s, GRID)
        for u, v in zip(np.atleast_2d(ra) if fn == "min_p_batch" else ra,
                        np.atleast_2d(rb) if fn == "min_p_batch" else rb):
            np.testing.assert_allclose(v, u, rtol=1e-8)


@pytest.mark.parametrize("kern", BACKENDS)
def test_liu_isf_roundtrip(kern):
    pr = kern.liu_params(np.array([3.0, 1.0, 0.4, 0.1]))
    for p in (0.5, 1e-3, 1e-40, 1e-280):
        q, status = kern.liu_isf(*pr, p)
        assert status == 0
        assert kern.liu_sf(*pr, q) == pytest.approx(p, rel=1e-10)


def test_pure_python_env():
    code = "from mvassoc._backend import NAME; print(NAME)"
    env = dict(os.environ, MVASSOC_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
    env.pop("MVASSOC_PURE_PYTHON")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == ("cython" if cy is not None else "python")
