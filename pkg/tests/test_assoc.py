import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special, stats

from mvassoc.assoc import (
    Method,
    WeightGrid,
    fisher_combine,
    manova_test,
    marginal_tests,
    minp_combine,
    omega_eigs,
    ssu_test,
    usat_from_parts,
    usat_pvalue,
    usat_test,
)
from mvassoc.errors import DegenerateTraits, MonomorphicVariant
from mvassoc.model import TraitMatrix, build_sufficient_stats
from mvassoc.quadform import liu_fit, qf_survival, ssu_params

from conftest import correlated_traits


def _dataset(n, k, rho, seed, effect=0.0):
    rng = np.random.default_rng(seed)
    x = rng.binomial(2, 0.3, n).astype(float)
    y = correlated_traits(n, k, rho, seed + 1)
    y[:, 0] += effect * x
    return TraitMatrix.from_raw(y), x


class TestManova:
    def test_zero_beta(self):
        y = TraitMatrix.from_raw(np.array([[1.0, 1.0], [-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0]]))
        x = np.array([0.0, 0.0, 1.0, 1.0])
        assert np.allclose(y.values.T @ (x - x.mean()), 0.0)
        out = manova_test(build_sufficient_stats(y, x))
        assert out.statistic == pytest.approx(0.0, abs=1e-12)
        assert out.p_value == pytest.approx(1.0)

    def test_univariate_reduction(self, small_data):
        tm, x = small_data
        y1 = TraitMatrix.from_raw(tm.values[:, 0])
        out = manova_test(build_sufficient_stats(y1, x))
        r = np.corrcoef(tm.values[:, 0], x)[0, 1]
        assert out.statistic == pytest.approx(-tm.n * math.log(1 - r * r), rel=1e-10)
        assert out.p_value == pytest.approx(special.chdtrc(1, out.statistic))

    def test_determinant_definition(self, small_data):
        s = build_sufficient_stats(*small_data)
        out = manova_test(s)
        ref = -s.n * math.log(np.linalg.det(s.e_mat) / np.linalg.det(s.h_mat + s.e_mat))
        assert out.statistic == pytest.approx(ref, rel=1e-10)
        assert out.method is Method.MANOVA

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_recoding_invariance(self, seed):
        rng = np.random.default_rng(seed)
        raw = rng.standard_normal((90, 3))
        x = rng.binomial(2, 0.3, 90).astype(float)
        if np.ptp(x) == 0:
            return
        a_mat = rng.standard_normal((3, 3)) + 2.5 * np.eye(3)
        base = build_sufficient_stats(TraitMatrix.from_raw(raw), x)
        rec = build_sufficient_stats(TraitMatrix.from_raw(raw @ a_mat), x)
        assert manova_test(rec).statistic == pytest.approx(manova_test(base).statistic, rel=1e-8)
        # SSU ignores the trait covariance, so a non-orthogonal recoding changes it
        assert ssu_test(rec).statistic != pytest.approx(ssu_test(base).statistic, rel=1e-6)


class TestSsu:
    def test_zero_score(self):
        y = TraitMatrix.from_raw(np.array([[1.0, 1.0], [-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0]]))
        s = build_sufficient_stats(y, np.array([0.0, 0.0, 1.0, 1.0]))
        out = ssu_test(s)
        p = ssu_params(s.cov_um_eigs)
        assert out.statistic == pytest.approx(0.0, abs=1e-20)
        assert out.p_value == (special.chdtrc(p.d, -p.b / p.a) if p.b < 0 else 1.0)
        assert out.p_value > 0.9

    def test_two_independent_scores(self):
        tm, x = _dataset(2000, 2, 0.0, 31)
        s = build_sufficient_stats(tm, x)
        xc = x - x.mean()
        u = tm.values.T @ xc
        assert ssu_test(s).statistic == pytest.approx((u[0] ** 2 + u[1] ** 2) / s.sigma0_sq**2, rel=1e-12)

    def test_p_value_formula(self, small_data):
        s = build_sufficient_stats(*small_data)
        out = ssu_test(s)
        p = ssu_params(s.cov_um_eigs)
        assert out.p_value == pytest.approx(special.chdtrc(p.d, (out.statistic - p.b) / p.a), rel=1e-12)


class TestMarginal:
    def test_ols_oracle(self, small_data):
        tm, x = small_data
        xc = x - x.mean()
        res = marginal_tests(tm, x)
        assert len(res) == 3
        for k, r in enumerate(res):
            yk = tm.values[:, k]
            slope = yk @ xc / (xc @ xc)
            assert r.detail["slope"] == pytest.approx(slope, rel=1e-12)
            lr = stats.linregress(x, yk)
            assert r.p_value == pytest.approx(lr.pvalue, rel=1e-8)
            assert r.statistic == pytest.approx(lr.slope / lr.stderr, rel=1e-8)

    def test_orthogonal(self):
        y = np.array([[1.0], [-1.0], [1.0], [-1.0]])
        res = marginal_tests(TraitMatrix.from_raw(y), np.array([0.0, 0.0, 1.0, 1.0]))
        assert res[0].statistic == 0.0
        assert res[0].p_value == 1.0

    def test_perfect_fit(self):
        x = np.array([0.0, 1.0, 2.0, 1.0, 0.0, 2.0, 1.0])
        res = marginal_tests(TraitMatrix.from_raw(x), x)
        assert res[0].detail["slope"] == pytest.approx(1.0)
        assert res[0].p_value < 1e-12

    def test_monomorphic(self, small_data):
        with pytest.raises(MonomorphicVariant):
            marginal_tests(small_data[0], np.zeros(small_data[0].n))


class TestCombinations:
    def test_fisher_all_one(self):
        out = fisher_combine([1.0, 1.0, 1.0])
        assert out.statistic == 0.0
        assert out.p_value == 1.0

    def test_fisher_identity_k1(self):
        assert fisher_combine([0.05]).p_value == pytest.approx(0.05, rel=1e-12)

    def test_fisher_sum_of_logs(self):
        out = fisher_combine([0.1, 0.2])
        assert out.statistic == pytest.approx(-2 * (math.log(0.1) + math.log(0.2)))
        assert out.p_value == pytest.approx(special.chdtrc(4, out.statistic))

    def test_fisher_zero(self):
        out = fisher_combine([0.0, 0.3])
        assert out.statistic == math.inf
        assert out.p_value == 0.0

    def test_fisher_range(self):
        with pytest.raises(ValueError):
            fisher_combine([1.2])

    def test_minp(self):
        assert minp_combine([0.01, 0.5]).p_value == pytest.approx(0.02)
        assert minp_combine([0.7, 0.7, 0.7]).p_value == 1.0
        assert minp_combine([0.1, 0.1]).p_value == pytest.approx(0.2)


class TestOmegaEigs:
    def test_endpoints(self):
        c = np.array([3.0, 1.0, 0.2])
        assert np.allclose(omega_eigs(c, 1.0), 1.0)
        assert np.allclose(omega_eigs(c, 0.0), c)

    def test_affine(self):
        assert np.allclose(omega_eigs([3.0, 1.0], 0.5), [2.0, 1.0])


class TestWeightGrid:
    def test_default(self):
        g = WeightGrid.default()
        assert len(g) == 11
        assert g.array[0] == 0.0 and g.array[-1] == 1.0

    @pytest.mark.parametrize("bad", [(0.1, 1.0), (0.0, 0.9), (0.0, 0.5, 0.5, 1.0), (0.0,)])
    def test_invalid(self, bad):
        with pytest.raises(ValueError):
            WeightGrid(bad)


class TestUsat:
    def test_endpoint_consistency(self, small_data):
        s = build_sufficient_stats(*small_data)
        out = usat_test(s)
        c = s.cov_um_eigs
        t_m, t_s = out.detail["t_m"], out.detail["t_s"]
        assert t_m == pytest.approx(manova_test(s).statistic, rel=1e-12)
        assert t_s == pytest.approx(ssu_test(s).statistic, rel=1e-12)
        p_om = out.detail["p_omegas"]
        assert p_om[-1] == pytest.approx(special.chdtrc(3, t_m), rel=1e-10)
        assert p_om[0] == pytest.approx(qf_survival(liu_fit(c), t_s), rel=1e-12)
        assert out.statistic == pytest.approx(p_om.min())
        assert out.detail["omega_star"] == pytest.approx(np.linspace(0, 1, 11)[np.argmin(p_om)])

    def test_per_omega_pvalues(self, small_data):
        s = build_sufficient_stats(*small_data)
        out = usat_test(s)
        for w, p in zip(np.linspace(0, 1, 11), out.detail["p_omegas"]):
            t = w * out.detail["t_m"] + (1 - w) * out.detail["t_s"]
            assert p == pytest.approx(qf_survival(liu_fit(omega_eigs(s.cov_um_eigs, w)), t), rel=1e-12)

    def test_two_point_grid(self, small_data):
        s = build_sufficient_stats(*small_data)
        out = usat_test(s, grid=(0.0, 1.0))
        p_m = qf_survival(liu_fit(np.ones(3)), out.detail["t_m"])
        p_s = qf_survival(liu_fit(s.cov_um_eigs), out.detail["t_s"])
        assert out.statistic == pytest.approx(min(p_m, p_s))

    def test_lower_bound_half(self):
        p = usat_pvalue(0.5, [1.0, 1.0])
        assert 0.5 <= p <= 1.0

    def test_k1_rejected(self):
        with pytest.raises(ValueError):
            usat_pvalue(0.1, [1.0])

    def test_k1_reduces_to_manova(self):
        tm, x = _dataset(200, 1, 0.0, 4, effect=0.2)
        s = build_sufficient_stats(tm, x)
        assert usat_test(s).p_value == pytest.approx(manova_test(s).p_value, rel=1e-12)

    def test_two_point_grid_joint_mc(self):
        # p = 1 - Pr(T_S < q0, T_M < q1) with (T_M, T_S) from the joint null of a fixed dataset shape
        c = np.array([1.6, 0.9, 0.5])
        t = 0.02
        grid = (0.0, 1.0)
        q0 = liu_fit(c).isf(t)
        q1 = liu_fit(np.ones(3)).isf(t)
        rng = np.random.default_rng(99)
        # U ~ N(0, C) with C = diag(c); T_S = |U|^2, T_M = U'C^{-1}U
        z = rng.standard_normal((1_000_000, 3))
        t_s = (z * z) @ c
        t_m = (z * z).sum(axis=1)
        emp = 1.0 - np.mean((t_s < q0) & (t_m < q1))
        se = math.sqrt(emp * (1 - emp) / 1_000_000)
        assert usat_pvalue(t, c, grid=grid) == pytest.approx(emp, abs=4 * se + 2e-3)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(0.05, 10.0), min_size=2, max_size=6), st.floats(1e-12, 0.99))
    def test_bounds(self, c, t):
        p = usat_pvalue(t, c)
        assert t - 1e-6 <= p <= min(1.0, 11 * t) + 1e-6

    @settings(max_examples=25, deadline=None)
    @given(st.lists(st.floats(0.05, 10.0), min_size=2, max_size=5))
    def test_monotone_in_t(self, c):
        ts = np.geomspace(1e-10, 0.9, 25)
        ps = [usat_pvalue(t, c) for t in ts]
        assert all(b >= a - 1e-12 for a, b in zip(ps, ps[1:]))

    def test_tiny_pvalues_stay_positive(self):
        out = usat_from_parts(400.0, 900.0, np.array([3.0, 1.0, 0.5]))
        assert 0.0 < out.statistic <= out.p_value <= 11 * out.statistic

    def test_degenerate_traits(self):
        y = np.random.default_rng(1).standard_normal((50, 1))
        with pytest.raises(DegenerateTraits):
            build_sufficient_stats(TraitMatrix.from_raw(np.hstack([y, 2 * y])), np.arange(50) % 3)
