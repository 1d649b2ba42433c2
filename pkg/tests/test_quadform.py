import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special, stats

from mvassoc.errors import DegenerateDistribution
from mvassoc.quadform import liu_fit, qf_mc_sample, qf_mc_tail, qf_quantile, qf_survival, ssu_params

@pytest.fixture(scope="module")
def four_one_one_sample():
    return qf_mc_sample([4.0, 1.0, 1.0], 10_000_000, seed=21)


eig_sets = st.lists(st.floats(0.05, 20.0), min_size=1, max_size=8)


class TestSsuParams:
    def test_equal_eigenvalues(self):
        p = ssu_params([2.5] * 4)
        assert (p.a, p.b, p.d) == pytest.approx((2.5, 0.0, 4.0))

    def test_single(self):
        p = ssu_params([1.0])
        assert (p.a, p.b, p.d) == pytest.approx((1.0, 0.0, 1.0))

    def test_two_one(self):
        p = ssu_params([2.0, 1.0])
        assert p.a == pytest.approx(9 / 5, rel=1e-14)
        assert p.b == pytest.approx(2 / 9, rel=1e-14)
        assert p.d == pytest.approx(125 / 81, rel=1e-14)

    def test_two_one_moments_vs_mc(self):
        p = ssu_params([2.0, 1.0])
        q = qf_mc_sample([2.0, 1.0], 10_000_000, seed=4)
        # mean 3, variance 10, third central moment 8 * 9 = 72
        assert q.mean() == pytest.approx(p.a * p.d + p.b, abs=0.01)
        assert q.var() == pytest.approx(2 * p.a**2 * p.d, rel=0.01)
        assert stats.moment(q, 3) == pytest.approx(8 * p.a**3 * p.d, rel=0.03)

    def test_zero(self):
        with pytest.raises(DegenerateDistribution):
            ssu_params([0.0, 0.0])

    @settings(max_examples=60, deadline=None)
    @given(eig_sets)
    def test_moment_identities(self, c):
        c = np.array(c)
        p = ssu_params(c)
        assert p.a * p.d + p.b == pytest.approx(c.sum(), rel=1e-10)
        assert 2 * p.a**2 * p.d == pytest.approx(2 * (c**2).sum(), rel=1e-10)
        assert 8 * p.a**3 * p.d == pytest.approx(8 * (c**3).sum(), rel=1e-10)

    def test_sf_cdf(self):
        p = ssu_params([2.0, 1.0])
        t = np.array([0.0, 1.0, 5.0, 20.0])
        assert np.allclose(p.sf(t) + p.cdf(t), 1.0)
        assert p.sf(-1.0) == 1.0


class TestLiuFit:
    def test_equal_eigenvalues(self):
        d = liu_fit([1.0] * 5)
        assert d.liu_delta == 0.0
        assert d.liu_l == pytest.approx(5.0, rel=1e-12)

    def test_single(self):
        d = liu_fit([7.0])
        assert (d.liu_l, d.liu_delta) == pytest.approx((1.0, 0.0))

    def test_moments(self):
        d = liu_fit([4.0, 1.0, 1.0])
        assert d.mean == pytest.approx(6.0)
        assert d.variance == pytest.approx(36.0)
        assert d.mu_chi == pytest.approx(d.liu_l + d.liu_delta)
        assert d.sigma_chi == pytest.approx(math.sqrt(2 * (d.liu_l + 2 * d.liu_delta)))

    def test_skewness_matched(self):
        # chi2_l(delta) skewness equals the quadratic form's standardized third cumulant
        lam = np.array([4.0, 1.0, 1.0])
        d = liu_fit(lam)
        c2, c3 = (lam**2).sum(), (lam**3).sum()
        s1 = c3 / c2**1.5
        l, dl = d.liu_l, d.liu_delta
        skew_chi = (l + 3 * dl) / (l + 2 * dl) ** 1.5
        assert skew_chi == pytest.approx(s1, rel=1e-10)

    @pytest.mark.parametrize("prob", [0.9, 0.99, 0.999])
    def test_four_one_one_vs_mc(self, prob, four_one_one_sample):
        t = np.quantile(four_one_one_sample, prob)
        assert qf_survival(liu_fit([4.0, 1.0, 1.0]), t) == pytest.approx(1 - prob, abs=2e-3)

    @pytest.mark.parametrize("bad", [[], [0.0, 0.0], [1.0, -0.5]])
    def test_degenerate(self, bad):
        with pytest.raises(DegenerateDistribution):
            liu_fit(bad)

    @settings(max_examples=60, deadline=None)
    @given(eig_sets, st.floats(1e-3, 1e3), st.floats(0.0, 5.0))
    def test_scaling(self, lam, s, z):
        lam = np.array(lam)
        d1, d2 = liu_fit(lam), liu_fit(s * lam)
        assert d2.liu_l == pytest.approx(d1.liu_l, rel=1e-9)
        assert d2.liu_delta == pytest.approx(d1.liu_delta, rel=1e-9, abs=1e-9)
        t = d1.mean + z * math.sqrt(d1.variance)
        assert qf_survival(d2, s * t) == pytest.approx(qf_survival(d1, t), rel=1e-9, abs=1e-12)


class TestSurvival:
    def test_fixed_point(self):
        d = liu_fit([1.0] * 3)
        assert qf_survival(d, 3.0) == pytest.approx(special.chdtrc(3, 3.0), rel=1e-12)

    def test_chi2_2(self):
        d = liu_fit([1.0, 1.0])
        assert qf_survival(d, 5.991) == pytest.approx(math.exp(-5.991 / 2), rel=1e-12)
        assert qf_survival(d, -2.0 * math.log(0.05)) == pytest.approx(0.05, abs=1e-6)

    def test_two_one_vs_mc(self):
        q = qf_mc_sample([2.0, 1.0], 2_000_000, seed=2)
        assert qf_survival(liu_fit([2.0, 1.0]), np.quantile(q, 0.95)) == pytest.approx(0.05, abs=2e-3)

    @pytest.mark.parametrize("k", [1, 2, 3, 7, 20])
    def test_equal_eigenvalues_exact(self, k):
        d = liu_fit([2.0] * k)
        t = np.linspace(0.1, 120, 50)
        assert np.allclose(qf_survival(d, t), special.chdtrc(k, t / 2.0), rtol=1e-10, atol=0)

    def test_below_support(self):
        assert qf_survival(liu_fit([1.0, 3.0]), -5.0) == 1.0

    def test_array_and_scalar_agree(self):
        d = liu_fit([3.0, 1.0, 0.5])
        t = np.array([0.5, 4.0, 30.0])
        assert np.allclose(qf_survival(d, t), [qf_survival(d, v) for v in t], rtol=1e-14)

    def test_deep_tail_positive(self):
        d = liu_fit([3.0, 1.0])
        p = qf_survival(d, 2000.0)
        assert 0.0 < p < 1e-150

    @settings(max_examples=40, deadline=None)
    @given(eig_sets)
    def test_monotone(self, lam):
        d = liu_fit(lam)
        t = np.linspace(0, d.mean + 20 * math.sqrt(d.variance), 200)
        s = qf_survival(d, t)
        assert np.all(np.diff(s) <= 1e-15)
        assert np.all((s >= 0) & (s <= 1))


class TestQuantile:
    @pytest.mark.parametrize("lam", [[1.0], [2.0, 1.0], [4.0, 1.0, 1.0], [9.0, 3.0, 1.0, 0.2]])
    @pytest.mark.parametrize("p", [0.5, 1e-3, 1e-8])
    def test_round_trip(self, lam, p):
        d = liu_fit(lam)
        assert qf_survival(d, qf_quantile(d, p)) == pytest.approx(p, abs=1e-10, rel=1e-10)

    def test_chi2_1(self):
        assert qf_quantile(liu_fit([1.0]), 0.05) == pytest.approx(3.8415, abs=1e-3)

    def test_monotone(self):
        d = liu_fit([3.0, 2.0, 0.5])
        qs = [qf_quantile(d, p) for p in (1e-10, 1e-4, 0.01, 0.3, 0.9)]
        assert all(a > b for a, b in zip(qs, qs[1:]))

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.1])
    def test_domain(self, p):
        with pytest.raises(ValueError):
            qf_quantile(liu_fit([1.0]), p)


class TestMonteCarlo:
    def test_chi2_1_moments(self):
        q = qf_mc_sample([1.0], 1_000_000, seed=1)
        assert q.mean() == pytest.approx(1.0, abs=0.005)
        assert q.var() == pytest.approx(2.0, abs=0.02)

    def test_two_one_moments(self):
        q = qf_mc_sample([2.0, 1.0], 1_000_000, seed=1)
        assert q.mean() == pytest.approx(3.0, abs=0.015)
        assert q.var() == pytest.approx(10.0, rel=0.01)

    def test_deterministic(self):
        assert np.array_equal(qf_mc_sample([2.0, 1.0], 10, 3), qf_mc_sample([2.0, 1.0], 10, 3))
        assert not np.array_equal(qf_mc_sample([2.0, 1.0], 10, 3), qf_mc_sample([2.0, 1.0], 10, 4))

    def test_draws_validated(self):
        with pytest.raises(ValueError):
            qf_mc_sample([1.0], 0, 1)

    def test_pooled_tail(self):
        # pooled chi-square draws of equal eigenvalues give the analytic tail
        t = np.array([2.0, 6.0, 12.0])
        frac = qf_mc_tail([1.0, 1.0, 1.0, 1.0], t, 400_000, seed=6, chunk=100_000)
        se = np.sqrt(special.chdtrc(4, t) * (1 - special.chdtrc(4, t)) / 400_000)
        assert np.all(np.abs(frac - special.chdtrc(4, t)) < 4 * se)
