import math

import numpy as np
import pytest

from mvassoc.errors import InvalidDesign
from mvassoc.model import TraitMatrix, build_sufficient_stats
from mvassoc.assoc import manova_test, ssu_test, usat_test
from mvassoc.sim import (
    CorrelationSpec,
    SimDesign,
    TheoremScenario,
    _draw_base,
    _cross,
    block_limits,
    complete_limit,
    default_scenarios,
    effect_from_variance_explained,
    partial_beats_complete,
    partial_limit,
    replicate_rng,
    run_power_study,
    run_type1_study,
    simulate_dataset,
    simulate_genotype,
    simulate_phenotypes,
    stats_from_cross,
    symmetric_root,
    two_trait_gap_limit,
    verify_scenario,
    verify_two_trait_gap,
)


class TestGenotypes:
    def test_moments(self):
        d = simulate_genotype(1_000_000, 0.2, np.random.default_rng(1))
        n = d.size
        assert abs(d.mean() - 0.4) < 3 * math.sqrt(0.32 / n)
        assert abs(d.var() - 0.32) < 3 * math.sqrt(np.var((d - 0.4) ** 2) / n)

    def test_half(self):
        d = simulate_genotype(400_000, 0.5, np.random.default_rng(2))
        for v in (0, 2):
            assert abs(np.mean(d == v) - 0.25) < 3 * math.sqrt(0.25 * 0.75 / d.size)

    def test_seeded(self):
        a = simulate_genotype(100, 0.3, np.random.default_rng(5))
        b = simulate_genotype(100, 0.3, np.random.default_rng(5))
        assert np.array_equal(a, b)


@pytest.mark.parametrize("h2, maf, beta", [(0.002, 0.2, 0.25), (0.005, 0.2, 0.395), (0.005, 0.05, 0.725)])
def test_effect_sizes(h2, maf, beta):
    assert round(effect_from_variance_explained(h2, 10.0, maf), 3) == beta


def test_effect_size_validation():
    with pytest.raises(InvalidDesign):
        effect_from_variance_explained(1.5, 10.0, 0.2)


class TestCorrelation:
    def test_cs(self):
        m = CorrelationSpec("CS", 0.3).matrix(3)
        assert np.allclose(m, [[1, 0.3, 0.3], [0.3, 1, 0.3], [0.3, 0.3, 1]])

    def test_ar1(self):
        m = CorrelationSpec("AR1", 0.5).matrix(3)
        assert m[0, 2] == pytest.approx(0.25)

    def test_block(self):
        m = CorrelationSpec("BLOCK_CS", 0.6).matrix(10)
        assert np.allclose(m[:8, :8][~np.eye(8, dtype=bool)], 0.6)
        assert np.allclose(m[8:, :8], 0.0)

    def test_cs_not_pd(self):
        with pytest.raises(InvalidDesign):
            CorrelationSpec("CS", -0.6).matrix(3)

    def test_rho_range(self):
        with pytest.raises(InvalidDesign):
            CorrelationSpec("CS", 1.0)


class TestPhenotypes:
    def test_null_covariance(self):
        design = SimDesign(n=100_000, K=3)
        rng = np.random.default_rng(3)
        y = simulate_phenotypes(simulate_genotype(design.n, 0.2, rng), design, rng)
        cov = np.cov(y.T)
        se = 10.0 * math.sqrt(2.0 / design.n)
        assert np.all(np.abs(np.diag(cov) - 10.0) < 3 * se)
        assert np.all(np.abs(cov[~np.eye(3, dtype=bool)]) < 3 * 10.0 / math.sqrt(design.n))

    def test_correlation(self):
        design = SimDesign(n=100_000, K=2, corr=CorrelationSpec("CS", 0.8))
        x, y = simulate_dataset(design, 0)
        assert np.corrcoef(y.T)[0, 1] == pytest.approx(0.8, abs=3 * (1 - 0.64) / math.sqrt(design.n))

    def test_associated_total_variance(self):
        design = SimDesign(n=200_000, K=2, effect_size=0.25, assoc_pattern=(1.0, 0.0))
        assert design.residual_var()[0] == pytest.approx(9.98)
        x, y = simulate_dataset(design, 1)
        assert np.var(y[:, 0]) == pytest.approx(10.0, abs=3 * 10 * math.sqrt(2 / design.n))
        assert np.mean(y[:, 1]) == pytest.approx(1.0, abs=0.05)

    def test_invalid_effect(self):
        with pytest.raises(InvalidDesign):
            SimDesign(n=100, K=2, effect_size=10.0, assoc_pattern=(1.0, 1.0))

    def test_deterministic(self):
        design = SimDesign(n=500, K=3, corr=CorrelationSpec("AR1", 0.4), seed=12)
        a = simulate_dataset(design, 7)
        b = simulate_dataset(design, 7)
        assert all(np.array_equal(u, v) for u, v in zip(a, b))
        assert not np.array_equal(a[1], simulate_dataset(design, 8)[1])

    def test_symmetric_root_permutation_equivariant(self):
        cov = CorrelationSpec("AR1", 0.5).matrix(4) * 3.0
        perm = [2, 0, 3, 1]
        r = symmetric_root(cov)
        rp = symmetric_root(cov[np.ix_(perm, perm)])
        assert np.allclose(rp, r[np.ix_(perm, perm)])
        assert np.allclose(r @ r, cov)

    def test_covariance_converges(self):
        design = SimDesign(n=10, K=3, corr=CorrelationSpec("CS", 0.5))
        target = design.noise_cov()
        dist = []
        for n in (1_000, 10_000, 100_000):
            d = []
            for rep in range(10):
                rng = replicate_rng(31, rep)
                y = simulate_phenotypes(np.zeros(n), design, rng)
                d.append(np.linalg.norm(np.cov(y.T) - target))
            dist.append(np.mean(d))
        assert dist[0] > dist[1] > dist[2]
        # O(1/sqrt(n)): each tenfold increase shrinks the error by about sqrt(10)
        for a, b in zip(dist, dist[1:]):
            assert 1.8 < a / b < 5.5


class TestReplicateCore:
    def test_cross_matches_simulated_dataset(self):
        design = SimDesign(n=800, K=3, effect_size=0.4, assoc_pattern=(1.0, 0.0, -1.0),
                           corr=CorrelationSpec("CS", 0.5), seed=4)
        x, y = simulate_dataset(design, 2)
        base = _draw_base(design.n, design.K, design.maf, design.seed, 2)
        yty, yx = _cross(base, symmetric_root(design.noise_cov()), design.betas)
        yc = y - y.mean(axis=0)
        xc = x - x.mean()
        assert np.allclose(yty, yc.T @ yc, rtol=1e-10)
        assert np.allclose(yx, yc.T @ xc, rtol=1e-10)

    def test_stats_match_library(self):
        design = SimDesign(n=600, K=3, effect_size=0.5, assoc_pattern=(1.0, 1.0, 0.0),
                           corr=CorrelationSpec("CS", 0.3), seed=5)
        x, y = simulate_dataset(design, 0)
        s = build_sufficient_stats(TraitMatrix.from_raw(y), x)
        base = _draw_base(design.n, design.K, design.maf, design.seed, 0)
        yty, yx = _cross(base, symmetric_root(design.noise_cov()), design.betas)
        st = stats_from_cross(yty, yx, base.xtx, design.n, np.linspace(0, 1, 11))
        assert st["p_manova"] == pytest.approx(manova_test(s).p_value, rel=1e-8)
        assert st["p_ssu"] == pytest.approx(ssu_test(s).p_value, rel=1e-8)
        assert st["p_usat"] == pytest.approx(usat_test(s).p_value, rel=1e-8)


class TestType1:
    def test_alpha_one(self):
        res = run_type1_study(SimDesign(n=200, K=2, replicates=50), alphas=(1.0,))
        assert all(r.rate == 1.0 for r in res.rows)

    def test_table_shape(self):
        res = run_type1_study(SimDesign(n=200, K=3, replicates=100), tests=("manova", "ssu"), alphas=(0.01, 0.05))
        assert [(r.test, r.alpha) for r in res.rows] == [
            ("manova", 0.01), ("manova", 0.05), ("ssu", 0.01), ("ssu", 0.05)]
        assert res.rows[1].se == pytest.approx(math.sqrt(0.05 * 0.95 / 100))

    def test_manova_calibrated(self):
        res = run_type1_study(SimDesign(n=1000, K=2, corr=CorrelationSpec("CS", 0.5), replicates=4000, seed=3),
                              tests=("manova",), alphas=(0.05,))
        assert abs(res.rate("manova", 0.05) - 0.05) < 3 * math.sqrt(0.05 * 0.95 / 4000)


class TestPower:
    def test_null_fraction(self):
        design = SimDesign(n=400, K=3, effect_size=0.395, replicates=400, seed=2)
        res = run_power_study(design, [0.0], tests=("manova", "ssu", "usat"))
        for t in ("manova", "ssu", "usat"):
            assert res.power(t, 0.0) == pytest.approx(0.05, abs=0.011)

    def test_independent_nondecreasing(self):
        design = SimDesign(n=400, K=5, effect_size=0.395, corr=CorrelationSpec("INDEPENDENT", 0.0),
                           replicates=500, seed=40)
        fr = [0.2, 0.4, 0.6, 0.8, 1.0]
        res = run_power_study(design, fr, tests=("manova",))
        p = [res.power("manova", f) for f in fr]
        assert all(b >= a for a, b in zip(p, p[1:]))

    def test_block_minimum_at_block_edge(self):
        design = SimDesign(n=400, K=10, effect_size=0.395, corr=CorrelationSpec("BLOCK_CS", 0.6),
                           replicates=500, seed=41)
        fr = [0.7, 0.8, 0.9]
        res = run_power_study(design, fr, tests=("manova",))
        p = [res.power("manova", f) for f in fr]
        assert p[1] < p[0] and p[1] < p[2]


class TestTheoremClosedForms:
    def test_k2_sign_flip(self):
        assert not partial_beats_complete(2, 1, 0.3)
        assert not partial_beats_complete(2, 1, 0.5)
        assert partial_beats_complete(2, 1, 0.6)

    def test_partial_equals_complete_at_u_k(self):
        assert partial_limit(5, 5, 0.4, 0.25, 0.2, 9.98) == pytest.approx(complete_limit(5, 0.4, 0.25, 0.2, 9.98))

    def test_block_gap(self):
        comp, part = block_limits(10, 8, 9, 0.6, 0.395, 0.2, 9.95)
        b = 2 * 0.2 * 0.8 * 0.395**2 / 9.95
        assert comp - part == pytest.approx(b * (10 - 9))

    def test_two_trait_gap_value(self):
        assert two_trait_gap_limit(0.6, 0.25, 0.2, 0.2, 9.98) == pytest.approx(2 * 0.16 * 0.2 * 9.98 * 0.1)

    def test_default_coverage(self):
        sc = default_scenarios()
        assert {s.rho for s in sc} == {0.2, 0.4, 0.6, 0.8}
        assert {s.K for s in sc} == {2, 5, 10}
        assert {s.u for s in sc if s.K == 10} == set(range(1, 10))


class TestTheoremMonteCarlo:
    def test_complete_k5(self):
        row = verify_scenario(TheoremScenario(K=5, rho=0.6, u=2), seed=1)
        assert row.complete_rel < 0.01
        assert row.partial_rel < 0.01

    @pytest.mark.parametrize("rho, regime", [(0.6, "partial > complete"), (0.3, "complete >= partial")])
    def test_regime_flags(self, rho, regime):
        row = verify_scenario(TheoremScenario(K=2, rho=rho, u=1), seed=2)
        assert row.predicted_regime == regime
        assert row.observed_regime == regime

    def test_block(self):
        row = verify_scenario(TheoremScenario(K=10, rho=0.6, u=9, beta=0.395, sigma2=9.95, structure="BLOCK_CS"), seed=3)
        assert row.gap_rel < 0.05
        assert row.observed_regime == "complete > partial"

    def test_two_trait_gap(self):
        mean, se, lim = verify_two_trait_gap()
        assert lim > 0
        assert abs(mean / lim - 1) < 0.05
