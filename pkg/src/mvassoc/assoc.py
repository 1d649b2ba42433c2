"""Single-variant multivariate tests: MANOVA, SSU, marginal, Fisher, minP, USAT."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import special

from mvassoc._backend import kernels
from mvassoc.errors import DegenerateDistribution, DegenerateTraits, MonomorphicVariant, NumericalFailure
from mvassoc.model import GenotypeRecord, SufficientStats, TraitMatrix, center
from mvassoc.quadform import liu_fit, ssu_params


class Method(str, enum.Enum):
    MANOVA = "MANOVA"
    SSU = "SSU"
    MARGINAL = "MARGINAL"
    FISHER = "FISHER"
    MINP = "MINP"
    USAT = "USAT"


@dataclass(frozen=True)
class TestOutcome:
    method: Method
    statistic: float
    p_value: float
    detail: dict = field(default_factory=dict)

    __test__ = False  # keep pytest from collecting this class


@dataclass(frozen=True)
class WeightGrid:
    weights: tuple[float, ...]

    def __post_init__(self):
        w = tuple(float(v) for v in self.weights)
        if len(w) < 2 or w[0] != 0.0 or w[-1] != 1.0:
            raise ValueError("weight grid must start at 0 and end at 1")
        if any(b <= a for a, b in zip(w, w[1:])):
            raise ValueError("weight grid must be strictly increasing")
        if len(w) > 64:
            raise ValueError("weight grid is limited to 64 points")
        object.__setattr__(self, "weights", w)

    @classmethod
    def default(cls, size: int = 11) -> "WeightGrid":
        return cls(tuple(np.linspace(0.0, 1.0, size)))

    @property
    def array(self) -> np.ndarray:
        return np.array(self.weights)

    def __len__(self):
        return len(self.weights)


DEFAULT_GRID = WeightGrid.default()


def manova_stat(stats: SufficientStats) -> float:
    """-n log(|E|/|H+E|) via |H+E| = |E| (1 + X'X b'E^{-1}b)."""
    try:
        chol = np.linalg.cholesky(stats.e_mat)
    except np.linalg.LinAlgError as exc:
        raise DegenerateTraits("error SSCP matrix is not positive definite") from exc
    w = np.linalg.solve(chol, stats.beta_hat)
    return float(stats.n * np.log1p(stats.xtx * float(w @ w)))


def manova_test(stats: SufficientStats, n: int | None = None, K: int | None = None) -> TestOutcome:
    n = stats.n if n is None else n
    K = stats.k if K is None else K
    if n != stats.n:
        stats = SufficientStats(n, stats.k, stats.xtx, stats.yx, stats.beta_hat, stats.h_mat,
                                stats.e_mat, stats.sigma0_sq, stats.cov_um_eigs)
    t = manova_stat(stats)
    return TestOutcome(Method.MANOVA, t, float(special.chdtrc(K, t)), {"df": K})


def ssu_test(stats: SufficientStats) -> TestOutcome:
    u = stats.yx / stats.sigma0_sq
    t = float(u @ u)
    par = ssu_params(stats.cov_um_eigs)
    return TestOutcome(Method.SSU, t, float(par.sf(t)), {"a": par.a, "b": par.b, "d": par.d})


def marginal_pvalues(num, xtx, yy, df):
    """Two-sided OLS t-test p-values from Y_k'X, X'X and Y_k'Y_k (centered)."""
    num = np.asarray(num, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        slope = num / xtx
        rss = np.maximum(yy - num * slope, 0.0)
        se = np.sqrt(rss / df / xtx)
        t = slope / se
        t = np.where(num == 0.0, 0.0, t)
    p = 2.0 * special.stdtr(df, -np.abs(t))
    return slope, t, np.minimum(p, 1.0)


def marginal_tests(Y, X, n_covariates: int = 0) -> list[TestOutcome]:
    """Per-trait simple regressions of Y_k on X (both centered)."""
    y = Y.values if isinstance(Y, TraitMatrix) else center(np.asarray(Y, dtype=float))
    if y.ndim == 1:
        y = y[:, None]
    x = X.centered if isinstance(X, GenotypeRecord) else center(np.asarray(X, dtype=float))
    n = y.shape[0]
    if n <= 2 + n_covariates:
        raise ValueError("too few samples for marginal tests")
    xtx = float(x @ x)
    if xtx <= 1e-12 * n:
        raise MonomorphicVariant("genotype has zero variance")
    slope, t, p = marginal_pvalues(y.T @ x, xtx, np.einsum("ij,ij->j", y, y), n - 2 - n_covariates)
    return [
        TestOutcome(Method.MARGINAL, float(t[k]), float(p[k]), {"trait": k, "slope": float(slope[k])})
        for k in range(y.shape[1])
    ]


def fisher_combine(p: Sequence[float]) -> TestOutcome:
    """Fisher's -2 sum log p_k against chi2 with 2K degrees of freedom."""
    p = np.asarray(p, dtype=float)
    if np.any(p < 0) or np.any(p > 1):
        raise ValueError("p-values must lie in [0, 1]")
    if np.any(p == 0):
        return TestOutcome(Method.FISHER, float("inf"), 0.0)
    stat = float(-2.0 * np.log(p).sum())
    return TestOutcome(Method.FISHER, stat, float(special.chdtrc(2 * p.size, stat)))


def minp_combine(p: Sequence[float]) -> TestOutcome:
    """Bonferroni-adjusted minimum: min(1, K min_k p_k)."""
    p = np.asarray(p, dtype=float)
    val = float(min(1.0, p.size * p.min()))
    return TestOutcome(Method.MINP, val, val, {"trait": int(np.argmin(p))})


def omega_eigs(cov_um_eigs, omega: float) -> np.ndarray:
    """Eigenvalues of the null quadratic form of omega T_M + (1 - omega) T_S."""
    c = np.asarray(cov_um_eigs, dtype=float)
    return omega + (1.0 - omega) * c


def _grid_array(grid) -> np.ndarray:
    if grid is None:
        return DEFAULT_GRID.array
    if isinstance(grid, WeightGrid):
        return grid.array
    return WeightGrid(tuple(grid)).array


def usat_pvalue(t_usat: float, cov_um_eigs, K: int | None = None, grid=None) -> float:
    """Approximate Pr(T_USAT <= t_usat) under the null by one-dimensional integration."""
    c = np.asarray(cov_um_eigs, dtype=float)
    K = c.size if K is None else K
    g = _grid_array(grid)
    if K == 1:
        raise ValueError("USAT p-value integral needs K >= 2 (K = 1 reduces to MANOVA)")
    abd = kernels.ssu_abd(c)
    if abd is None:
        raise DegenerateDistribution("all eigenvalues are zero")
    params = [liu_fit(omega_eigs(c, w)).params for w in g]
    p, _, status = kernels.usat_pvalue(float(t_usat), params, g, abd, K)
    if status != 0:
        raise NumericalFailure(f"USAT integral failed (status {status})")
    return p


def usat_from_parts(t_m: float, t_s: float, cov_um_eigs, grid=None) -> TestOutcome:
    g = _grid_array(grid)
    c = np.asarray(cov_um_eigs, dtype=float)
    p_om, t_usat, gstar, p, status = kernels.usat_core(c, float(t_m), float(t_s), g)
    if status == 3:
        raise DegenerateDistribution("score covariance has no positive eigenvalue")
    if status != 0:
        raise NumericalFailure(f"USAT evaluation failed (status {status})")
    detail = {
        "omega_star": float(g[gstar]),
        "p_omegas": np.asarray(p_om),
        "t_usat": float(t_usat),
        "t_m": float(t_m),
        "t_s": float(t_s),
    }
    return TestOutcome(Method.USAT, float(t_usat), float(p), detail)


def usat_test(stats: SufficientStats, n: int | None = None, K: int | None = None, grid=None) -> TestOutcome:
    t_m = manova_test(stats, n, K).statistic
    u = stats.yx / stats.sigma0_sq
    return usat_from_parts(t_m, float(u @ u), stats.cov_um_eigs, grid)
