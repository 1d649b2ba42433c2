"""Simulation designs, type-I and power studies, and large-n determinant limits.

Every replicate draws its genotype and noise from its own stream,
``default_rng([seed, replicate])``, so results do not depend on how the
replicates are scheduled. Scenarios that differ only in effect sizes reuse
the same draws (common random numbers): after centering, Y'Y and Y'X of
``Y = X beta' + eps`` are K x K updates of eps'eps, eps'X and X'X.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import special

from mvassoc._backend import kernels
from mvassoc.assoc import DEFAULT_GRID, WeightGrid
from mvassoc.errors import InvalidDesign
from mvassoc.model import EIG_CLAMP

ALL_TESTS = ("fisher", "minp", "ssu", "manova", "usat")
# statistic used by the empirical power protocol, and whether large values reject
POWER_DIRECTION = {"fisher": "high", "manova": "high", "ssu": "high", "minp": "low", "usat": "low"}


class CorrKind(str, enum.Enum):
    CS = "CS"
    AR1 = "AR1"
    INDEPENDENT = "INDEPENDENT"
    BLOCK_CS = "BLOCK_CS"


@dataclass(frozen=True)
class CorrelationSpec:
    kind: CorrKind = CorrKind.CS
    rho: float = 0.0
    block_fraction: float = 0.8

    def __post_init__(self):
        object.__setattr__(self, "kind", CorrKind(self.kind))
        if not -1.0 < self.rho < 1.0:
            raise InvalidDesign(f"rho must lie in (-1, 1), got {self.rho}")

    def block_size(self, k: int) -> int:
        return int(round(self.block_fraction * k))

    def matrix(self, k: int) -> np.ndarray:
        r = self.rho
        if self.kind is CorrKind.INDEPENDENT:
            mat = np.eye(k)
        elif self.kind is CorrKind.CS:
            mat = np.full((k, k), r)
            np.fill_diagonal(mat, 1.0)
        elif self.kind is CorrKind.AR1:
            idx = np.arange(k)
            mat = r ** np.abs(idx[:, None] - idx[None, :])
        else:
            m = self.block_size(k)
            mat = np.eye(k)
            mat[:m, :m] = r
            np.fill_diagonal(mat, 1.0)
        if np.linalg.eigvalsh(mat).min() <= 1e-12:
            raise InvalidDesign(f"{self.kind.value}({r}) correlation is not positive definite for K={k}")
        return mat


@dataclass(frozen=True)
class SimDesign:
    """One simulation setting.

    ``assoc_pattern`` multiplies ``effect_size`` per trait (0 = unassociated).
    Residual variance of associated traits is reduced so that every trait has
    total variance ``total_var``, unless ``sigma2`` fixes a common value.
    """

    n: int
    K: int
    maf: float = 0.2
    effect_size: float = 0.0
    assoc_pattern: tuple[float, ...] | None = None
    beta0: float = 1.0
    total_var: float = 10.0
    corr: CorrelationSpec = field(default_factory=CorrelationSpec)
    replicates: int = 1000
    seed: int = 1
    sigma2: float | None = None

    def __post_init__(self):
        if self.assoc_pattern is None:
            object.__setattr__(self, "assoc_pattern", (0.0,) * self.K)
        pat = tuple(float(v) for v in self.assoc_pattern)
        if len(pat) != self.K:
            raise InvalidDesign(f"assoc_pattern has length {len(pat)}, expected K={self.K}")
        object.__setattr__(self, "assoc_pattern", pat)
        if not 0.0 < self.maf <= 0.5:
            raise InvalidDesign("maf must lie in (0, 0.5]")
        if self.n <= self.K + 2:
            raise InvalidDesign("n must exceed K + 2")
        if np.any(self.residual_var() <= 0):
            raise InvalidDesign("effect explains more than the total variance")

    @property
    def betas(self) -> np.ndarray:
        return self.effect_size * np.array(self.assoc_pattern)

    def residual_var(self) -> np.ndarray:
        if self.sigma2 is not None:
            return np.full(self.K, float(self.sigma2))
        b = self.betas
        return self.total_var - b * b * 2.0 * self.maf * (1.0 - self.maf)

    def noise_cov(self) -> np.ndarray:
        sd = np.sqrt(self.residual_var())
        return self.corr.matrix(self.K) * np.outer(sd, sd)

    def with_fraction(self, fraction: float, sign: float = 1.0) -> "SimDesign":
        """First round(fraction K) traits associated, same direction and size."""
        u = int(round(fraction * self.K))
        pat = tuple([sign] * u + [0.0] * (self.K - u))
        return replace(self, assoc_pattern=pat)


def symmetric_root(cov: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(cov)
    if w.min() <= 0:
        raise InvalidDesign("covariance matrix is not positive definite")
    return (v * np.sqrt(w)) @ v.T


def replicate_rng(seed: int, replicate: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(replicate)])


def simulate_genotype(n: int, maf: float, rng: np.random.Generator) -> np.ndarray:
    """Hardy-Weinberg dosages: Binomial(2, maf)."""
    return rng.binomial(2, maf, size=n).astype(float)


def effect_from_variance_explained(h2_fraction: float, total_var: float, maf: float) -> float:
    if not 0 < h2_fraction < 1 or total_var <= 0 or not 0 < maf < 1:
        raise InvalidDesign("need 0 < h2 < 1, total_var > 0 and 0 < maf < 1")
    return math.sqrt(h2_fraction * total_var / (2.0 * maf * (1.0 - maf)))


def simulate_phenotypes(X, design: SimDesign, rng: np.random.Generator) -> np.ndarray:
    """Uncentered n x K traits: beta0 + X beta' + eps, eps ~ N(0, noise_cov) row-wise."""
    x = np.asarray(X, dtype=float)
    root = symmetric_root(design.noise_cov())
    eps = rng.standard_normal((x.shape[0], design.K)) @ root
    return design.beta0 + np.outer(x, design.betas) + eps


def simulate_dataset(design: SimDesign, replicate: int) -> tuple[np.ndarray, np.ndarray]:
    """Genotype and traits of one replicate, drawn from its own stream."""
    rng = replicate_rng(design.seed, replicate)
    x = simulate_genotype(design.n, design.maf, rng)
    return x, simulate_phenotypes(x, design, rng)


# --------------------------------------------------------------- replicate core


@dataclass
class _Base:
    zz: np.ndarray  # centered standard-normal cross products, K x K
    zx: np.ndarray  # K
    xtx: float
    n: int


def _draw_base(n: int, k: int, maf: float, seed: int, rep: int) -> _Base:
    # same draw order as simulate_dataset: genotype first, then noise
    rng = replicate_rng(seed, rep)
    x = simulate_genotype(n, maf, rng)
    z = rng.standard_normal((n, k))
    xc = x - x.mean()
    zc = z - z.mean(axis=0)
    return _Base(zc.T @ zc, zc.T @ xc, float(xc @ xc), n)


def _cross(base: _Base, root: np.ndarray, beta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    s_ee = root @ base.zz @ root
    s_ex = root @ base.zx
    yty = s_ee + np.outer(s_ex, beta) + np.outer(beta, s_ex) + base.xtx * np.outer(beta, beta)
    yx = s_ex + base.xtx * beta
    return yty, yx


def stats_from_cross(yty: np.ndarray, yx: np.ndarray, xtx: float, n: int, grid: np.ndarray,
                     usat_p: bool = True) -> dict:
    """All test statistics and p-values from centered Y'Y, Y'X and X'X."""
    k = yx.shape[0]
    s2 = float(np.trace(yty)) / (k * (n - 1))
    chol = np.linalg.cholesky(yty)
    w = np.linalg.solve(chol, yx)
    t_m = float(-n * np.log1p(-min(float(w @ w) / xtx, 1.0)))
    t_s = float(yx @ yx) / (s2 * s2)
    c = np.linalg.eigvalsh(yty) * (xtx / (n * s2 * s2))
    c[c < EIG_CLAMP * c.max()] = 0.0
    c = np.ascontiguousarray(c[::-1])
    a, b, d = kernels.ssu_abd(c)
    arg = (t_s - b) / a
    p_ssu = float(special.chdtrc(d, arg)) if arg > 0 else 1.0
    p_manova = float(special.chdtrc(k, t_m))
    yy = np.diag(yty)
    slope = yx / xtx
    with np.errstate(divide="ignore", invalid="ignore"):
        tstat = slope / np.sqrt(np.maximum(yy - yx * slope, 0.0) / (n - 2) / xtx)
    p_marg = np.minimum(2.0 * special.stdtr(n - 2, -np.abs(tstat)), 1.0)
    with np.errstate(divide="ignore"):
        fisher_stat = float(-2.0 * np.log(p_marg).sum())
    out = {
        "t_m": t_m,
        "t_s": t_s,
        "p_manova": p_manova,
        "p_ssu": p_ssu,
        "fisher_stat": fisher_stat,
        "p_fisher": float(special.chdtrc(2 * k, fisher_stat)),
        "p_minp": float(min(1.0, k * p_marg.min())),
    }
    if usat_p:
        _, t_usat, _, p_usat, status = kernels.usat_core(c, t_m, t_s, grid)
        out["t_usat"] = t_usat
        out["p_usat"] = p_usat if status == 0 else math.nan
    else:
        out["t_usat"] = float(kernels.min_p_batch(c / xtx, np.array([xtx]), np.array([t_m]),
                                                  np.array([t_s]), grid)[0])
    return out


# ------------------------------------------------------------------ type-I study


@dataclass
class Type1Row:
    test: str
    alpha: float
    rate: float
    se: float
    replicates: int


@dataclass
class Type1Result:
    design: SimDesign
    rows: list[Type1Row]
    pvalues: dict[str, np.ndarray]

    def rate(self, test: str, alpha: float) -> float:
        for r in self.rows:
            if r.test == test and math.isclose(r.alpha, alpha):
                return r.rate
        raise KeyError((test, alpha))


def _grid(grid) -> np.ndarray:
    if grid is None:
        return DEFAULT_GRID.array
    return grid.array if isinstance(grid, WeightGrid) else WeightGrid(tuple(grid)).array


def null_pvalues(design: SimDesign, tests: Sequence[str] = ALL_TESTS, replicates: int | None = None,
                 grid=None, progress: Callable[[int], None] | None = None) -> dict[str, np.ndarray]:
    """p-values of each test over the design's null replicates (effects ignored)."""
    N = design.replicates if replicates is None else replicates
    g = _grid(grid)
    null = replace(design, assoc_pattern=(0.0,) * design.K)
    root = symmetric_root(null.noise_cov())
    zero = np.zeros(design.K)
    out = {t: np.empty(N) for t in tests}
    for rep in range(N):
        base = _draw_base(design.n, design.K, design.maf, design.seed, rep)
        yty, yx = _cross(base, root, zero)
        st = stats_from_cross(yty, yx, base.xtx, design.n, g, usat_p="usat" in tests)
        for t in tests:
            out[t][rep] = st["p_" + t]
        if progress is not None:
            progress(rep)
    return out


def run_type1_study(design: SimDesign, tests: Sequence[str] = ALL_TESTS,
                    alphas: Sequence[float] = (0.01, 0.05), replicates: int | None = None,
                    grid=None) -> Type1Result:
    pv = null_pvalues(design, tests, replicates, grid)
    rows = []
    for t in tests:
        p = pv[t]
        m = np.isfinite(p)
        for a in alphas:
            rate = float(np.mean(p[m] <= a))
            rows.append(Type1Row(t, float(a), rate, math.sqrt(a * (1 - a) / m.sum()), int(m.sum())))
    return Type1Result(design, rows, pv)


# ------------------------------------------------------------------- power study


@dataclass
class PowerRow:
    test: str
    fraction: float
    power: float


@dataclass
class PowerResult:
    design: SimDesign
    fractions: list[float]
    rows: list[PowerRow]

    def power(self, test: str, fraction: float) -> float:
        for r in self.rows:
            if r.test == test and math.isclose(r.fraction, fraction):
                return r.power
        raise KeyError((test, fraction))


def _power_stat(test: str, st: dict) -> float:
    return {
        "fisher": st["fisher_stat"],
        "manova": st["t_m"],
        "ssu": st["t_s"],
        "minp": st["p_minp"],
        "usat": st["t_usat"],
    }[test]


def run_power_study(design: SimDesign, fractions: Sequence[float], tests: Sequence[str] = ALL_TESTS,
                    replicates: int | None = None, grid=None, sign: float = 1.0) -> PowerResult:
    """Empirical power against null-calibrated thresholds.

    Null and alternative datasets share replicate streams. Tests whose
    statistic rejects for large values use the 95th null percentile as the
    cut-off; min-p style statistics (minP, USAT's minimum p over the grid)
    use the 5th percentile and reject below it.
    """
    N = design.replicates if replicates is None else replicates
    g = _grid(grid)
    scen = [replace(design, assoc_pattern=(0.0,) * design.K)] + [design.with_fraction(f, sign) for f in fractions]
    roots = [symmetric_root(s.noise_cov()) for s in scen]
    vals = {t: np.empty((len(scen), N)) for t in tests}
    for rep in range(N):
        base = _draw_base(design.n, design.K, design.maf, design.seed, rep)
        for i, (s, root) in enumerate(zip(scen, roots)):
            yty, yx = _cross(base, root, s.betas)
            st = stats_from_cross(yty, yx, base.xtx, design.n, g, usat_p=False)
            for t in tests:
                vals[t][i, rep] = _power_stat(t, st)
    rows = []
    for t in tests:
        null = vals[t][0]
        if POWER_DIRECTION[t] == "high":
            thr = np.quantile(null, 0.95)
            pw = (vals[t][1:] > thr).mean(axis=1)
        else:
            thr = np.quantile(null, 0.05)
            pw = (vals[t][1:] < thr).mean(axis=1)
        rows.extend(PowerRow(t, float(f), float(p)) for f, p in zip(fractions, pw))
    return PowerResult(design, list(fractions), rows)


# ------------------------------------------------------------- theorem limits


def complete_limit(K, rho, beta, maf, sigma2) -> float:
    return 1.0 + 2 * maf * (1 - maf) * beta ** 2 * K / (sigma2 * (1 + (K - 1) * rho))


def partial_limit(K, u, rho, beta, maf, sigma2) -> float:
    g = 2 * maf * (1 - maf) * beta ** 2 / (sigma2 * (1 - rho))
    return 1.0 + g * (1 + (K - u - 1) * rho) / (1 + (K - 1) * rho) * u


def partial_beats_complete(K, u, rho) -> bool:
    return u / K > (1 - rho) / (1 + (K - u - 1) * rho)


def block_limits(K, m, u, rho, beta, maf, sigma2) -> tuple[float, float]:
    """(complete, partial with u > m) determinant limits for the block design."""
    pq2 = 2 * maf * (1 - maf) * beta ** 2
    a = pq2 / (sigma2 * (1 + (m - 1) * rho))
    b = pq2 / sigma2
    return 1 + b * (K - m) + a * m, 1 + b * (u - m) + a * m


def two_trait_gap_limit(rho, beta1, beta2, maf, sigma2) -> float:
    return 2 * maf * (1 - maf) * beta2 * sigma2 * (2 * rho * beta1 - beta2)


@dataclass(frozen=True)
class TheoremScenario:
    K: int
    rho: float
    u: int
    beta: float = 0.25
    maf: float = 0.2
    sigma2: float = 9.98
    n: int = 100_000
    reps: int = 20
    structure: str = "CS"


@dataclass
class TheoremRow:
    scenario: TheoremScenario
    complete_emp: float
    complete_se: float
    complete_theory: float
    partial_emp: float
    partial_se: float
    partial_theory: float
    gap_emp: float
    gap_se: float
    gap_theory: float

    @property
    def complete_rel(self) -> float:
        return abs(self.complete_emp / self.complete_theory - 1)

    @property
    def partial_rel(self) -> float:
        return abs(self.partial_emp / self.partial_theory - 1)

    @property
    def gap_rel(self) -> float:
        return abs(self.gap_emp / self.gap_theory - 1)

    @property
    def predicted_regime(self) -> str:
        if self.scenario.structure == "BLOCK_CS":
            return "complete > partial"
        sc = self.scenario
        return "partial > complete" if partial_beats_complete(sc.K, sc.u, sc.rho) else "complete >= partial"

    @property
    def observed_regime(self) -> str:
        if self.scenario.structure == "BLOCK_CS":
            return "complete > partial" if self.gap_emp > 0 else "partial >= complete"
        return "partial > complete" if self.gap_emp > 0 else "complete >= partial"


def _log_det_ratio(yty: np.ndarray, e: np.ndarray) -> float:
    return np.linalg.slogdet(yty)[1] - np.linalg.slogdet(e)[1]


def verify_scenario(sc: TheoremScenario, seed: int) -> TheoremRow:
    """Monte Carlo |I + (H/n)(E/n)^-1| under complete and partial association.

    For CS the gap reported is partial minus complete; for BLOCK_CS it is
    complete minus partial (the sign predicted positive there).
    """
    corr = CorrelationSpec(CorrKind(sc.structure), sc.rho)
    root = symmetric_root(corr.matrix(sc.K) * sc.sigma2)
    full = np.full(sc.K, sc.beta)
    part = np.zeros(sc.K)
    part[: sc.u] = sc.beta
    comp, parts = [], []
    for rep in range(sc.reps):
        base = _draw_base(sc.n, sc.K, sc.maf, seed, rep)
        s_ee = root @ base.zz @ root
        s_ex = root @ base.zx
        e = s_ee - np.outer(s_ex, s_ex) / base.xtx  # identical for every beta
        d = []
        for beta in (full, part):
            yty, _ = _cross(base, root, beta)
            d.append(math.exp(_log_det_ratio(yty, e)))
        comp.append(d[0])
        parts.append(d[1])
    comp, parts = np.array(comp), np.array(parts)
    if sc.structure == "BLOCK_CS":
        m = corr.block_size(sc.K)
        ct, pt = block_limits(sc.K, m, sc.u, sc.rho, sc.beta, sc.maf, sc.sigma2)
        gap = comp - parts
        gt = ct - pt
    else:
        ct = complete_limit(sc.K, sc.rho, sc.beta, sc.maf, sc.sigma2)
        pt = partial_limit(sc.K, sc.u, sc.rho, sc.beta, sc.maf, sc.sigma2)
        gap = parts - comp
        gt = pt - ct
    r = math.sqrt(sc.reps)
    return TheoremRow(sc, comp.mean(), comp.std(ddof=1) / r, ct, parts.mean(), parts.std(ddof=1) / r, pt,
                      gap.mean(), gap.std(ddof=1) / r, gt)


def verify_theorem_limits(scenarios: Iterable[TheoremScenario], seed: int = 1) -> list[TheoremRow]:
    return [verify_scenario(sc, seed + 1000 * i) for i, sc in enumerate(scenarios)]


def default_scenarios(beta: float = 0.25, n: int = 100_000, reps: int = 20) -> list[TheoremScenario]:
    """rho in {0.2, 0.4, 0.6, 0.8} x K in {2, 5, 10} x every 1 <= u < K."""
    out = []
    for K in (2, 5, 10):
        for rho in (0.2, 0.4, 0.6, 0.8):
            for u in range(1, K):
                out.append(TheoremScenario(K, rho, u, beta=beta, n=n, reps=reps))
    return out


def verify_two_trait_gap(rho=0.6, beta1=0.25, beta2=0.2, maf=0.2, sigma2=9.98, n=1_000_000, reps=100,
                    seed=7) -> tuple[float, float, float]:
    """Mean and standard error of det(H1/n+E/n) - det(H2/n+E/n), and its limit (K=2)."""
    root = symmetric_root(CorrelationSpec(CorrKind.CS, rho).matrix(2) * sigma2)
    b1 = np.array([beta1, 0.0])
    b2 = np.array([beta1, beta2])
    diffs = []
    for rep in range(reps):
        base = _draw_base(n, 2, maf, seed, rep)
        y1, _ = _cross(base, root, b1)
        y2, _ = _cross(base, root, b2)
        diffs.append((np.linalg.det(y1) - np.linalg.det(y2)) / n ** 2)
    diffs = np.array(diffs)
    return float(diffs.mean()), float(diffs.std(ddof=1) / math.sqrt(reps)), two_trait_gap_limit(rho, beta1, beta2, maf, sigma2)
