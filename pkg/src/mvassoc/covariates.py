"""Covariate-adjusted MANOVA, SSU and USAT.

The null model Y_k = Z phi + e_k shares one coefficient vector across traits
(``mode="shared"``, phi-hat is the average of per-trait OLS fits); the
``"per_trait"`` mode residualises each trait on Z separately instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from mvassoc.assoc import Method, TestOutcome, marginal_pvalues, usat_from_parts
from mvassoc.errors import DegenerateTraits, MonomorphicVariant, SingularCovariates
from mvassoc.model import GenotypeRecord, TraitMatrix, center, clamp_eigs
from mvassoc.quadform import ssu_params

MODES = ("shared", "per_trait")


@dataclass(frozen=True)
class CovariateMatrix:
    values: np.ndarray
    names: tuple[str, ...]

    def __post_init__(self):
        z = center(np.asarray(self.values, dtype=float).reshape(len(self.values), -1))
        n, q = z.shape
        if len(self.names) != q:
            raise ValueError(f"{len(self.names)} covariate names for {q} columns")
        if not np.all(np.isfinite(z)):
            raise ValueError("covariates contain non-finite values")
        if q:
            sv = np.linalg.svd(z, compute_uv=False)
            if sv[-1] <= 1e-10 * max(sv[0], 1e-300):
                raise SingularCovariates("covariate matrix is rank deficient")
        z.setflags(write=False)
        object.__setattr__(self, "values", z)
        object.__setattr__(self, "names", tuple(self.names))

    @property
    def q(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class NullFit:
    phi_hat: np.ndarray
    adjusted_traits: np.ndarray
    sigma0_sq: float
    mode: str
    basis: np.ndarray  # orthonormal basis of span(Z), n x q

    @property
    def n(self) -> int:
        return self.adjusted_traits.shape[0]

    @property
    def k(self) -> int:
        return self.adjusted_traits.shape[1]


def _traits(Y) -> np.ndarray:
    return Y.values if isinstance(Y, TraitMatrix) else center(np.asarray(Y, dtype=float))


def _genotype(X) -> np.ndarray:
    return X.centered if isinstance(X, GenotypeRecord) else center(np.asarray(X, dtype=float).ravel())


def _covariates(Z) -> CovariateMatrix:
    if isinstance(Z, CovariateMatrix):
        return Z
    z = np.asarray(Z, dtype=float)
    z = z.reshape(z.shape[0], -1)
    return CovariateMatrix(z, tuple(f"cov_{j + 1}" for j in range(z.shape[1])))


def fit_null(Y, Z, mode: str = "shared") -> NullFit:
    if mode not in MODES:
        raise ValueError(f"covariate mode must be one of {MODES}")
    y = _traits(Y)
    cov = _covariates(Z)
    z = cov.values
    n, k = y.shape
    if z.shape[0] != n:
        raise ValueError("covariate rows do not match trait rows")
    if cov.q >= n - k:
        raise SingularCovariates(f"too many covariates (q={cov.q}) for n={n}, K={k}")
    if cov.q == 0:
        phi = np.zeros((0,) if mode == "shared" else (0, k))
        resid = y.copy()
        basis = np.zeros((n, 0))
    else:
        basis, _ = np.linalg.qr(z)
        coef = np.linalg.lstsq(z, y, rcond=None)[0]  # q x K
        if mode == "shared":
            phi = coef.mean(axis=1)
            resid = y - (z @ phi)[:, None]
        else:
            phi = coef
            resid = y - basis @ (basis.T @ y)
    s2 = float(np.sum(resid * resid)) / (n * k)
    resid.setflags(write=False)
    return NullFit(phi, resid, s2, mode, basis)


def _project_out(basis: np.ndarray, a: np.ndarray) -> np.ndarray:
    if basis.shape[1] == 0:
        return a
    return a - basis @ (basis.T @ a)


def adjusted_ssu(nullfit: NullFit, X) -> TestOutcome:
    x = _genotype(X)
    r = nullfit.adjusted_traits
    n = r.shape[0]
    xtx = float(x @ x)
    if xtx <= 1e-12 * n:
        raise MonomorphicVariant("genotype has zero variance")
    s2 = nullfit.sigma0_sq
    u = r.T @ x / s2
    t = float(u @ u)
    eigs = clamp_eigs(np.linalg.eigvalsh(r.T @ r) * xtx / (n * s2 * s2))
    par = ssu_params(eigs)
    return TestOutcome(Method.SSU, t, float(par.sf(t)), {"cov_um_eigs": eigs})


def adjusted_manova(Y, X, Z) -> TestOutcome:
    y = _traits(Y)
    x = _genotype(X)
    z = _covariates(Z).values
    n, k = y.shape
    basis = np.linalg.qr(z)[0] if z.shape[1] else np.zeros((n, 0))
    yt = _project_out(basis, y)
    xt = _project_out(basis, x)
    xtx = float(xt @ xt)
    if xtx <= 1e-10 * float(x @ x) or xtx <= 0.0:
        raise MonomorphicVariant("genotype is (nearly) collinear with the covariates")
    he = yt.T @ yt
    try:
        chol = np.linalg.cholesky(he)
    except np.linalg.LinAlgError as exc:
        raise DegenerateTraits("residual trait SSCP is singular") from exc
    w = np.linalg.solve(chol, yt.T @ xt)
    r2 = float(w @ w) / xtx
    if r2 >= 1.0 - 1e-12:
        raise DegenerateTraits("error SSCP matrix is singular")
    t = float(-n * np.log1p(-r2))
    return TestOutcome(Method.MANOVA, t, float(special.chdtrc(k, t)), {"df": k})


def adjusted_usat(Y, X, Z, grid=None, mode: str = "shared") -> TestOutcome:
    fit = fit_null(Y, Z, mode)
    ssu = adjusted_ssu(fit, X)
    man = adjusted_manova(Y, X, Z)
    return usat_from_parts(man.statistic, ssu.statistic, ssu.detail["cov_um_eigs"], grid)


class CovariateContext:
    """Scan-time precomputation with covariates; mirrors ``TraitContext.batch``."""

    def __init__(self, traits: TraitMatrix, covariates: CovariateMatrix, mode: str = "shared"):
        self.traits = traits
        self.fit = fit_null(traits, covariates, mode)
        self.n, self.k = traits.values.shape
        self.n_covariates = covariates.q
        self.basis = self.fit.basis
        self.yt = np.ascontiguousarray(_project_out(self.basis, traits.values))
        he = self.yt.T @ self.yt
        self.chol = np.linalg.cholesky(he)
        r = self.fit.adjusted_traits
        self.r = np.ascontiguousarray(r)
        self.sigma0_sq = self.fit.sigma0_sq
        self.base_eigs = clamp_eigs(np.linalg.eigvalsh(r.T @ r / (self.n * self.sigma0_sq ** 2)))
        self.diag_yty = np.diag(he).copy()

    def batch(self, xc: np.ndarray) -> dict:
        xtx = np.einsum("ij,ij->j", xc, xc)
        xt = _project_out(self.basis, xc)
        xtx_t = np.einsum("ij,ij->j", xt, xt)
        v = self.yt.T @ xt
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.linalg.solve(self.chol, v)
            r2 = np.einsum("ij,ij->j", w, w) / xtx_t
            t_m = -self.n * np.log1p(-np.minimum(r2, 1.0))
            collinear = xtx_t <= 1e-10 * xtx
        t_m = np.where(collinear, np.nan, t_m)
        ux = self.r.T @ xc
        t_s = np.einsum("ij,ij->j", ux, ux) / self.sigma0_sq ** 2
        return {
            "xtx": xtx,
            "score_xtx": xtx,
            "yx": ux,
            "t_m": t_m,
            "t_s": t_s,
            "m_num": v,
            "m_xtx": np.where(collinear, np.nan, xtx_t),
            "m_yy": self.diag_yty,
        }


def adjusted_marginal_tests(Y, X, Z) -> list[TestOutcome]:
    y = _traits(Y)
    x = _genotype(X)
    cov = _covariates(Z)
    basis = np.linalg.qr(cov.values)[0] if cov.q else np.zeros((y.shape[0], 0))
    yt = _project_out(basis, y)
    xt = _project_out(basis, x)
    xtx = float(xt @ xt)
    if xtx <= 1e-10 * float(x @ x):
        raise MonomorphicVariant("genotype is (nearly) collinear with the covariates")
    slope, t, p = marginal_pvalues(yt.T @ xt, xtx, np.einsum("ij,ij->j", yt, yt), y.shape[0] - 2 - cov.q)
    return [
        TestOutcome(Method.MARGINAL, float(t[k]), float(p[k]), {"trait": k, "slope": float(slope[k])})
        for k in range(y.shape[1])
    ]
