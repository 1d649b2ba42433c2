"""Centered data containers and sufficient statistics for one-variant tests."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from mvassoc.errors import DegenerateTraits, MonomorphicVariant

EIG_CLAMP = 1e-12


def center(values):
    """Subtract column means (or the mean, for a vector)."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 0 or arr.shape[0] == 0:
        raise ValueError("cannot center an empty array")
    return arr - arr.mean(axis=0)


def compute_maf(dosage) -> float:
    """Minor allele frequency of a raw dosage vector, folded to at most 0.5."""
    d = np.asarray(dosage, dtype=float)
    if d.size == 0:
        raise ValueError("empty dosage vector")
    m = float(d.mean()) / 2.0
    return min(m, 1.0 - m)


@dataclass(frozen=True)
class TraitMatrix:
    """Centered n x K phenotype matrix.

    Use :meth:`from_raw` to build one from uncentered values; the original
    column means are kept in ``means``.
    """

    values: np.ndarray
    trait_names: tuple[str, ...]
    means: np.ndarray = field(default=None)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2:
            raise ValueError("trait values must be a 2-d array")
        n, k = v.shape
        if len(self.trait_names) != k:
            raise ValueError(f"{len(self.trait_names)} trait names for {k} columns")
        if not np.all(np.isfinite(v)):
            raise ValueError("trait matrix contains missing or non-finite values")
        if n <= k:
            raise ValueError(f"need more samples than traits (n={n}, K={k})")
        scale = np.maximum(np.abs(v).max(axis=0), 1.0)
        if np.any(np.abs(v.sum(axis=0)) > 1e-9 * n * scale):
            raise ValueError("trait columns are not centered; use TraitMatrix.from_raw")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "trait_names", tuple(self.trait_names))
        if self.means is None:
            object.__setattr__(self, "means", np.zeros(k))

    @classmethod
    def from_raw(cls, values, trait_names: Sequence[str] | None = None) -> "TraitMatrix":
        v = np.asarray(values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if trait_names is None:
            trait_names = [f"trait_{j + 1}" for j in range(v.shape[1])]
        means = v.mean(axis=0)
        return cls(v - means, tuple(trait_names), means)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def k(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class GenotypeRecord:
    """One variant: raw (imputed) dosages plus identifiers.

    ``maf`` is computed from the observed entries before imputation.
    """

    snp_id: str
    chrom: str
    pos: int
    dosage: np.ndarray
    maf: float
    n_missing: int = 0

    @classmethod
    def from_dosage(cls, dosage, snp_id="snp", chrom="0", pos=0) -> "GenotypeRecord":
        d = np.asarray(dosage, dtype=float)
        return cls(snp_id, chrom, int(pos), d, compute_maf(d))

    @property
    def n(self) -> int:
        return self.dosage.shape[0]

    @property
    def centered(self) -> np.ndarray:
        return self.dosage - self.dosage.mean()


@dataclass(frozen=True)
class SufficientStats:
    """Per-variant summary from which MANOVA, SSU and USAT are computed."""

    n: int
    k: int
    xtx: float
    yx: np.ndarray
    beta_hat: np.ndarray
    h_mat: np.ndarray
    e_mat: np.ndarray
    sigma0_sq: float
    cov_um_eigs: np.ndarray


def _as_centered_traits(Y) -> np.ndarray:
    if isinstance(Y, TraitMatrix):
        return Y.values
    y = np.asarray(Y, dtype=float)
    return center(y[:, None] if y.ndim == 1 else y)


def _as_centered_genotype(X) -> np.ndarray:
    if isinstance(X, GenotypeRecord):
        return X.centered
    return center(np.asarray(X, dtype=float).ravel())


def clamp_eigs(eigs: np.ndarray) -> np.ndarray:
    """Sort descending and zero out eigenvalues below ``EIG_CLAMP`` times the largest."""
    e = np.sort(np.asarray(eigs, dtype=float))[::-1].copy()
    top = e[0] if e.size else 0.0
    e[e < EIG_CLAMP * max(top, 0.0)] = 0.0
    return e


def _check_pd(mat: np.ndarray, what: str) -> None:
    eigs = np.linalg.eigvalsh(mat)
    top = max(float(np.abs(eigs).max()), np.finfo(float).tiny)
    if eigs.min() <= 1e-10 * top:
        raise DegenerateTraits(f"{what} is singular (smallest eigenvalue {eigs.min():.3g})")


def build_sufficient_stats(Y, X, sigma0_divisor: str = "unbiased") -> SufficientStats:
    """Compute beta-hat, H, E, sigma0^2 and the eigenvalues of Cov(U_M).

    ``sigma0_divisor`` is ``"unbiased"`` for K(n-1) or ``"mle"`` for nK.
    """
    y = _as_centered_traits(Y)
    x = _as_centered_genotype(X)
    n, k = y.shape
    if x.shape[0] != n:
        raise ValueError(f"genotype length {x.shape[0]} does not match n={n}")
    xtx = float(x @ x)
    if xtx <= 1e-12 * n:
        raise MonomorphicVariant("genotype has zero variance")
    yty = y.T @ y
    _check_pd(yty, "trait cross-product matrix")
    yx = y.T @ x
    beta = yx / xtx
    h = np.outer(beta, beta) * xtx
    e = yty - h
    _check_pd(e, "error SSCP matrix")
    denom = k * (n - 1) if sigma0_divisor == "unbiased" else k * n
    s2 = float(np.sum(y * y)) / denom
    eigs = clamp_eigs(np.linalg.eigvalsh(yty / (n * s2 * s2)) * xtx)
    return SufficientStats(n, k, xtx, yx, beta, h, e, s2, eigs)


class TraitContext:
    """Per-dataset precomputation shared by every variant in a scan.

    Holds Y'Y, its Cholesky factor, sigma0^2 and the eigenvalues of
    Y'Y / (n sigma0^4); per-variant eigenvalues are these times X'X.
    """

    def __init__(self, traits: TraitMatrix, sigma0_divisor: str = "unbiased"):
        y = traits.values
        self.traits = traits
        self.n, self.k = y.shape
        self.y = np.ascontiguousarray(y)
        self.yty = y.T @ y
        _check_pd(self.yty, "trait cross-product matrix")
        self.chol = np.linalg.cholesky(self.yty)
        denom = self.k * (self.n - 1) if sigma0_divisor == "unbiased" else self.k * self.n
        self.sigma0_sq = float(np.sum(y * y)) / denom
        self.base_eigs = clamp_eigs(np.linalg.eigvalsh(self.yty / (self.n * self.sigma0_sq ** 2)))
        self.diag_yty = np.diag(self.yty).copy()
        self.n_covariates = 0

    def batch(self, xc: np.ndarray) -> dict:
        """Statistics for a block of centered genotypes (n x m).

        Returns a dict of arrays: ``xtx``, ``yx`` (K x m), ``t_m``, ``t_s``,
        and marginal pieces ``m_num``/``m_xtx``/``m_yy`` for t-tests.
        """
        xtx = np.einsum("ij,ij->j", xc, xc)
        yx = self.y.T @ xc
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.linalg.solve(self.chol, yx)
            r2 = np.einsum("ij,ij->j", w, w) / xtx
            t_m = -self.n * np.log1p(-np.minimum(r2, 1.0))
        t_s = np.einsum("ij,ij->j", yx, yx) / self.sigma0_sq ** 2
        return {
            "xtx": xtx,
            "score_xtx": xtx,
            "yx": yx,
            "t_m": t_m,
            "t_s": t_s,
            "m_num": yx,
            "m_xtx": xtx,
            "m_yy": self.diag_yty,
        }
