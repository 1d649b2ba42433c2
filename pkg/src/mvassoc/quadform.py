"""Null laws of non-negative quadratic forms sum_j lambda_j Z_j^2.

Two approximations are provided: the scaled-shifted chi-square a*chi2_d + b
(three-moment match, used by SSU) and the Liu moment match to a possibly
noncentral chi-square (used for every weighted statistic T_omega).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from mvassoc._backend import kernels
from mvassoc.errors import DegenerateDistribution, NumericalFailure


@dataclass(frozen=True)
class SsuNullParams:
    a: float
    b: float
    d: float

    def sf(self, t):
        """Pr(a chi2_d + b > t)."""
        arg = (np.asarray(t, dtype=float) - self.b) / self.a
        out = np.where(arg > 0.0, special.chdtrc(self.d, np.maximum(arg, 0.0)), 1.0)
        return out if out.ndim else float(out)

    def cdf(self, t):
        arg = (np.asarray(t, dtype=float) - self.b) / self.a
        out = np.where(arg > 0.0, special.chdtr(self.d, np.maximum(arg, 0.0)), 0.0)
        return out if out.ndim else float(out)


def ssu_params(eigs) -> SsuNullParams:
    """Match the first three moments of sum_k c_k chi2_1 with a chi2_d + b."""
    res = kernels.ssu_abd(np.asarray(eigs, dtype=float))
    if res is None:
        raise DegenerateDistribution("all eigenvalues are zero")
    return SsuNullParams(*res)


@dataclass(frozen=True)
class QuadFormDist:
    """Law of sum_j eigs_j Z_j^2 with its Liu chi-square parameters."""

    eigs: np.ndarray
    mean: float
    variance: float
    liu_l: float
    liu_delta: float

    @property
    def mu_chi(self) -> float:
        return self.liu_l + self.liu_delta

    @property
    def sigma_chi(self) -> float:
        return float(np.sqrt(2.0 * (self.liu_l + 2.0 * self.liu_delta)))

    @property
    def params(self) -> tuple[float, float, float, float]:
        return (self.mean, self.variance, self.liu_l, self.liu_delta)

    def sf(self, t):
        return qf_survival(self, t)

    def isf(self, p_upper: float) -> float:
        return qf_quantile(self, p_upper)


def liu_fit(eigs) -> QuadFormDist:
    lam = np.asarray(eigs, dtype=float)
    if lam.ndim != 1 or lam.size == 0 or np.any(lam < 0):
        raise DegenerateDistribution("eigenvalues must be a non-empty non-negative vector")
    res = kernels.liu_params(lam)
    if res is None:
        raise DegenerateDistribution("all eigenvalues are zero")
    mean, var, l, delta = res
    lam = lam.copy()
    lam.setflags(write=False)
    return QuadFormDist(lam, mean, var, l, delta)


def qf_survival(dist: QuadFormDist, t):
    """Liu approximation to Pr(Q > t); accepts scalars or arrays."""
    arr = np.asarray(t, dtype=float)
    if arr.ndim == 0:
        return kernels.liu_sf(*dist.params, float(arr))
    flat = np.ascontiguousarray(arr.ravel())
    if dist.liu_delta == 0.0:
        # central case vectorises through scipy directly
        mean, var, l, _ = dist.params
        x = (flat - mean) / np.sqrt(var) * np.sqrt(2.0 * l) + l
        out = np.where(x > 0.0, special.chdtrc(l, np.maximum(x, 0.0)), 1.0)
    else:
        out = np.array([kernels.liu_sf(*dist.params, v) for v in flat])
    return np.clip(out, 0.0, 1.0).reshape(arr.shape)


def qf_quantile(dist: QuadFormDist, p_upper: float) -> float:
    """Return t with qf_survival(dist, t) == p_upper."""
    if not 0.0 < p_upper < 1.0:
        raise ValueError("p_upper must lie in (0, 1)")
    t, status = kernels.liu_isf(*dist.params, p_upper)
    if status != 0:
        raise NumericalFailure(f"quantile inversion failed for p={p_upper:g}")
    return t


def qf_mc_sample(eigs, draws: int, seed: int) -> np.ndarray:
    """Monte Carlo draws of sum_j eigs_j Z_j^2."""
    lam = np.asarray(eigs, dtype=float)
    if draws < 1:
        raise ValueError("draws must be >= 1")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((draws, lam.size))
    return (z * z) @ lam


def qf_mc_tail(eigs, thresholds, draws: int, seed: int, chunk: int = 2_000_000) -> np.ndarray:
    """Tail fractions Pr(Q > t) for each threshold from a streamed MC sample.

    Equal eigenvalues are pooled into one chi-square draw per group, which
    leaves the law unchanged and keeps 1e8-draw runs affordable.
    """
    lam = np.asarray(eigs, dtype=float)
    vals, counts = np.unique(lam[lam > 0], return_counts=True)
    thr = np.asarray(thresholds, dtype=float)
    rng = np.random.default_rng(seed)
    hits = np.zeros(thr.size, dtype=np.int64)
    done = 0
    while done < draws:
        m = min(chunk, draws - done)
        q = np.zeros(m)
        for v, c in zip(vals, counts):
            q += v * rng.chisquare(c, m)
        for i, t in enumerate(thr):
            hits[i] += np.count_nonzero(q > t)
        done += m
    return hits / draws
