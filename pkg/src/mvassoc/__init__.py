"""Multivariate single-variant association tests for correlated quantitative traits."""

from mvassoc._backend import NAME as backend
from mvassoc.assoc import (
    Method,
    TestOutcome,
    WeightGrid,
    fisher_combine,
    manova_test,
    marginal_tests,
    minp_combine,
    omega_eigs,
    ssu_test,
    usat_pvalue,
    usat_test,
)
from mvassoc.covariates import CovariateMatrix, NullFit, adjusted_manova, adjusted_ssu, adjusted_usat, fit_null
from mvassoc.model import GenotypeRecord, SufficientStats, TraitMatrix, build_sufficient_stats, center, compute_maf
from mvassoc.quadform import QuadFormDist, SsuNullParams, liu_fit, qf_mc_sample, qf_quantile, qf_survival, ssu_params

__version__ = "0.1.0"

__all__ = [
    "CovariateMatrix",
    "GenotypeRecord",
    "Method",
    "NullFit",
    "QuadFormDist",
    "SsuNullParams",
    "SufficientStats",
    "TestOutcome",
    "TraitMatrix",
    "WeightGrid",
    "adjusted_manova",
    "adjusted_ssu",
    "adjusted_usat",
    "backend",
    "build_sufficient_stats",
    "center",
    "compute_maf",
    "fisher_combine",
    "fit_null",
    "liu_fit",
    "manova_test",
    "marginal_tests",
    "minp_combine",
    "omega_eigs",
    "qf_mc_sample",
    "qf_quantile",
    "qf_survival",
    "ssu_params",
    "ssu_test",
    "usat_pvalue",
    "usat_test",
]
