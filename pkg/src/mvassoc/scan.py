"""Genome-scale scan: stream variants, test them in fixed-size batches, write in input order."""

from __future__ import annotations

import collections
import logging
import multiprocessing as mp
import time
from dataclasses import dataclass

import numpy as np
from scipy import special

from mvassoc._backend import kernels
from mvassoc.assoc import marginal_pvalues
from mvassoc.config import ScanConfig
from mvassoc.covariates import CovariateContext
from mvassoc.io import format_row, parse_covariates, parse_genotype_stream, parse_phenotypes, result_columns, write_results
from mvassoc.model import TraitContext

log = logging.getLogger(__name__)


@dataclass
class ScanSummary:
    variants_read: int = 0
    rows_written: int = 0
    maf_filtered: int = 0
    missing_skipped: int = 0
    failed: int = 0
    seconds: float = 0.0

    @property
    def throughput(self) -> float:
        return self.variants_read / self.seconds if self.seconds > 0 else float("nan")


def compute_batch(ctx, raw: np.ndarray, grid: np.ndarray, tests) -> dict:
    """Every statistic for a block of raw dosages (n x m); returns arrays keyed like result columns."""
    n, k = ctx.n, ctx.k
    m = raw.shape[1]
    xc = raw - raw.mean(axis=0)
    b = ctx.batch(xc)
    xtx = b["score_xtx"]
    mono = xtx <= 1e-12 * n
    xtx_safe = np.where(mono, 1.0, xtx)
    t_m = np.where(mono, np.nan, b["t_m"])
    t_s = np.where(mono, np.nan, b["t_s"])
    out = {"stat_manova": t_m, "stat_ssu": t_s}
    nan = np.full(m, np.nan)

    out["p_manova"] = special.chdtrc(k, t_m) if "manova" in tests else nan
    if "ssu" in tests:
        # eigenvalues scale with X'X, so a and b do too while d is fixed
        a0, b0, d0 = kernels.ssu_abd(ctx.base_eigs)
        arg = (t_s - xtx_safe * b0) / (xtx_safe * a0)
        out["p_ssu"] = np.where(arg > 0, special.chdtrc(d0, np.maximum(arg, 0.0)), 1.0)
        out["p_ssu"][mono] = np.nan
    else:
        out["p_ssu"] = nan

    need_marg = {"marginal", "fisher", "minp"} & set(tests)
    if need_marg:
        df = n - 2 - ctx.n_covariates
        m_xtx = np.where(mono, np.nan, b["m_xtx"])
        _, _, pm = marginal_pvalues(b["m_num"], m_xtx[None, :], ctx.diag_yty[:, None], df)
        pm[:, mono | ~np.isfinite(m_xtx)] = np.nan
        with np.errstate(divide="ignore"):
            fstat = -2.0 * np.log(pm).sum(axis=0)
        out["p_fisher"] = special.chdtrc(2 * k, fstat) if "fisher" in tests else nan
        out["p_minp"] = np.minimum(1.0, k * pm.min(axis=0)) if "minp" in tests else nan
        marg = pm if "marginal" in tests else np.full((k, m), np.nan)
    else:
        out["p_fisher"] = out["p_minp"] = nan
        marg = np.full((k, m), np.nan)
    for j in range(k):
        out[f"p_trait_{j + 1}"] = marg[j]

    reason = np.where(mono, "monomorphic", ".").astype(object)
    if "usat" in tests:
        ok = ~mono & np.isfinite(t_m)
        t_usat = np.full(m, np.nan)
        p_usat = np.full(m, np.nan)
        omega = np.full(m, np.nan)
        if ok.any():
            tu, gs, pu, st = kernels.usat_batch(ctx.base_eigs, np.ascontiguousarray(xtx[ok]),
                                                np.ascontiguousarray(t_m[ok]), np.ascontiguousarray(t_s[ok]), grid)
            good = st == 0
            pu = np.where(good, pu, np.nan)
            t_usat[ok] = tu
            p_usat[ok] = pu
            omega[ok] = np.where(gs >= 0, grid[np.maximum(gs, 0)], np.nan)
            idx = np.flatnonzero(ok)[~good]
            reason[idx] = "usat_numerical_failure"
        out.update(t_usat=t_usat, p_usat=p_usat, usat_omega_star=omega)
    else:
        out.update(t_usat=nan, p_usat=nan, usat_omega_star=nan)
    collinear = ~mono & ~np.isfinite(t_m)
    reason[collinear] = "collinear_with_covariates"
    out["reason"] = reason
    return out


# worker state, set once per process by the pool initializer
_W: dict = {}


def _init_worker(ctx, grid, tests, columns):
    _W.update(ctx=ctx, grid=grid, tests=tests, columns=columns)


def _process(batch) -> list[str]:
    meta, raw = batch
    res = compute_batch(_W["ctx"], raw, _W["grid"], _W["tests"])
    lines = []
    for i, (snp, chrom, pos, maf, n_used) in enumerate(meta):
        row = {"snp_id": snp, "chrom": chrom, "pos": pos, "maf": maf, "n_used": n_used}
        for key, arr in res.items():
            row[key] = arr[i]
        lines.append(format_row(row, _W["columns"]))
    return lines


def _batches(records, n: int, size: int, maf_min: float, summary: ScanSummary):
    meta = []
    raw = np.empty((n, size))
    for rec in records:
        summary.variants_read += 1
        if rec.maf < maf_min:
            summary.maf_filtered += 1
            continue
        raw[:, len(meta)] = rec.dosage
        meta.append((rec.snp_id, rec.chrom, rec.pos, rec.maf, n - rec.n_missing))
        if len(meta) == size:
            yield meta, raw
            meta = []
            raw = np.empty((n, size))
    if meta:
        yield meta, raw[:, : len(meta)].copy()


def build_context(cfg: ScanConfig):
    traits, ids = parse_phenotypes(cfg.pheno_path)
    if cfg.covar_path:
        cov = parse_covariates(cfg.covar_path, ids)
        ctx = CovariateContext(traits, cov, cfg.covariate_mode)
    else:
        ctx = TraitContext(traits)
    return ctx, traits, ids


def run_scan(cfg: ScanConfig) -> ScanSummary:
    """Run a scan and write results atomically; configuration errors raise before any work."""
    cfg.validate()
    t0 = time.perf_counter()
    ctx, traits, ids = build_context(cfg)
    columns = result_columns(traits.k)
    grid = cfg.weight_grid.array
    tests = tuple(cfg.tests)
    summary = ScanSummary()
    skipped: list = []
    records = parse_genotype_stream(cfg.geno_path, ids, cfg.max_missing, skipped)
    batches = _batches(records, traits.n, cfg.batch_size, cfg.maf_min, summary)

    def rows():
        if cfg.threads == 1:
            _init_worker(ctx, grid, tests, columns)
            for b in batches:
                yield from _process(b)
            return
        mpctx = mp.get_context("fork") if "fork" in mp.get_all_start_methods() else mp.get_context()
        with mpctx.Pool(cfg.threads, initializer=_init_worker, initargs=(ctx, grid, tests, columns)) as pool:
            pending: collections.deque = collections.deque()
            limit = 2 * cfg.threads
            for b in batches:
                pending.append(pool.apply_async(_process, (b,)))
                while len(pending) >= limit:
                    yield from pending.popleft().get()
            while pending:
                yield from pending.popleft().get()

    def counted():
        for line in rows():
            if not line.rstrip("\n").endswith("\t."):
                summary.failed += 1
            yield line

    summary.rows_written = write_results(counted(), cfg.out_path, columns)
    summary.missing_skipped = len(skipped)
    summary.seconds = time.perf_counter() - t0
    log.info("scan: %d variants read, %d rows, %d below maf, %d skipped for missingness, %.1f variants/s",
             summary.variants_read, summary.rows_written, summary.maf_filtered, summary.missing_skipped,
             summary.throughput)
    return summary
