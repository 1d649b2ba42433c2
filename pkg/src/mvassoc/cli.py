"""Command-line entry point: ``mvassoc {scan,simulate,calibrate,power,verify-theorems}``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace

from mvassoc import __version__
from mvassoc._backend import NAME as BACKEND
from mvassoc.config import (
    SCAN_TESTS,
    ScanConfig,
    bundled_config,
    load_experiments,
    load_scan_config,
    load_theorem_scenarios,
    parse_grid,
    parse_list,
)
from mvassoc.errors import ConfigError, MvAssocError, ParseError

log = logging.getLogger("mvassoc")


def _atomic_text(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


# ---------------------------------------------------------------------- scan


def cmd_scan(args) -> int:
    from mvassoc.scan import run_scan

    kw = load_scan_config(args.config) if args.config else {}
    for key in ("pheno_path", "geno_path", "out_path", "covar_path", "maf_min", "threads",
                "covariate_mode", "batch_size", "max_missing"):
        val = getattr(args, key)
        if val is not None:
            kw[key] = val
    if args.tests:
        kw["tests"] = tuple(parse_list(args.tests))
    if args.weight_grid:
        kw["weight_grid"] = parse_grid(args.weight_grid)
    missing = [k for k in ("pheno_path", "geno_path", "out_path") if k not in kw]
    if missing:
        raise ConfigError("missing required option(s): " + ", ".join("--" + m.split("_")[0] for m in missing))
    cfg = ScanConfig(**kw)
    summary = run_scan(cfg)
    print(
        f"variants read: {summary.variants_read}\nrows written: {summary.rows_written}\n"
        f"below maf_min: {summary.maf_filtered}\nskipped (missingness): {summary.missing_skipped}\n"
        f"rows with NA results: {summary.failed}\nseconds: {summary.seconds:.2f}\n"
        f"throughput: {summary.throughput:.0f} variants/s ({cfg.threads} worker(s), {BACKEND} kernels)",
        file=sys.stderr,
    )
    if args.strict and summary.failed:
        return 3
    return 0


# ------------------------------------------------------------------ simulate


def cmd_simulate(args) -> int:
    from mvassoc.synthetic import GwasSpec, make_gwas

    spec = GwasSpec(n=args.n, K=args.traits, n_variants=args.variants, planted=args.planted, rho=args.rho,
                    marginal_ncp=args.marginal_ncp, seed=args.seed)
    files = make_gwas(args.out_dir, spec)
    print(f"phenotypes: {files.pheno}\ngenotypes: {files.geno}\nplanted: {', '.join(files.planted_ids)}")
    return 0


# ----------------------------------------------------------- calibrate / power


def _experiments(args, kind: str):
    exps = [e for e in load_experiments(bundled_config(args.config)) if e.kind == kind]
    if not exps:
        raise ConfigError(f"{args.config}: no '{kind}' experiments")
    for e in exps:
        upd = {}
        if args.seed is not None:
            upd["seed"] = args.seed
        if args.replicates is not None:
            upd["replicates"] = args.replicates
        if upd:
            e.design = replace(e.design, **upd)
    return exps


def cmd_calibrate(args) -> int:
    from mvassoc.sim import run_type1_study

    exps = _experiments(args, "type1")
    lines = ["experiment\tK\trho\tcorr\tn\ttest\talpha\trate\tse\treplicates\n"]
    wide: dict = {}
    for e in exps:
        log.info("type-I: %s (%d replicates)", e.name, e.design.replicates)
        res = run_type1_study(e.design, e.tests, e.alphas, grid=e.grid)
        d = e.design
        for r in res.rows:
            lines.append(f"{e.name}\t{d.K}\t{d.corr.rho:g}\t{d.corr.kind.value}\t{d.n}\t{r.test}\t{r.alpha:g}\t"
                         f"{r.rate:.5f}\t{r.se:.5f}\t{r.replicates}\n")
            wide.setdefault(r.test, {})[(e.name, r.alpha)] = r.rate
    _atomic_text(args.out, "".join(lines))
    if args.out:
        # table layout: one row per test, one column per experiment x alpha
        cols = sorted({c for row in wide.values() for c in row}, key=lambda c: (c[1], [e.name for e in exps].index(c[0])))
        print("test\t" + "\t".join(f"{n}|a={a:g}" for n, a in cols))
        for t, row in wide.items():
            print(t + "\t" + "\t".join(f"{row.get(c, float('nan')):.4f}" for c in cols))
    return 0


def cmd_power(args) -> int:
    from mvassoc.sim import run_power_study

    exps = _experiments(args, "power")
    lines = ["experiment\tK\trho\tcorr\tn\teffect_size\ttest\tfraction\tpower\treplicates\n"]
    for e in exps:
        log.info("power: %s (%d replicates)", e.name, e.design.replicates)
        res = run_power_study(e.design, e.fractions, e.tests, grid=e.grid)
        d = e.design
        for r in res.rows:
            lines.append(f"{e.name}\t{d.K}\t{d.corr.rho:g}\t{d.corr.kind.value}\t{d.n}\t{d.effect_size:.4f}\t"
                         f"{r.test}\t{r.fraction:.4f}\t{r.power:.4f}\t{d.replicates}\n")
    _atomic_text(args.out, "".join(lines))
    return 0


# ----------------------------------------------------------- verify-theorems


def cmd_verify_theorems(args) -> int:
    from mvassoc.sim import verify_two_trait_gap, verify_theorem_limits

    scenarios, t2 = load_theorem_scenarios(bundled_config(args.config))
    if args.replicates is not None:
        scenarios = [replace(s, reps=args.replicates) for s in scenarios]
    seed = 1 if args.seed is None else args.seed
    rows = verify_theorem_limits(scenarios, seed=seed)
    out = ["structure\tK\trho\tu\tcomplete_emp\tcomplete_theory\tcomplete_rel\tpartial_emp\tpartial_theory\t"
           "partial_rel\tgap_emp\tgap_se\tgap_theory\tpredicted\tobserved\tstatus\n"]
    n_fail = 0
    for r in rows:
        sc = r.scenario
        ok = r.complete_rel < 0.01 and r.partial_rel < 0.01 and r.predicted_regime == r.observed_regime
        if sc.structure == "BLOCK_CS":
            ok = ok and r.gap_rel < 0.05
        n_fail += not ok
        out.append(
            f"{sc.structure}\t{sc.K}\t{sc.rho:g}\t{sc.u}\t{r.complete_emp:.6f}\t{r.complete_theory:.6f}\t"
            f"{r.complete_rel:.2e}\t{r.partial_emp:.6f}\t{r.partial_theory:.6f}\t{r.partial_rel:.2e}\t"
            f"{r.gap_emp:.3e}\t{r.gap_se:.1e}\t{r.gap_theory:.3e}\t{r.predicted_regime}\t{r.observed_regime}\t"
            f"{'PASS' if ok else 'FAIL'}\n"
        )
    if t2 is not None:
        if args.replicates is not None:
            t2["reps"] = max(args.replicates, 2)
        mean, se, lim = verify_two_trait_gap(**t2)
        rel = abs(mean / lim - 1)
        n_fail += rel >= 0.05
        out.append(f"# two-trait determinant difference: empirical {mean:.5f} (se {se:.1e}), limit {lim:.5f}, "
                   f"relative deviation {rel:.2e}, {'PASS' if rel < 0.05 else 'FAIL'}\n")
    _atomic_text(args.out, "".join(out))
    print(f"{len(rows)} scenarios, {n_fail} failing check(s)", file=sys.stderr)
    return 0


# ---------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mvassoc", description="Multivariate single-variant association tests.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("scan", help="test every variant in a dosage file")
    s.add_argument("--config", help="INI file with a [scan] section; flags override it")
    s.add_argument("--pheno", dest="pheno_path")
    s.add_argument("--geno", dest="geno_path")
    s.add_argument("--covar", dest="covar_path")
    s.add_argument("--out", dest="out_path")
    s.add_argument("--tests", help=f"comma-separated subset of {','.join(SCAN_TESTS)}")
    s.add_argument("--maf-min", dest="maf_min", type=float)
    s.add_argument("--weight-grid", dest="weight_grid", help="grid size or comma-separated weights")
    s.add_argument("--threads", type=int)
    s.add_argument("--covariate-mode", dest="covariate_mode", choices=("shared", "per_trait"))
    s.add_argument("--batch-size", dest="batch_size", type=int)
    s.add_argument("--max-missing", dest="max_missing", type=float)
    s.add_argument("--strict", action="store_true", help="exit 3 if any variant produced NA results")
    s.set_defaults(func=cmd_scan)

    s = sub.add_parser("simulate", help="write a synthetic GWAS (phenotypes + dosages) with planted signals")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--n", type=int, default=5816)
    s.add_argument("--traits", type=int, default=3)
    s.add_argument("--variants", type=int, default=10_000)
    s.add_argument("--planted", type=int, default=10)
    s.add_argument("--rho", type=float, default=0.95)
    s.add_argument("--marginal-ncp", dest="marginal_ncp", type=float, default=4.0)
    s.add_argument("--seed", type=int, default=1)
    s.set_defaults(func=cmd_simulate)

    for name, func, default, helptext in (
        ("calibrate", cmd_calibrate, "table1", "type-I error tables"),
        ("power", cmd_power, "fig4", "empirical power curves"),
        ("verify-theorems", cmd_verify_theorems, "theorems", "large-n determinant limit checks"),
    ):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--config", default=default, help="config path or bundled name")
        s.add_argument("--seed", type=int)
        s.add_argument("--replicates", type=int, help="override replicate count (repetitions for theorems)")
        s.add_argument("--out", help="output TSV (default: stdout)")
        s.set_defaults(func=func)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ParseError) as exc:
        print(f"mvassoc: error: {exc}", file=sys.stderr)
        return 2
    except (MvAssocError, OSError) as exc:
        print(f"mvassoc: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
