"""Plain-text (INI) configuration for scans and experiments."""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from mvassoc.assoc import WeightGrid
from mvassoc.errors import ConfigError, InvalidDesign
from mvassoc.sim import CorrelationSpec, SimDesign, TheoremScenario, effect_from_variance_explained

SCAN_TESTS = ("manova", "ssu", "usat", "fisher", "minp", "marginal")


def default_threads() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


@dataclass
class ScanConfig:
    pheno_path: str
    geno_path: str
    out_path: str
    covar_path: str | None = None
    tests: tuple[str, ...] = SCAN_TESTS
    maf_min: float = 0.01
    weight_grid: WeightGrid = field(default_factory=WeightGrid.default)
    threads: int = field(default_factory=default_threads)
    covariate_mode: str = "shared"
    batch_size: int = 256
    max_missing: float = 0.10

    def validate(self) -> None:
        bad = set(self.tests) - set(SCAN_TESTS)
        if bad:
            raise ConfigError(f"unknown tests: {', '.join(sorted(bad))}")
        if not 0.0 <= self.maf_min < 0.5:
            raise ConfigError("maf_min must lie in [0, 0.5)")
        if self.covariate_mode not in ("shared", "per_trait"):
            raise ConfigError("covariate_mode must be 'shared' or 'per_trait'")
        if self.threads < 1 or self.batch_size < 1:
            raise ConfigError("threads and batch_size must be positive")
        if not 0.0 <= self.max_missing <= 1.0:
            raise ConfigError("max_missing must lie in [0, 1]")
        for p in (self.pheno_path, self.geno_path, self.covar_path):
            if p is not None and not os.path.isfile(p):
                raise ConfigError(f"input file not found: {p}")


def parse_list(text: str, conv=str) -> list:
    return [conv(t.strip()) for t in text.replace(";", ",").split(",") if t.strip()]


def parse_grid(text: str) -> WeightGrid:
    """Either an integer grid size or an explicit comma-separated list of weights."""
    text = text.strip()
    try:
        if "," not in text:
            return WeightGrid.default(int(text))
        return WeightGrid(tuple(parse_list(text, float)))
    except ValueError as exc:
        raise ConfigError(f"invalid weight grid {text!r}: {exc}") from None


def load_scan_config(path) -> dict:
    """Read the ``[scan]`` section into keyword arguments for :class:`ScanConfig`."""
    cp = _read(path)
    if not cp.has_section("scan"):
        raise ConfigError(f"{path}: missing [scan] section")
    s = cp["scan"]
    out: dict = {}
    for key in ("pheno_path", "geno_path", "out_path", "covar_path", "covariate_mode"):
        if key in s:
            out[key] = s[key]
    for key, conv in (("maf_min", float), ("threads", int), ("batch_size", int), ("max_missing", float)):
        if key in s:
            out[key] = _conv(s, key, conv)
    if "tests" in s:
        out["tests"] = tuple(parse_list(s["tests"]))
    if "weight_grid" in s:
        out["weight_grid"] = parse_grid(s["weight_grid"])
    return out


# ------------------------------------------------------------------ experiments


@dataclass
class Experiment:
    name: str
    kind: str  # type1 | power
    design: SimDesign
    tests: tuple[str, ...]
    alphas: tuple[float, ...] = (0.01, 0.05)
    fractions: tuple[float, ...] = ()
    grid: WeightGrid = field(default_factory=WeightGrid.default)


def _read(path) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return cp


def _conv(sec, key, conv, default=None):
    if key not in sec:
        if default is None:
            raise ConfigError(f"[{sec.name}] missing key {key!r}")
        return default
    try:
        return conv(sec[key])
    except ValueError:
        raise ConfigError(f"[{sec.name}] invalid value for {key!r}: {sec[key]!r}") from None


def bundled_config(name: str) -> Path:
    """Resolve a bundled config by short name (``table1``) or return the path unchanged."""
    p = Path(name)
    if p.is_file():
        return p
    stem = name[:-4] if name.endswith(".cfg") else name
    ref = resources.files("mvassoc") / "configs" / f"{stem}.cfg"
    if not ref.is_file():
        raise ConfigError(f"no such config file or bundled config: {name}")
    return Path(str(ref))


def _design(sec) -> SimDesign:
    n = _conv(sec, "n", int)
    K = _conv(sec, "k", int)
    maf = _conv(sec, "maf", float, 0.2)
    total_var = _conv(sec, "total_var", float, 10.0)
    if "effect_size" in sec:
        effect = _conv(sec, "effect_size", float)
    elif "h2" in sec:
        effect = effect_from_variance_explained(_conv(sec, "h2", float), total_var, maf)
    else:
        effect = 0.0
    corr = CorrelationSpec(sec.get("corr", "CS").strip().upper(), _conv(sec, "rho", float, 0.0),
                           _conv(sec, "block_fraction", float, 0.8))
    return SimDesign(n=n, K=K, maf=maf, effect_size=effect, beta0=_conv(sec, "beta0", float, 1.0),
                     total_var=total_var, corr=corr, replicates=_conv(sec, "replicates", int, 1000),
                     seed=_conv(sec, "seed", int, 1))


def load_experiments(path) -> list[Experiment]:
    cp = _read(path)
    out = []
    for name in cp.sections():
        sec = cp[name]
        kind = sec.get("kind", "type1").strip()
        if kind not in ("type1", "power"):
            continue
        try:
            design = _design(sec)
        except (InvalidDesign, ValueError) as exc:
            raise ConfigError(f"[{name}] {exc}") from None
        tests = tuple(parse_list(sec.get("tests", "fisher, minp, ssu, manova, usat")))
        exp = Experiment(
            name=name,
            kind=kind,
            design=design,
            tests=tests,
            alphas=tuple(parse_list(sec.get("alphas", "0.01, 0.05"), float)),
            fractions=tuple(parse_list(sec.get("fractions", ""), float)),
            grid=parse_grid(sec.get("weight_grid", "11")),
        )
        if kind == "power" and not exp.fractions:
            raise ConfigError(f"[{name}] power experiments need 'fractions'")
        out.append(exp)
    if not out:
        raise ConfigError(f"{path}: no experiment sections")
    return out


def load_theorem_scenarios(path) -> tuple[list[TheoremScenario], dict | None]:
    """Expand ``kind = theorem`` sections over their K x rho x u lists.

    A ``kind = two_trait_gap`` section, if present, is returned as keyword
    arguments for :func:`mvassoc.sim.verify_two_trait_gap`.
    """
    cp = _read(path)
    scenarios = []
    t2 = None
    for name in cp.sections():
        sec = cp[name]
        kind = sec.get("kind", "").strip()
        if kind == "two_trait_gap":
            t2 = {k: _conv(sec, k, float) for k in ("rho", "beta1", "beta2", "maf", "sigma2") if k in sec}
            for k in ("n", "reps", "seed"):
                if k in sec:
                    t2[k] = _conv(sec, k, int)
            continue
        if kind != "theorem":
            continue
        Ks = parse_list(sec.get("k", "2, 5, 10"), int)
        rhos = parse_list(sec.get("rho", "0.2, 0.4, 0.6, 0.8"), float)
        structure = sec.get("structure", "CS").strip().upper()
        common = dict(
            beta=_conv(sec, "beta", float, 0.25),
            maf=_conv(sec, "maf", float, 0.2),
            sigma2=_conv(sec, "sigma2", float, 9.98),
            n=_conv(sec, "n", int, 100_000),
            reps=_conv(sec, "reps", int, 20),
            structure=structure,
        )
        for K in Ks:
            if "u" in sec:
                us = parse_list(sec["u"], int)
            elif structure == "BLOCK_CS":
                m = int(round(0.8 * K))
                us = list(range(m + 1, K))
            else:
                us = list(range(1, K))
            for rho in rhos:
                for u in us:
                    if 1 <= u < K:
                        scenarios.append(TheoremScenario(K, rho, u, **common))
    return scenarios, t2
