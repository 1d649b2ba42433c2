"""Synthetic GWAS files with planted pleiotropic signals.

Planted variants move two strongly correlated traits in opposite
directions. Each marginal regression sees only a small shift, while the
joint tests see the contrast against a low residual variance.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from mvassoc.io import GENO_LEAD, write_phenotypes
from mvassoc.sim import CorrelationSpec, simulate_genotype, symmetric_root


@dataclass
class GwasSpec:
    n: int = 5816
    K: int = 3
    n_variants: int = 100_000
    rho: float = 0.95
    planted: int = 10
    planted_maf: float = 0.3
    marginal_ncp: float = 4.0
    maf_range: tuple[float, float] = (0.01, 0.5)
    seed: int = 1
    planted_pattern: tuple[float, ...] = field(default=(1.0, -1.0, 0.0))


@dataclass
class GwasFiles:
    pheno: str
    geno: str
    planted_ids: list[str]
    spec: GwasSpec


def _planted_positions(spec: GwasSpec) -> np.ndarray:
    if spec.planted == 0:
        return np.array([], dtype=int)
    step = spec.n_variants // spec.planted
    return np.arange(spec.planted) * step + step // 2


def write_dosage_line(fh, snp: str, chrom: str, pos: int, dosage: np.ndarray, buf: np.ndarray) -> None:
    """Integer dosages 0/1/2 as ``d<TAB>d...<NL>`` built without per-field formatting."""
    buf[0::2] = dosage.astype(np.uint8) + 48
    fh.write(f"{snp}\t{chrom}\t{pos}\t".encode())
    fh.write(buf.tobytes())


def make_gwas(out_dir: str, spec: GwasSpec) -> GwasFiles:
    """Write ``pheno.tsv`` and ``geno.tsv``; traits depend only on the planted variants."""
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    n, K = spec.n, spec.K
    ids = [f"S{i:06d}" for i in range(n)]
    planted_at = set(_planted_positions(spec).tolist())
    pattern = np.zeros(K)
    pattern[: len(spec.planted_pattern)] = spec.planted_pattern[:K]
    f = spec.planted_maf
    # residual variance 1, so a per-trait noncentrality of c needs b^2 n 2f(1-f) = c
    b = math.sqrt(spec.marginal_ncp / (n * 2 * f * (1 - f)))
    root = symmetric_root(CorrelationSpec("CS", spec.rho).matrix(K))
    y = rng.standard_normal((n, K)) @ root

    geno_path = os.path.join(out_dir, "geno.tsv")
    planted_ids = []
    buf = np.full(2 * n, 9, dtype=np.uint8)
    buf[-1] = 10
    with open(geno_path, "wb") as fh:
        fh.write(("\t".join([*GENO_LEAD, *ids]) + "\n").encode())
        for j in range(spec.n_variants):
            if j in planted_at:
                d = simulate_genotype(n, f, rng)
                y += np.outer(d - 2 * f, pattern * b)
                snp = f"planted{len(planted_ids) + 1}"
                planted_ids.append(snp)
            else:
                maf = rng.uniform(*spec.maf_range)
                d = simulate_genotype(n, maf, rng)
                snp = f"rs{j + 1}"
            write_dosage_line(fh, snp, "1", 1000 * (j + 1), d, buf)
    pheno_path = os.path.join(out_dir, "pheno.tsv")
    write_phenotypes(pheno_path, ids, y + 10.0, [f"trait{k + 1}" for k in range(K)])
    return GwasFiles(pheno_path, geno_path, planted_ids, spec)
