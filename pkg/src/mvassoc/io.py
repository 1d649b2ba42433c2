"""Tab-separated phenotype, covariate, dosage and results files."""

from __future__ import annotations

import logging
import math
import os
import tempfile
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from mvassoc._backend import kernels
from mvassoc.covariates import CovariateMatrix
from mvassoc.errors import ParseError, SchemaError
from mvassoc.model import GenotypeRecord, TraitMatrix

log = logging.getLogger(__name__)

MAX_MISSING_FRACTION = 0.10
GENO_LEAD = ("snp_id", "chrom", "pos")


def _parse_float(tok: str, path, line: int, col: str) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise ParseError(f"non-numeric value {tok!r} in column {col!r}", path, line) from None
    if not math.isfinite(v):
        raise ParseError(f"missing or non-finite value {tok!r} in column {col!r}", path, line)
    return v


def _read_table(path, first_col: str) -> tuple[list[str], list[str], np.ndarray]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        header_line = fh.readline()
        if not header_line.strip():
            raise ParseError("empty file", path, 1)
        header = header_line.rstrip("\r\n").split("\t")
        if header[0] != first_col or len(header) < 2:
            raise ParseError(f"header must start with {first_col!r} followed by column names", path, 1)
        if len(set(header)) != len(header):
            raise ParseError("duplicate column names in header", path, 1)
        ids: list[str] = []
        seen: set[str] = set()
        rows: list[list[float]] = []
        for lineno, raw in enumerate(fh, start=2):
            line = raw.rstrip("\r\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != len(header):
                raise ParseError(f"expected {len(header)} fields, found {len(fields)}", path, lineno)
            sid = fields[0]
            if sid in seen:
                raise ParseError(f"duplicate sample id {sid!r}", path, lineno)
            seen.add(sid)
            ids.append(sid)
            rows.append([_parse_float(t, path, lineno, c) for t, c in zip(fields[1:], header[1:])])
    if not rows:
        raise ParseError("no data rows", path, 2)
    return header[1:], ids, np.array(rows, dtype=float)


def parse_phenotypes(path) -> tuple[TraitMatrix, list[str]]:
    """Read ``sample_id  trait...`` rows; returns centered traits and sample ids."""
    names, ids, values = _read_table(path, "sample_id")
    try:
        traits = TraitMatrix.from_raw(values, names)
    except ValueError as exc:
        raise ParseError(str(exc), path) from None
    return traits, ids


def parse_covariates(path, sample_ids: Sequence[str] | None = None) -> CovariateMatrix:
    names, ids, values = _read_table(path, "sample_id")
    if sample_ids is not None and list(ids) != list(sample_ids):
        raise SchemaError("covariate sample ids do not match the phenotype file order", path)
    return CovariateMatrix(values, tuple(names))


def read_genotype_header(fh, path, sample_ids: Sequence[str] | None) -> list[str]:
    header = fh.readline().decode("utf-8").rstrip("\r\n").split("\t")
    if tuple(header[:3]) != GENO_LEAD:
        raise ParseError("header must start with snp_id, chrom, pos", path, 1)
    samples = header[3:]
    if not samples:
        raise ParseError("no sample columns in header", path, 1)
    if sample_ids is not None and samples != list(sample_ids):
        if sorted(samples) == sorted(sample_ids):
            raise SchemaError("genotype sample ids are in a different order than the phenotype file", path, 1)
        raise SchemaError("genotype sample ids do not match the phenotype file", path, 1)
    return samples


@dataclass
class SkippedVariant:
    snp_id: str
    line: int
    reason: str


def parse_genotype_stream(path, sample_ids: Sequence[str] | None = None,
                          max_missing: float = MAX_MISSING_FRACTION,
                          skipped: list | None = None) -> Iterator[GenotypeRecord]:
    """Yield one :class:`GenotypeRecord` per dosage row.

    ``NA`` entries are replaced by the mean of the observed dosages; the
    m.a.f. is computed from observed entries only. Rows with more than
    ``max_missing`` missing entries are skipped and logged (and appended to
    ``skipped`` when a list is given).
    """
    with open(path, "rb") as fh:
        samples = read_genotype_header(fh, path, sample_ids)
        n = len(samples)
        buf = np.empty(n)
        for lineno, raw in enumerate(fh, start=2):
            if raw in (b"\n", b"\r\n"):
                continue
            parts = raw.split(b"\t", 3)
            if len(parts) < 4:
                raise ParseError(f"expected {n + 3} fields", path, lineno)
            snp = parts[0].decode("utf-8")
            chrom = parts[1].decode("utf-8")
            try:
                pos = int(parts[2])
            except ValueError:
                raise ParseError(f"invalid position {parts[2]!r}", path, lineno) from None
            code, where = kernels.parse_dosages(parts[3], n, buf)
            if code == -2:
                raise ParseError(f"expected {n + 3} fields, found {where + 3}", path, lineno)
            if code == -1:
                raise ParseError(f"invalid dosage in column {samples[where]!r}", path, lineno)
            if code == -3:
                raise ParseError(f"dosage outside [0, 2] in column {samples[where]!r}", path, lineno)
            missing = code
            if missing > max_missing * n:
                reason = f"{missing}/{n} dosages missing"
                log.info("skipping %s (line %d): %s", snp, lineno, reason)
                if skipped is not None:
                    skipped.append(SkippedVariant(snp, lineno, reason))
                continue
            d = buf.copy()
            if missing:
                mask = np.isnan(d)
                obs = d[~mask]
                d[mask] = obs.mean() if obs.size else 0.0
                m = float(obs.mean()) / 2.0 if obs.size else 0.0
            else:
                m = float(d.mean()) / 2.0
            yield GenotypeRecord(snp, chrom, pos, d, min(m, 1.0 - m), missing)


# ------------------------------------------------------------------ results


def result_columns(k: int) -> list[str]:
    return (
        ["snp_id", "chrom", "pos", "maf", "n_used", "p_manova", "p_ssu", "p_usat", "usat_omega_star",
         "p_fisher", "p_minp"]
        + [f"p_trait_{j + 1}" for j in range(k)]
        + ["stat_manova", "stat_ssu", "t_usat", "reason"]
    )


P_COLUMNS = {"p_manova", "p_ssu", "p_usat", "p_fisher", "p_minp", "stat_manova", "stat_ssu", "t_usat"}


def format_value(col: str, v) -> str:
    if col in ("snp_id", "chrom", "reason"):
        return str(v) if v not in (None, "") else "."
    if col in ("pos", "n_used"):
        return str(int(v))
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "NA"
    if col == "maf":
        return f"{v:.6f}"
    if col == "usat_omega_star":
        return f"{v:.2f}"
    return f"{v:.5e}"


def format_row(row: dict, columns: Sequence[str]) -> str:
    return "\t".join(format_value(c, row.get(c)) for c in columns) + "\n"


def write_results(rows: Iterable, path, columns: Sequence[str]) -> int:
    """Atomically write rows (dicts or preformatted lines) with a header.

    Output goes to a temporary file in the destination directory and is
    renamed into place only after every row has been written.
    """
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    count = 0
    try:
        fd, tmp = tempfile.mkstemp(prefix=".mvassoc-", suffix=".tmp", dir=d)
    except OSError as exc:
        raise OSError(f"{path}: cannot create output: {exc}") from exc
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write("\t".join(columns) + "\n")
            for row in rows:
                fh.write(row if isinstance(row, str) else format_row(row, columns))
                count += 1
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise
    return count


def read_results(path) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        for lineno, line in enumerate(fh, start=2):
            fields = line.rstrip("\n").split("\t")
            if len(fields) != len(header):
                raise ParseError("ragged results row", path, lineno)
            row = {}
            for c, v in zip(header, fields):
                if c in ("snp_id", "chrom", "reason"):
                    row[c] = "" if v == "." else v
                elif c in ("pos", "n_used"):
                    row[c] = int(v)
                else:
                    row[c] = math.nan if v == "NA" else float(v)
            out.append(row)
    return out


# ---------------------------------------------------------------- writers for synthetic data


def write_phenotypes(path, sample_ids: Sequence[str], values: np.ndarray, names: Sequence[str]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(["sample_id", *names]) + "\n")
        for sid, row in zip(sample_ids, values):
            fh.write(sid + "\t" + "\t".join(f"{v:.6g}" for v in row) + "\n")


@dataclass
class DosageWriter:
    """Streaming writer for dosage files (integer dosages are written compactly)."""

    path: str
    sample_ids: Sequence[str]
    _fh: object = field(init=False, default=None)

    def __enter__(self):
        self._fh = open(self.path, "w", encoding="utf-8")
        self._fh.write("\t".join([*GENO_LEAD, *self.sample_ids]) + "\n")
        return self

    def write(self, snp_id: str, chrom: str, pos: int, dosage: np.ndarray) -> None:
        d = np.asarray(dosage)
        if np.all(d == np.round(d)):
            body = "\t".join(map(str, d.astype(np.int64).tolist()))
        else:
            body = "\t".join("NA" if math.isnan(v) else f"{v:.4g}" for v in d.tolist())
        self._fh.write(f"{snp_id}\t{chrom}\t{pos}\t{body}\n")

    def __exit__(self, *exc):
        self._fh.close()
        return False
