from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PRECISION = 16


class CdfError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class CdfTable:
    """Integer cumulative frequencies ``c_0 = 0 < c_1 < ... < c_n = 2**precision``."""

    cumulative: np.ndarray
    precision: int = PRECISION

    @property
    def alphabet_size(self):
        return len(self.cumulative) - 1

    @property
    def frequencies(self):
        return np.diff(self.cumulative)

    def probabilities(self):
        return self.frequencies / float(1 << self.precision)

    def __eq__(self, other):
        return (isinstance(other, CdfTable) and self.precision == other.precision
                and np.array_equal(self.cumulative, other.cumulative))

    def __hash__(self):
        return hash((self.precision, self.cumulative.tobytes()))


def quantize_pmf(pmf, precision=PRECISION):
    """Integer frequencies summing to ``2**precision``, each at least 1.

    Entries are rounded to the nearest integer and floored at 1; the
    largest entry then absorbs the residue. If the largest entry cannot
    absorb a negative residue alone, the excess is taken from the largest
    remaining entries one unit at a time.
    """
    pmf = np.asarray(pmf, dtype=np.float64)
    if pmf.ndim != 1 or pmf.size == 0:
        raise CdfError("pmf must be a non-empty vector")
    total = 1 << precision
    if pmf.size > total:
        raise CdfError(f"alphabet of {pmf.size} symbols exceeds 2**{precision}")
    if np.any(pmf < 0) or not np.all(np.isfinite(pmf)):
        raise CdfError("pmf must be finite and non-negative")
    if abs(pmf.sum() - 1.0) > 1e-6:
        raise CdfError(f"pmf sums to {pmf.sum():.9f}, expected 1")
    freq = np.maximum(np.rint(pmf * total), 1).astype(np.int64)
    residue = total - int(freq.sum())
    top = int(np.argmax(freq))
    if freq[top] + residue >= 1:
        freq[top] += residue
    else:
        residue += int(freq[top]) - 1
        freq[top] = 1
        order = np.argsort(-freq, kind="stable")
        while residue < 0:
            for i in order:
                if residue == 0:
                    break
                if freq[i] > 1:
                    take = min(int(freq[i]) - 1, -residue)
                    freq[i] -= take
                    residue += take
    return freq


def build_cdf(pmf, precision=PRECISION):
    freq = quantize_pmf(pmf, precision)
    cum = np.zeros(freq.size + 1, dtype=np.uint32)
    np.cumsum(freq, out=cum[1:])
    return CdfTable(cum, precision)


def pack_tables(tables):
    """Stack tables into a padded (T, max_n + 1) uint32 matrix plus sizes."""
    if isinstance(tables, CdfTable):
        tables = [tables]
    if not tables:
        raise CdfError("no tables")
    prec = {t.precision for t in tables}
    if prec != {PRECISION}:
        raise CdfError(f"coder supports precision {PRECISION} only, got {sorted(prec)}")
    width = max(t.alphabet_size for t in tables) + 1
    mat = np.full((len(tables), width), 1 << PRECISION, dtype=np.uint32)
    sizes = np.empty(len(tables), dtype=np.int32)
    for i, t in enumerate(tables):
        mat[i, :len(t.cumulative)] = t.cumulative
        sizes[i] = t.alphabet_size
    return mat, sizes


def tables_from_pmfs(pmfs, precision=PRECISION):
    """Vectorised :func:`build_cdf` for a (T, n) matrix of pmfs.

    Returns the packed matrix directly; every row has the same alphabet.
    """
    pmfs = np.asarray(pmfs, dtype=np.float64)
    mat = np.empty((pmfs.shape[0], pmfs.shape[1] + 1), dtype=np.uint32)
    for i, row in enumerate(pmfs):
        mat[i] = build_cdf(row, precision).cumulative
    return mat, np.full(pmfs.shape[0], pmfs.shape[1], dtype=np.int32)
