from __future__ import annotations

import numpy as np

from ..tensorcore import RngStream
from .fairness import MetricsError


def _stat(statistic, samples):
    if statistic in (None, "mean"):
        return samples.mean(axis=-1)
    if statistic == "median":
        return np.median(samples, axis=-1)
    return np.asarray(statistic(samples, axis=-1), dtype=np.float64)


def bootstrap_ci(values, groups, statistic="mean", B=1000, alpha=0.05, seed=0):
    """Percentile bootstrap intervals per group and for the between-group spread.

    Examples are resampled with replacement within each group. The spread
    (max minus min of the per-group statistic) is evaluated on the same
    replicates. Each interval is widened, if needed, to contain its point
    estimate: the spread is biased upward under resampling, so its raw
    percentile interval can sit entirely above the point value.

    Returns {"groups": {g: {"estimate", "low", "high"}}, "bias": {...}}.
    """
    values = np.asarray(values, dtype=np.float64)
    groups = np.asarray(groups, dtype=object)
    if values.shape != groups.shape:
        raise MetricsError("values and groups must align")
    names = sorted(set(groups.tolist()))
    if not names:
        raise MetricsError("no examples")
    gen = RngStream(seed).child("bootstrap").generator()
    point, reps = {}, {}
    for g in names:
        v = values[groups == g]
        if len(v) < 2:
            raise MetricsError(f"group {g!r} has {len(v)} example(s); at least 2 are needed")
        point[g] = float(_stat(statistic, v[None])[0])
        idx = gen.integers(0, len(v), size=(B, len(v)))
        reps[g] = _stat(statistic, v[idx])
    lo_q, hi_q = 100 * alpha / 2, 100 * (1 - alpha / 2)

    def interval(est, samples):
        lo, hi = np.percentile(samples, [lo_q, hi_q])
        return {"estimate": est, "low": float(min(lo, est)), "high": float(max(hi, est))}

    out = {"groups": {g: interval(point[g], reps[g]) for g in names}}
    stacked = np.stack([reps[g] for g in names])
    spread = stacked.max(axis=0) - stacked.min(axis=0)
    out["bias"] = interval(max(point.values()) - min(point.values()), spread)
    return out
