from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

from .bootstrap import bootstrap_ci
from .fairness import MetricsError, accuracy, accuracy_disparity, bias_general, conditional_error

REPORT_VERSION = 1


@dataclass
class MetricsReport:
    """All metrics of one (codec, rate point, category) cell.

    PSNR values are capped at 100 dB; the cap is recorded in ``metadata``.
    """

    rate_point: dict
    category: str
    groups: list
    per_group_error: dict
    per_group_accuracy: dict
    per_group_counts: dict
    bias: float
    per_group_psnr: dict
    per_group_ssim: dict
    per_group_bpp: dict
    psnr: float
    ssim: float
    mean_bpp: float
    mse_bias: float
    psnr_bias: float
    frechet: dict = field(default_factory=dict)
    bootstrap: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)
    version: int = REPORT_VERSION

    def validate(self):
        """Raise :class:`MetricsError` when an invariant does not hold."""
        accs = [self.per_group_accuracy[g] for g in self.groups]
        for name, table in (("accuracy", self.per_group_accuracy), ("error", self.per_group_error)):
            for g, v in table.items():
                if not 0.0 <= v <= 1.0:
                    raise MetricsError(f"{name} for {g} outside [0, 1]: {v}")
        exact = [Fraction(*self.per_group_counts[g]) for g in self.groups]
        if self.bias != float(max(exact) - min(exact)) or abs(self.bias - (max(accs) - min(accs))) > 1e-12:
            raise MetricsError(f"bias {self.bias} != max - min of per-group accuracy")
        if not 0.0 <= self.bias <= 1.0:
            raise MetricsError(f"bias outside [0, 1]: {self.bias}")
        for g in self.groups:
            if abs(self.per_group_accuracy[g] + self.per_group_error[g] - 1.0) > 1e-12:
                raise MetricsError(f"accuracy and error of {g} do not sum to 1")
        if self.mean_bpp is not None and not (math.isnan(self.mean_bpp) or self.mean_bpp >= 0):
            raise MetricsError(f"mean bpp {self.mean_bpp} is negative")
        return self

    def to_dict(self):
        """Plain-JSON form; NaN (metric not applicable) becomes None."""
        return _clean(asdict(self))

    @classmethod
    def from_dict(cls, d):
        return cls(**_restore(d))

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


_FLOAT_FIELDS = ("bias", "psnr", "ssim", "mean_bpp", "mse_bias", "psnr_bias")


def _clean(obj):
    if isinstance(obj, float) and math.isnan(obj):
        return None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def _restore(d):
    d = dict(d)
    for k in _FLOAT_FIELDS:
        if d.get(k) is None:
            d[k] = math.nan
    for k in ("per_group_psnr", "per_group_ssim", "per_group_bpp"):
        d[k] = {g: math.nan if v is None else v for g, v in d[k].items()}
    return d


def _mean(xs):
    return math.fsum(xs) / len(xs)


def compute_metrics(records, category, rate_point, groups=None, frechet=None, metadata=None,
                    bootstrap_seed=0, B=1000):
    """Build a validated :class:`MetricsReport` from prediction records."""
    groups = list(groups) if groups is not None else sorted({r.group for r in records})
    err = {g: conditional_error(records, g) for g in groups}
    acc = {g: accuracy(records, g) for g in groups}
    by = {g: [r for r in records if r.group == g] for g in groups}
    counts = {g: [sum(1 for r in by[g] if r.correct), len(by[g])] for g in groups}
    boot = {}
    if all(len(v) >= 2 for v in by.values()):
        correct = np.array([1.0 if r.correct else 0.0 for r in records if r.group in by])
        labels = [r.group for r in records if r.group in by]
        boot["accuracy"] = bootstrap_ci(correct, labels, "mean", B, seed=bootstrap_seed)
        if all(math.isfinite(r.psnr) for r in records):
            boot["psnr"] = bootstrap_ci([r.psnr for r in records if r.group in by], labels, "mean", B,
                                        seed=bootstrap_seed)
    has_quality = all(math.isfinite(r.mse) for r in records)
    report = MetricsReport(
        rate_point=dict(rate_point),
        category=category,
        groups=groups,
        per_group_error=err,
        per_group_accuracy=acc,
        per_group_counts=counts,
        bias=accuracy_disparity(records, groups),
        per_group_psnr={g: _mean([r.psnr for r in by[g]]) for g in groups},
        per_group_ssim={g: _mean([r.ssim for r in by[g]]) for g in groups},
        per_group_bpp={g: _mean([r.bpp for r in by[g]]) for g in groups},
        psnr=_mean([r.psnr for r in records]),
        ssim=_mean([r.ssim for r in records]),
        mean_bpp=_mean([r.bpp for r in records]),
        mse_bias=bias_general(records, "mse", groups) if has_quality else math.nan,
        psnr_bias=bias_general(records, "neg_psnr", groups) if has_quality else math.nan,
        frechet=dict(frechet or {}),
        bootstrap=boot,
        metadata={"psnr_cap_db": 100.0, **(metadata or {})},
    )
    return report.validate()
