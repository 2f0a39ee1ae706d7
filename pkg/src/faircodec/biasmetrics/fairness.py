"""Group-conditional losses and the accuracy-disparity bias measure.

Classification error is computed as an exact fraction so that the
disparity of accuracies and the spread of errors are the same number,
bit for bit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

LOSS_KINDS = ("error", "mse", "neg_psnr")


class MetricsError(ValueError):
    pass


class EmptyGroupError(MetricsError):
    def __init__(self, group):
        self.group = group
        super().__init__(f"no records for group {group!r}")


@dataclass(frozen=True)
class PredictionRecord:
    """One test example after compression and classification."""

    id: str
    group: str
    label: str
    predicted: str
    bpp: float = math.nan
    mse: float = math.nan
    psnr: float = math.nan
    ssim: float = math.nan

    @property
    def correct(self):
        return self.label == self.predicted


def _select(records, group):
    out = [r for r in records if r.group == group]
    if not out:
        raise EmptyGroupError(group)
    return out


def _exact_error(rs):
    return Fraction(sum(1 for r in rs if not r.correct), len(rs))


def _conditional(records, kind, group):
    rs = _select(records, group)
    if kind == "error":
        return _exact_error(rs)
    if kind == "mse":
        return math.fsum(r.mse for r in rs) / len(rs)
    if kind == "neg_psnr":
        return -math.fsum(r.psnr for r in rs) / len(rs)
    raise MetricsError(f"unknown loss kind {kind!r}; expected one of {LOSS_KINDS}")


def conditional_loss(records, kind, group):
    """Mean per-example loss over the records of ``group``."""
    return float(_conditional(records, kind, group))


def _groups(records, groups):
    if groups is None:
        return sorted({r.group for r in records})
    return list(groups)


def bias_general(records, kind="error", groups=None):
    """Largest difference in conditional loss between any two groups."""
    groups = _groups(records, groups)
    if not groups:
        raise MetricsError("no groups to compare")
    losses = [_conditional(records, kind, g) for g in groups]
    return float(max(losses) - min(losses))


def conditional_error(records, group):
    return float(_exact_error(_select(records, group)))


def accuracy(records, group):
    return float(1 - _exact_error(_select(records, group)))


def per_group_accuracy(records, groups=None):
    return {g: accuracy(records, g) for g in _groups(records, groups)}


def accuracy_disparity(records, groups=None):
    """Bias: max per-group accuracy minus min per-group accuracy."""
    groups = _groups(records, groups)
    if not groups:
        raise MetricsError("no groups to compare")
    accs = [1 - _exact_error(_select(records, g)) for g in groups]
    return float(max(accs) - min(accs))
