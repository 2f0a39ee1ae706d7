from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .fairness import MetricsError


def gaussian_kernel(sigma):
    """Normalized 1-D Gaussian with radius ceil(3 sigma)."""
    r = int(math.ceil(3 * sigma))
    x = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-(x ** 2) / (2 * sigma ** 2))
    return k / k.sum()


def gaussian_blur(x, sigma):
    """Separable Gaussian blur over the two spatial axes of (H, W), (H, W, C) or (N, H, W, C).

    Edges are handled by half-sample reflection. ``sigma == 0`` returns an
    unmodified copy.
    """
    if sigma < 0:
        raise MetricsError("sigma must be non-negative")
    x = np.asarray(x)
    if sigma == 0:
        return x.copy()
    k = gaussian_kernel(sigma)
    axes = (1, 2) if x.ndim == 4 else (0, 1)
    out = x.astype(np.float64)
    for ax in axes:
        out = correlate1d(out, k, axis=ax, mode="reflect")
    return out.astype(x.dtype) if np.issubdtype(x.dtype, np.floating) else out


@dataclass(frozen=True)
class FlipMatrix:
    """Row-normalized confusion matrices per (group, sigma) over grouped labels."""

    labels: tuple
    sigmas: tuple
    # {(group, sigma): (L, L) array}; entry (i, j) = fraction with true i predicted j
    matrices: dict
    counts: dict

    def matrix(self, group, sigma):
        return self.matrices[(group, sigma)]

    def rows_valid(self, tol=1e-6):
        for key, m in self.matrices.items():
            n = self.counts[key].sum(axis=1)
            sums = m.sum(axis=1)
            if np.any(np.abs(sums[n > 0] - 1.0) > tol):
                return False
        return True

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["group", "sigma", "true_label", "predicted_label", "fraction"])
        for (g, s) in sorted(self.matrices, key=lambda k: (k[0], k[1])):
            m = self.matrices[(g, s)]
            for i, a in enumerate(self.labels):
                if self.counts[(g, s)][i].sum() == 0:
                    continue
                for j, b in enumerate(self.labels):
                    w.writerow([g, repr(float(s)), a, b, repr(float(m[i, j]))])
        return buf.getvalue()

    def to_dict(self):
        return {"labels": list(self.labels), "sigmas": [float(s) for s in self.sigmas],
                "blocks": [{"group": g, "sigma": float(s), "counts": self.counts[(g, s)].tolist(),
                            "fractions": self.matrices[(g, s)].tolist()}
                           for (g, s) in sorted(self.matrices, key=lambda k: (k[0], k[1]))]}


def confusion(true_idx, pred_idx, n):
    counts = np.zeros((n, n), dtype=np.int64)
    np.add.at(counts, (true_idx, pred_idx), 1)
    return counts


def normalize_rows(counts):
    n = counts.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(n > 0, counts / np.maximum(n, 1), 0.0)


def blur_flip_analysis(model, dataset, sigmas):
    """Confusion of true vs predicted grouped labels on blurred images, per group and sigma.

    Rows for labels absent from a group stay all-zero and are left out of
    the CSV.
    """
    from ..phenoclassifier import predict

    if len(dataset) == 0:
        raise MetricsError("empty dataset")
    lm = model.label_map
    true = lm.indices(dataset.groups, dataset.label_array(model.category))
    n = len(lm.label_space)
    matrices, counts = {}, {}
    for s in sigmas:
        pred, _ = predict(model, gaussian_blur(dataset.images, s))
        for g in dataset.schema.groups:
            m = dataset.groups == g
            if not m.any():
                continue
            c = confusion(true[m], pred[m], n)
            counts[(g, float(s))] = c
            matrices[(g, float(s))] = normalize_rows(c)
    return FlipMatrix(tuple(lm.label_space), tuple(float(s) for s in sigmas), matrices, counts)
