"""Fréchet distance between Gaussian fits of two feature sets."""
from __future__ import annotations

import numpy as np

from .fairness import MetricsError

EPS = 1e-6


def _sym_sqrt(m):
    w, v = np.linalg.eigh((m + m.T) / 2.0)
    return (v * np.sqrt(np.maximum(w, 0.0))) @ v.T


def gaussian_stats(features):
    """(mean, covariance) of an (n, d) feature array; needs n > d."""
    f = np.asarray(features, dtype=np.float64)
    if f.ndim == 1:
        f = f[:, None]
    n, d = f.shape
    if n <= d:
        raise MetricsError(f"need more samples than dimensions for a covariance ({n} <= {d})")
    return f.mean(axis=0), np.atleast_2d(np.cov(f, rowvar=False))


def frechet_from_stats(mu_a, cov_a, mu_b, cov_b, eps=EPS):
    """||mu_a - mu_b||^2 + Tr(A + B - 2 (A B)^(1/2)), with eps*I added to each covariance.

    The trace of (A B)^(1/2) is taken as the trace of (A^(1/2) B A^(1/2))^(1/2),
    which is symmetric, so only symmetric eigendecompositions are needed.
    """
    mu_a = np.atleast_1d(np.asarray(mu_a, dtype=np.float64))
    mu_b = np.atleast_1d(np.asarray(mu_b, dtype=np.float64))
    a = np.atleast_2d(np.asarray(cov_a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(cov_b, dtype=np.float64))
    if mu_a.shape != mu_b.shape or a.shape != b.shape or a.shape != (len(mu_a), len(mu_a)):
        raise MetricsError("mean/covariance dimensions disagree")
    eye = np.eye(len(mu_a))
    a = a + eps * eye
    b = b + eps * eye
    ra = _sym_sqrt(a)
    inner = ra @ b @ ra
    w = np.linalg.eigvalsh((inner + inner.T) / 2.0)
    tr_sqrt = float(np.sum(np.sqrt(np.maximum(w, 0.0))))
    diff = mu_a - mu_b
    value = float(diff @ diff + np.trace(a) + np.trace(b) - 2.0 * tr_sqrt)
    # rounding can leave a tiny negative value for identical inputs
    return max(value, 0.0)


def frechet_distance(features_a, features_b, eps=EPS):
    mu_a, cov_a = gaussian_stats(features_a)
    mu_b, cov_b = gaussian_stats(features_b)
    if mu_a.shape != mu_b.shape:
        raise MetricsError("feature dimensions differ")
    return frechet_from_stats(mu_a, cov_a, mu_b, cov_b, eps)
