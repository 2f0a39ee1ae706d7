"""Entropy models over the integer alphabet [-L, L].

Factorized: one learned logistic density per latent channel, integrated
over unit bins. Hyperprior-lite: a factorized model for a small hyper
latent, whose decoded features set a per-element Gaussian scale for the
main latent. Both give (a) differentiable bit counts for training on
noisy latents and (b) discrete pmfs / CDF tables for coding.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.special import expit, ndtr

from ..entropycoder import tables_from_pmfs
from ..tensorcore import ops
from .config import ALPHABET_BOUND

LIKELIHOOD_FLOOR = 1e-9
PMF_FLOOR = 1e-12
SCALE_MIN = 0.11
SCALE_MAX = 64.0
SCALE_LEVELS = 64
LN2 = math.log(2.0)


def _alphabet(L=ALPHABET_BOUND):
    return np.arange(-L, L + 1, dtype=np.float64)


def _finish_pmf(pmf):
    pmf = np.maximum(pmf, PMF_FLOOR)
    return pmf / pmf.sum(axis=-1, keepdims=True)


def logistic_pmfs(loc, log_scale, L=ALPHABET_BOUND):
    """(channels, 2L+1) pmfs of unit-binned logistics; tails fold into the end bins."""
    loc = np.asarray(loc, dtype=np.float64)[:, None]
    scale = np.exp(np.asarray(log_scale, dtype=np.float64))[:, None]
    k = _alphabet(L)[None, :]
    upper = expit((k + 0.5 - loc) / scale)
    lower = expit((k - 0.5 - loc) / scale)
    upper[:, -1] = 1.0
    lower[:, 0] = 0.0
    return _finish_pmf(upper - lower)


def gaussian_pmfs(scales, L=ALPHABET_BOUND):
    """(len(scales), 2L+1) pmfs of unit-binned zero-mean Gaussians."""
    s = np.asarray(scales, dtype=np.float64)[:, None]
    k = _alphabet(L)[None, :]
    upper = ndtr((k + 0.5) / s)
    lower = ndtr((k - 0.5) / s)
    upper[:, -1] = 1.0
    lower[:, 0] = 0.0
    return _finish_pmf(upper - lower)


SCALE_TABLE = np.exp(np.linspace(math.log(SCALE_MIN), math.log(SCALE_MAX), SCALE_LEVELS))


def scale_indexes(scales):
    """Nearest entry of :data:`SCALE_TABLE` in log space."""
    logs = np.log(np.clip(np.asarray(scales, dtype=np.float64), SCALE_MIN, SCALE_MAX))
    step = (math.log(SCALE_MAX) - math.log(SCALE_MIN)) / (SCALE_LEVELS - 1)
    idx = np.rint((logs - math.log(SCALE_MIN)) / step).astype(np.int32)
    return np.clip(idx, 0, SCALE_LEVELS - 1)


# ---------------------------------------------------------------- training bits


def logistic_bits(y, loc, log_scale, weight=None):
    """Differentiable -log2 likelihood of noisy latents, summed.

    ``y``: tape tensor (..., C); ``loc``, ``log_scale``: (C,) tensors;
    ``weight``: optional constant array broadcastable to ``y`` that zeroes
    dropped elements.
    """
    tape = y.tape
    scale = ops.exp(log_scale)
    centered = y - loc
    # evaluate on the side of the density where the sigmoid is not saturated
    flip = np.where(centered.data > 0, -1.0, 1.0).astype(tape.dtype)
    upper = (centered + 0.5) / scale
    lower = (centered - 0.5) / scale
    f = tape.constant(flip)
    p = (ops.sigmoid(upper * f) - ops.sigmoid(lower * f)) * f
    return _bits_from_likelihood(p, weight)


def gaussian_bits(y, scale, weight=None):
    """Differentiable -log2 likelihood of noisy ``y`` under N(0, scale) bins."""
    ay = ops.abs_(y)
    p = ops.normal_cdf((0.5 - ay) / scale) - ops.normal_cdf((-0.5 - ay) / scale)
    return _bits_from_likelihood(p, weight)


def _bits_from_likelihood(p, weight):
    logp = ops.log(ops.lower_bound(p, LIKELIHOOD_FLOOR))
    if weight is not None:
        logp = logp * weight
    return ops.sum_(logp) * (-1.0 / LN2)


# ---------------------------------------------------------------- coding models


class FactorizedEntropyModel:
    """Per-channel pmfs built from learned logistic parameters."""

    kind = "factorized"

    def __init__(self, loc, log_scale, L=ALPHABET_BOUND):
        self.L = L
        self.pmfs = logistic_pmfs(loc, log_scale, L)
        self._tables = None

    @property
    def tables(self):
        if self._tables is None:
            self._tables = tables_from_pmfs(self.pmfs)
        return self._tables

    def indexes(self, shape):
        """Table index of every element of a latent of ``shape`` (..., C)."""
        return np.broadcast_to(np.arange(shape[-1], dtype=np.int32), shape)

    def bits(self, zhat):
        """Sum of -log2 p over an integer latent (..., C)."""
        sym = _symbols(zhat, self.L)
        p = self.pmfs[self.indexes(sym.shape), sym]
        return float(-np.sum(np.log2(p), dtype=np.float64))


class GaussianConditionalModel:
    """Shared Gaussian tables indexed per element by a quantised scale."""

    kind = "gaussian"

    def __init__(self, L=ALPHABET_BOUND):
        self.L = L
        self.pmfs = gaussian_pmfs(SCALE_TABLE, L)
        self._tables = None

    @property
    def tables(self):
        if self._tables is None:
            self._tables = tables_from_pmfs(self.pmfs)
        return self._tables

    def bits(self, zhat, indexes):
        sym = _symbols(zhat, self.L)
        p = self.pmfs[indexes, sym]
        return float(-np.sum(np.log2(p), dtype=np.float64))


_GAUSSIAN = None


def gaussian_conditional():
    global _GAUSSIAN
    if _GAUSSIAN is None:
        _GAUSSIAN = GaussianConditionalModel()
    return _GAUSSIAN


class SymbolRangeError(ValueError):
    pass


def _symbols(zhat, L):
    z = np.asarray(zhat)
    if not np.all(np.isfinite(z)) or np.any(z != np.rint(z)):
        raise SymbolRangeError("latent is not integer valued")
    if z.size and (z.min() < -L or z.max() > L):
        raise SymbolRangeError(f"latent symbol outside alphabet [-{L}, {L}]")
    return z.astype(np.int64) + L
