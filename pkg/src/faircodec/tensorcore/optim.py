from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class OptimizerState:
    kind: str = "sgd"
    lr: float = 0.01
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    # parameter-name prefix -> learning-rate multiplier
    lr_scale: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer kind {self.kind!r}")


def _lr(state, name):
    for prefix, mult in state.lr_scale.items():
        if name.startswith(prefix):
            return state.lr * mult
    return state.lr


def optimizer_step(state, params, grads):
    """Update ``params`` in place and return them.

    sgd: p <- p - lr * g. adam: bias-corrected first/second moments with
    beta1=0.9, beta2=0.999, eps=1e-8. Moment arithmetic runs in float64.
    """
    missing = [k for k in params if k not in grads]
    if missing:
        raise KeyError(f"no gradient for parameters: {missing}")
    state.step += 1
    if state.kind == "sgd":
        for k, p in params.items():
            params[k] = (p - _lr(state, k) * grads[k]).astype(p.dtype)
        return params
    t = state.step
    c1 = 1.0 - ADAM_BETA1 ** t
    c2 = 1.0 - ADAM_BETA2 ** t
    for k, p in params.items():
        g = grads[k].astype(np.float64)
        m = state.m.get(k)
        v = state.v.get(k)
        if m is None:
            m = np.zeros(p.shape, dtype=np.float64)
            v = np.zeros(p.shape, dtype=np.float64)
        m = ADAM_BETA1 * m + (1.0 - ADAM_BETA1) * g
        v = ADAM_BETA2 * v + (1.0 - ADAM_BETA2) * g * g
        state.m[k], state.v[k] = m, v
        update = _lr(state, k) * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)
        params[k] = (p - update).astype(p.dtype)
    return params
