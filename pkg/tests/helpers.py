"""Shared test utilities: finite-difference gradient checks and tiny datasets."""
import numpy as np

from faircodec.tensorcore import Network, Tape, bind_params, evaluate_network
from faircodec.tensorcore import ops


def random_network(rng):
    """A small random conv/dense stack and an input shape it accepts."""
    h = int(rng.choice([4, 6]))
    c = int(rng.integers(1, 3))
    layers = [{"type": "conv2d", "name": "c0", "filters": int(rng.integers(2, 4)), "kernel": 3,
               "stride": int(rng.choice([1, 2]))}]
    layers.append({"type": str(rng.choice(["relu", "leaky_relu"]))})
    if rng.random() < 0.5:
        layers.append({"type": "upsample", "factor": 2})
    layers.append({"type": "conv2d", "name": "c1", "filters": 3, "kernel": int(rng.choice([1, 3]))})
    layers.append({"type": str(rng.choice(["global_avg_pool", "flatten"]))})
    layers.append({"type": "dense", "name": "d0", "units": 4})
    if rng.random() < 0.5:
        layers.append({"type": "softmax"})
    return layers, (h, h, c)


def analytic_and_numeric(layers, input_shape, params, x, weights, eps=1e-6):
    """Gradients of ``sum(weights * net(x))`` by the tape and by central differences.

    Returns {name: (analytic, numeric, kink_mask)}; ``kink_mask`` marks
    entries where differences at ``eps`` and ``eps / 10`` disagree, which
    happens when a perturbation crosses a ReLU kink.
    """
    net = Network(layers, input_shape)
    tape = Tape(dtype=np.float64)
    bound = bind_params(tape, params)
    out = net.forward(tape, bound, tape.constant(x))
    loss = ops.sum_(ops.mul(out, weights))
    grads = tape.backward(loss)

    def f(p):
        return float(np.sum(evaluate_network(p, x, net, dtype=np.float64) * weights))

    result = {}
    for name, value in params.items():
        num = np.zeros_like(value)
        fine = np.zeros_like(value)
        for idx in np.ndindex(value.shape):
            for e, target in ((eps, num), (eps / 10, fine)):
                plus = {k: v.copy() for k, v in params.items()}
                minus = {k: v.copy() for k, v in params.items()}
                plus[name][idx] += e
                minus[name][idx] -= e
                target[idx] = (f(plus) - f(minus)) / (2 * e)
        kink = np.abs(num - fine) > 1e-5 * np.maximum(np.abs(num), 1e-3)
        result[name] = (grads[name], num, kink)
    return result


def max_relative_error(analytic, numeric, mask=None):
    """max |a - n| / max(|a|, |n|), ignoring entries where both are below 1e-8."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    keep = np.ones_like(a, dtype=bool) if mask is None else ~np.asarray(mask).ravel()
    scale = np.maximum(np.abs(a), np.abs(n))
    keep &= scale > 1e-8
    if not keep.any():
        return 0.0
    return float(np.max(np.abs(a - n)[keep] / scale[keep]))


def gradient_check(seed):
    """Max relative error and skipped-entry count for one random network."""
    rng = np.random.default_rng(seed)
    layers, shape = random_network(rng)
    net = Network(layers, shape)
    params = {k: v.astype(np.float64) for k, v in net.init_params(rng).items()}
    params = {k: v + rng.normal(0, 0.1, v.shape) if k.endswith(".b") else v for k, v in params.items()}
    x = rng.normal(size=(2,) + shape)
    weights = rng.normal(size=(2,) + net.output_shape)
    worst, skipped = 0.0, 0
    for a, n, kink in analytic_and_numeric(layers, shape, params, x, weights).values():
        worst = max(worst, max_relative_error(a, n, kink))
        skipped += int(kink.sum())
    return worst, skipped, net.num_params
