import io

import numpy as np
import pytest
from helpers import gradient_check, max_relative_error

from faircodec.tensorcore import (
    CheckpointError,
    Network,
    NetworkShapeError,
    OptimizerState,
    RngStream,
    Tape,
    TapeError,
    backward,
    bind_params,
    dumps_checkpoint,
    evaluate_network,
    load_checkpoint,
    loads_checkpoint,
    ops,
    optimizer_step,
    save_checkpoint,
)


def numeric_grad(f, x, eps=1e-6):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += eps
        xm[idx] -= eps
        g[idx] = (f(xp) - f(xm)) / (2 * eps)
    return g


def op_grad(build, x):
    tape = Tape(dtype=np.float64)
    t = tape.parameter("x", x)
    return tape.backward(build(t))["x"]


UNARY = {
    "exp": (ops.exp, np.exp),
    "log": (ops.log, np.log),
    "square": (ops.square, np.square),
    "sigmoid": (ops.sigmoid, lambda v: 1 / (1 + np.exp(-v))),
    "softmax": (ops.softmax, lambda v: np.exp(v) / np.exp(v).sum(-1, keepdims=True)),
    "log_softmax": (ops.log_softmax, lambda v: v - np.log(np.exp(v).sum(-1, keepdims=True))),
}


@pytest.mark.parametrize("name", sorted(UNARY))
def test_unary_op_gradients(name):
    op, ref = UNARY[name]
    rng = np.random.default_rng(1)
    x = rng.uniform(0.2, 2.0, size=(3, 4))
    w = rng.normal(size=(3, 4))
    a = op_grad(lambda t: ops.sum_(ops.mul(op(t), w)), x)
    n = numeric_grad(lambda v: float(np.sum(ref(v) * w)), x)
    assert max_relative_error(a, n) < 1e-6


def test_normal_cdf_gradient():
    from scipy.special import ndtr

    x = np.linspace(-2, 2, 7)
    a = op_grad(lambda t: ops.sum_(ops.normal_cdf(t)), x)
    assert max_relative_error(a, numeric_grad(lambda v: float(np.sum(ndtr(v))), x)) < 1e-6


def test_broadcasting_binary_ops():
    rng = np.random.default_rng(2)
    a = rng.uniform(0.5, 1.5, size=(3, 4))
    b = rng.uniform(0.5, 1.5, size=(4,))
    tape = Tape(dtype=np.float64)
    ta, tb = tape.parameter("a", a), tape.parameter("b", b)
    loss = ops.sum_(ops.div(ops.sub(ops.mul(ta, tb), tb), ops.add(ta, tb)))
    g = tape.backward(loss)
    f = lambda a_, b_: float(np.sum((a_ * b_ - b_) / (a_ + b_)))  # noqa: E731
    assert max_relative_error(g["a"], numeric_grad(lambda v: f(v, b), a)) < 1e-6
    assert max_relative_error(g["b"], numeric_grad(lambda v: f(a, v), b)) < 1e-6
    assert g["b"].shape == b.shape


def test_cross_entropy_matches_manual():
    rng = np.random.default_rng(3)
    logits = rng.normal(size=(5, 3))
    y = np.array([0, 2, 1, 1, 0])
    tape = Tape(dtype=np.float64)
    t = tape.parameter("z", logits)
    loss = ops.cross_entropy(t, y)
    lp = logits - np.log(np.exp(logits).sum(1, keepdims=True))
    assert float(loss.data) == pytest.approx(-lp[np.arange(5), y].mean(), abs=1e-12)
    n = numeric_grad(lambda v: float(-(v - np.log(np.exp(v).sum(1, keepdims=True)))[np.arange(5), y].mean()),
                     logits)
    assert max_relative_error(tape.backward(loss)["z"], n) < 1e-6


def test_straight_through_round_and_stop_gradient():
    tape = Tape(dtype=np.float64)
    x = tape.parameter("x", np.array([0.4, 1.5, 2.5, -0.6]))
    r = ops.straight_through_round(x)
    np.testing.assert_array_equal(r.data, [0.0, 2.0, 2.0, -1.0])
    loss = ops.sum_(ops.add(r, ops.stop_gradient(ops.square(x))))
    np.testing.assert_array_equal(tape.backward(loss)["x"], np.ones(4))


def test_lower_bound_gradient_rule():
    tape = Tape(dtype=np.float64)
    x = tape.parameter("x", np.array([0.5, -1.0, -1.0]))
    y = ops.lower_bound(x, 0.0)
    loss = ops.sum_(ops.mul(y, np.array([1.0, 1.0, -1.0])))
    # blocked where the bound is active and the gradient would push further below
    np.testing.assert_array_equal(tape.backward(loss)["x"], [1.0, 0.0, -1.0])


def test_unused_parameter_gets_zero_gradient():
    tape = Tape(dtype=np.float64)
    a = tape.parameter("a", np.ones(3))
    tape.parameter("b", np.ones((2, 2)))
    g = backward(tape, ops.sum_(ops.square(a)))
    np.testing.assert_array_equal(g["b"], np.zeros((2, 2)))
    np.testing.assert_array_equal(g["a"], 2 * np.ones(3))


def test_tape_errors():
    tape = Tape()
    a = tape.parameter("a", np.ones(3))
    with pytest.raises(TapeError):
        tape.parameter("a", np.ones(3))
    with pytest.raises(TapeError):
        tape.backward(a)
    other = Tape()
    with pytest.raises(TapeError):
        ops.add(a, other.constant(np.ones(3)))
    with pytest.raises(TapeError):
        Tape(record=False).backward(Tape(record=False).constant(1.0))


def test_release_frees_closures():
    tape = Tape(dtype=np.float64)
    a = tape.parameter("a", np.ones(3))
    loss = ops.sum_(ops.square(a))
    tape.backward(loss)
    tape.release()
    assert all(fn is None for fn in tape._backward)


@pytest.mark.parametrize("seed", range(3))
def test_random_network_gradients(seed):
    worst, skipped, n = gradient_check(100 + seed)
    assert worst < 1e-4
    assert skipped <= n // 10


def test_conv2d_matches_direct_loop():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(1, 5, 5, 2))
    w = rng.normal(size=(3, 3, 2, 4))
    b = rng.normal(size=4)
    tape = Tape(dtype=np.float64, record=False)
    out = ops.conv2d(tape.constant(x), tape.constant(w), tape.constant(b), stride=2, padding=1).data
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    ref = np.zeros((1, 3, 3, 4))
    for i in range(3):
        for j in range(3):
            patch = xp[0, 2 * i:2 * i + 3, 2 * j:2 * j + 3, :]
            ref[0, i, j] = np.tensordot(patch, w, axes=([0, 1, 2], [0, 1, 2])) + b
    np.testing.assert_allclose(out, ref, atol=1e-12)


def test_network_shape_inference_and_errors():
    net = Network([{"type": "conv2d", "name": "a", "filters": 4, "kernel": 3, "stride": 2},
                   {"type": "relu"}, {"type": "global_avg_pool"}, {"type": "dense", "name": "d", "units": 2}],
                  (8, 8, 3))
    assert net.shapes[1] == (4, 4, 4)
    assert net.output_shape == (2,)
    assert net.num_params == 3 * 3 * 3 * 4 + 4 + 4 * 2 + 2
    with pytest.raises(NetworkShapeError, match="layer 1"):
        Network([{"type": "flatten"}, {"type": "conv2d", "name": "c", "filters": 1, "kernel": 3}], (4, 4, 1))
    with pytest.raises(NetworkShapeError, match="unsupported"):
        Network([{"type": "maxpool"}], (4, 4, 1))
    with pytest.raises(NetworkShapeError, match="duplicate"):
        Network([{"type": "flatten"}, {"type": "dense", "name": "d", "units": 2},
                 {"type": "dense", "name": "d", "units": 2}], (2, 2, 1))
    with pytest.raises(NetworkShapeError, match="expected input"):
        tape = Tape()
        net.forward(tape, bind_params(tape, net.init_params(RngStream(0))), tape.constant(np.zeros((1, 4, 4, 3))))


def test_evaluate_network_single_and_batched():
    layers = [{"type": "flatten"}, {"type": "dense", "name": "d", "units": 3}]
    net = Network(layers, (2, 2, 1))
    params = net.init_params(RngStream(5))
    x = np.random.default_rng(0).normal(size=(4, 2, 2, 1)).astype(np.float32)
    batched = evaluate_network(params, x, net)
    single = evaluate_network(params, x[1], layers)
    np.testing.assert_allclose(single, batched[1], rtol=1e-6)


def test_rng_streams_are_reproducible_and_independent():
    a = RngStream(7).child("data").generator().random(5)
    b = RngStream(7).child("data").generator().random(5)
    c = RngStream(7).child("model").generator().random(5)
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(a, c)
    assert not np.allclose(RngStream(7).generator().random(3), RngStream(7).advance().generator().random(3))


def test_sgd_and_adam_steps():
    p = {"w": np.array([1.0, -2.0], dtype=np.float32)}
    g = {"w": np.array([0.5, 0.5], dtype=np.float32)}
    optimizer_step(OptimizerState("sgd", lr=0.1), p, g)
    np.testing.assert_allclose(p["w"], [0.95, -2.05], rtol=1e-6)
    p = {"w": np.array([1.0], dtype=np.float32), "em.x": np.array([1.0], dtype=np.float32)}
    state = OptimizerState("adam", lr=0.01, lr_scale={"em.": 10.0})
    optimizer_step(state, p, {"w": np.array([3.0]), "em.x": np.array([3.0])})
    # first bias-corrected Adam step moves each parameter by lr * sign(g)
    np.testing.assert_allclose(p["w"], [0.99], rtol=1e-5)
    np.testing.assert_allclose(p["em.x"], [0.9], rtol=1e-5)
    with pytest.raises(KeyError):
        optimizer_step(state, p, {"w": np.array([1.0])})
    with pytest.raises(ValueError):
        OptimizerState("rmsprop")


def test_adam_minimizes_quadratic():
    p = {"w": np.array([5.0, -3.0], dtype=np.float32)}
    state = OptimizerState("adam", lr=0.1)
    for _ in range(300):
        tape = Tape()
        w = bind_params(tape, p)["w"]
        optimizer_step(state, p, tape.backward(ops.sum_(ops.square(w))))
    assert np.all(np.abs(p["w"]) < 0.05)


def test_checkpoint_round_trip(tmp_path):
    params = {"b": np.arange(3, dtype=np.float32), "a.w": np.ones((2, 2), dtype=np.float32)}
    data = dumps_checkpoint(params, {"k": 1})
    assert data == dumps_checkpoint(dict(reversed(list(params.items()))), {"k": 1})
    back, meta = loads_checkpoint(data)
    assert meta == {"k": 1}
    for k in params:
        np.testing.assert_array_equal(back[k], params[k])
    save_checkpoint(tmp_path / "c.fcb", params)
    assert load_checkpoint(tmp_path / "c.fcb")[0].keys() == params.keys()
    buf = io.BytesIO()
    save_checkpoint(buf, params)
    assert buf.getvalue() == dumps_checkpoint(params)


@pytest.mark.parametrize("mangle", [lambda d: b"XXXX" + d[4:], lambda d: d[:6], lambda d: d[:-4]])
def test_checkpoint_rejects_corruption(mangle):
    data = dumps_checkpoint({"a": np.ones(4, dtype=np.float32)})
    with pytest.raises(CheckpointError):
        loads_checkpoint(mangle(data))
