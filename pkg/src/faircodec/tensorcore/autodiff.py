"""Tape-based reverse-mode differentiation over numpy arrays.

Every primitive appends one node to the tape it was called on. Recording
order is a topological order of the graph, so ``Tape.backward`` simply walks
the node list in reverse and visits each node once.
"""
from __future__ import annotations

import numpy as np

from numpy.lib.stride_tricks import sliding_window_view


class TapeError(RuntimeError):
    pass


class Tensor:
    """A value recorded on a tape.

    ``data`` is a plain numpy array; ``index`` is the node position on the
    owning tape (``-1`` when the tape does not record).
    """

    __slots__ = ("data", "tape", "index")

    def __init__(self, data, tape, index):
        self.data = data
        self.tape = tape
        self.index = index

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(self.tape.constant(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)


class Tape:
    """Ordered record of primitive operations plus a parameter registry.

    Parameters
    ----------
    dtype : numpy dtype
        Storage dtype for values created on this tape. ``float32`` for
        training, ``float64`` when replaying for finite-difference checks.
    record : bool
        When False, no backward closures are stored (inference mode).
    """

    def __init__(self, dtype=np.float32, record=True):
        self.dtype = np.dtype(dtype)
        self.record = record
        self._backward = []
        self._parents = []
        self.params = {}

    def __len__(self):
        return len(self._backward)

    def _push(self, data, parents, backward):
        if not self.record:
            return Tensor(data, self, -1)
        self._backward.append(backward)
        self._parents.append(parents)
        return Tensor(data, self, len(self._backward) - 1)

    def parameter(self, name, value):
        if name in self.params:
            raise TapeError(f"parameter {name!r} registered twice")
        t = self._push(np.asarray(value, dtype=self.dtype), (), None)
        self.params[name] = t
        return t

    def constant(self, value):
        return self._push(np.asarray(value, dtype=self.dtype), (), None)

    def lift(self, value):
        if isinstance(value, Tensor):
            if value.tape is not self:
                raise TapeError("tensor belongs to a different tape")
            return value
        return self.constant(value)

    def backward(self, loss):
        """Return ``{parameter name: gradient}`` for a scalar ``loss``.

        Parameters that did not contribute to the loss get exact zeros.
        """
        if not self.record:
            raise TapeError("tape was created with record=False")
        if loss.tape is not self:
            raise TapeError("loss belongs to a different tape")
        if loss.data.size != 1:
            raise TapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        grads = [None] * len(self._backward)
        grads[loss.index] = np.ones_like(loss.data)
        keep = {p.index for p in self.params.values()}
        for i in range(loss.index, -1, -1):
            g = grads[i]
            fn = self._backward[i]
            if g is None or fn is None:
                continue
            if i not in keep:
                grads[i] = None
            parents = self._parents[i]
            for parent, pg in zip(parents, fn(g)):
                if pg is None or parent.index < 0:
                    continue
                j = parent.index
                grads[j] = pg if grads[j] is None else grads[j] + pg
        out = {}
        for name, p in self.params.items():
            g = grads[p.index]
            out[name] = np.zeros_like(p.data) if g is None else np.asarray(g, dtype=self.dtype)
        return out

    def release(self):
        """Drop recorded closures; the tape cannot run backward afterwards.

        Closures reference the tensors they were built from, which reference
        the tape, so without this the cycle lives until the cyclic collector
        happens to run.
        """
        self._backward = [None] * len(self._backward)
        self._parents = [()] * len(self._parents)


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    ndiff = g.ndim - len(shape)
    if ndiff > 0:
        g = g.sum(axis=tuple(range(ndiff)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _pair(a, b):
    tape = a.tape if isinstance(a, Tensor) else b.tape
    return tape, tape.lift(a), tape.lift(b)


# ---------------------------------------------------------------- elementwise


def add(a, b):
    tape, a, b = _pair(a, b)
    sa, sb = a.shape, b.shape
    return tape._push(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b):
    tape, a, b = _pair(a, b)
    sa, sb = a.shape, b.shape
    return tape._push(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b):
    tape, a, b = _pair(a, b)
    av, bv = a.data, b.data

    def back(g):
        return _unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)

    return tape._push(av * bv, (a, b), back)


def div(a, b):
    tape, a, b = _pair(a, b)
    av, bv = a.data, b.data
    out = av / bv

    def back(g):
        ga = g / bv
        return _unbroadcast(ga, av.shape), _unbroadcast(-ga * out, bv.shape)

    return tape._push(out, (a, b), back)


def neg(a):
    return a.tape._push(-a.data, (a,), lambda g: (-g,))


def square(a):
    v = a.data
    return a.tape._push(v * v, (a,), lambda g: (2.0 * g * v,))


def exp(a):
    out = np.exp(a.data)
    return a.tape._push(out, (a,), lambda g: (g * out,))


def log(a):
    v = a.data
    return a.tape._push(np.log(v), (a,), lambda g: (g / v,))


def abs_(a):
    v = a.data
    return a.tape._push(np.abs(v), (a,), lambda g: (g * np.sign(v),))


def sigmoid(a):
    v = a.data
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    e = np.exp(v[~pos])
    out[~pos] = e / (1.0 + e)
    return a.tape._push(out, (a,), lambda g: (g * out * (1.0 - out),))


def normal_cdf(a):
    """Standard normal CDF, elementwise."""
    from scipy.special import ndtr

    v = a.data
    out = ndtr(v).astype(v.dtype, copy=False)
    dens = (np.exp(-0.5 * v * v) / np.sqrt(2.0 * np.pi)).astype(v.dtype, copy=False)
    return a.tape._push(out, (a,), lambda g: (g * dens,))


def relu(a):
    v = a.data
    mask = v > 0
    return a.tape._push(v * mask, (a,), lambda g: (g * mask,))


def leaky_relu(a, slope=0.01):
    v = a.data
    scale = np.where(v > 0, 1.0, slope).astype(v.dtype)
    return a.tape._push(v * scale, (a,), lambda g: (g * scale,))


def lower_bound(a, bound):
    """max(a, bound); gradient flows where the bound is inactive, or where
    it would push the value back above the bound."""
    v = a.data
    inactive = v >= bound

    def back(g):
        return (g * (inactive | (g < 0)),)

    return a.tape._push(np.maximum(v, bound).astype(v.dtype), (a,), back)


def straight_through_round(a):
    """Round half to even in the forward pass, identity gradient."""
    return a.tape._push(np.rint(a.data), (a,), lambda g: (g,))


def stop_gradient(a):
    return a.tape.constant(a.data)


# ---------------------------------------------------------------- reductions


def sum_(a, axis=None, keepdims=False):
    v = a.data
    out = np.sum(v, axis=axis, keepdims=keepdims, dtype=np.float64).astype(v.dtype)
    shape = v.shape

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).astype(v.dtype),)

    return a.tape._push(np.asarray(out), (a,), back)


def mean(a, axis=None, keepdims=False):
    v = a.data
    count = v.size if axis is None else int(np.prod([v.shape[i] for i in np.atleast_1d(axis)]))
    out = sum_(a, axis=axis, keepdims=keepdims)
    return mul(out, 1.0 / count)


def reshape(a, shape):
    old = a.shape
    return a.tape._push(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def slice_channels(a, stop):
    """``a[..., :stop]`` along the last axis."""
    v = a.data
    shape = v.shape

    def back(g):
        full = np.zeros(shape, dtype=g.dtype)
        full[..., :stop] = g
        return (full,)

    return a.tape._push(v[..., :stop], (a,), back)


# ---------------------------------------------------------------- layers


def matmul(a, b):
    tape, a, b = _pair(a, b)
    av, bv = a.data, b.data
    return tape._push(av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))


def dense(x, w, b):
    """x: (N, in), w: (in, out), b: (out,)."""
    xv, wv = x.data, w.data

    def back(g):
        return g @ wv.T, xv.T @ g, g.sum(axis=0)

    return x.tape._push(xv @ wv + b.data, (x, w, b), back)


def _im2col(xp, kh, kw, stride):
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
    n, ho, wo, c = win.shape[:4]
    cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(n * ho * wo, kh * kw * c)
    return cols, ho, wo


def conv2d(x, w, b, stride=1, padding=0):
    """NHWC convolution. w: (kh, kw, cin, cout), b: (cout,)."""
    xv, wv = x.data, w.data
    kh, kw, cin, cout = wv.shape
    n = xv.shape[0]
    p = padding
    xp = np.pad(xv, ((0, 0), (p, p), (p, p), (0, 0))) if p else xv
    cols, ho, wo = _im2col(xp, kh, kw, stride)
    wmat = wv.reshape(kh * kw * cin, cout)
    out = (cols @ wmat + b.data).reshape(n, ho, wo, cout)
    padded_shape = xp.shape

    def back(g):
        g2 = g.reshape(n * ho * wo, cout)
        gw = (cols.T @ g2).reshape(wv.shape)
        gb = g2.sum(axis=0)
        gcols = (g2 @ wmat.T).reshape(n, ho, wo, kh, kw, cin)
        gxp = np.zeros(padded_shape, dtype=g.dtype)
        he = stride * (ho - 1) + 1
        we = stride * (wo - 1) + 1
        for i in range(kh):
            for j in range(kw):
                gxp[:, i:i + he:stride, j:j + we:stride, :] += gcols[:, :, :, i, j, :]
        gx = gxp[:, p:padded_shape[1] - p, p:padded_shape[2] - p, :] if p else gxp
        return gx, gw, gb

    return x.tape._push(out, (x, w, b), back)


def upsample_nearest(x, factor):
    v = x.data
    n, h, w, c = v.shape
    out = np.repeat(np.repeat(v, factor, axis=1), factor, axis=2)

    def back(g):
        return (g.reshape(n, h, factor, w, factor, c).sum(axis=(2, 4)),)

    return x.tape._push(out, (x,), back)


def global_avg_pool(x):
    v = x.data
    n, h, w, c = v.shape
    out = v.mean(axis=(1, 2), dtype=np.float64).astype(v.dtype)

    def back(g):
        return (np.broadcast_to(g[:, None, None, :] / (h * w), v.shape).astype(v.dtype),)

    return x.tape._push(out, (x,), back)


def flatten(x):
    n = x.shape[0]
    return reshape(x, (n, -1))


def softmax(x):
    v = x.data
    z = v - v.max(axis=-1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=-1, keepdims=True)

    def back(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return x.tape._push(out, (x,), back)


def log_softmax(x):
    v = x.data
    z = v - v.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    out = z - lse
    p = np.exp(out)

    def back(g):
        return (g - p * g.sum(axis=-1, keepdims=True),)

    return x.tape._push(out, (x,), back)


def cross_entropy(logits, targets):
    """Mean negative log-likelihood of integer ``targets`` under softmax(logits)."""
    lp = log_softmax(logits)
    n = lp.shape[0]
    v = lp.data
    picked = v[np.arange(n), targets]
    out = np.asarray(-np.sum(picked, dtype=np.float64) / n, dtype=v.dtype)

    def back(g):
        gl = np.zeros_like(v)
        gl[np.arange(n), targets] = -g / n
        return (gl,)

    return lp.tape._push(out, (lp,), back)
