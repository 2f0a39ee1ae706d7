"""Declarative layer lists and their evaluation on a tape."""
from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tape

LAYER_TYPES = ("conv2d", "dense", "relu", "leaky_relu", "softmax", "upsample", "global_avg_pool", "flatten")


class NetworkShapeError(ValueError):
    """Raised when a layer cannot accept the shape flowing into it."""

    def __init__(self, layer_index, layer, message):
        self.layer_index = layer_index
        self.layer = layer
        name = layer.get("name", layer.get("type"))
        super().__init__(f"layer {layer_index} ({name}): {message}")


def _conv_out(n, k, s, p):
    return (n + 2 * p - k) // s + 1


class Network:
    """A feed-forward stack described by a list of layer dicts.

    Each dict has a ``type`` from :data:`LAYER_TYPES`. Parametrized layers
    (``conv2d``, ``dense``) need a unique ``name``; their parameters are
    stored as ``<name>.w`` and ``<name>.b``.

    conv2d keys: ``filters``, ``kernel``, ``stride`` (1), ``padding``
    (``"same"`` -> kernel // 2, or an int). dense keys: ``units``.
    upsample keys: ``factor`` (2). leaky_relu keys: ``slope`` (0.01).
    """

    def __init__(self, layers, input_shape):
        self.layers = [dict(layer) for layer in layers]
        self.input_shape = tuple(int(s) for s in input_shape)
        self.param_shapes = {}
        self.fan_in = {}
        self.shapes = [self.input_shape]
        shape = self.input_shape
        for i, layer in enumerate(self.layers):
            shape = self._infer(i, layer, shape)
            self.shapes.append(shape)
        self.output_shape = shape

    def _infer(self, i, layer, shape):
        kind = layer.get("type")
        if kind not in LAYER_TYPES:
            raise NetworkShapeError(i, layer, f"unsupported layer type {kind!r}")
        if kind in ("conv2d", "dense"):
            name = layer.get("name")
            if not name:
                raise NetworkShapeError(i, layer, "parametrized layer needs a name")
            if f"{name}.w" in self.param_shapes:
                raise NetworkShapeError(i, layer, f"duplicate layer name {name!r}")
        if kind == "conv2d":
            if len(shape) != 3:
                raise NetworkShapeError(i, layer, f"conv2d expects (H, W, C) input, got {shape}")
            h, w, c = shape
            k = int(layer["kernel"])
            s = int(layer.get("stride", 1))
            pad = layer.get("padding", "same")
            p = k // 2 if pad == "same" else int(pad)
            layer["_pad"] = p
            ho, wo = _conv_out(h, k, s, p), _conv_out(w, k, s, p)
            if ho < 1 or wo < 1:
                raise NetworkShapeError(i, layer, f"kernel {k} does not fit input {shape}")
            f = int(layer["filters"])
            self.param_shapes[f"{layer['name']}.w"] = (k, k, c, f)
            self.param_shapes[f"{layer['name']}.b"] = (f,)
            self.fan_in[layer["name"]] = k * k * c
            return (ho, wo, f)
        if kind == "dense":
            if len(shape) != 1:
                raise NetworkShapeError(i, layer, f"dense expects a flat input, got {shape}")
            u = int(layer["units"])
            self.param_shapes[f"{layer['name']}.w"] = (shape[0], u)
            self.param_shapes[f"{layer['name']}.b"] = (u,)
            self.fan_in[layer["name"]] = shape[0]
            return (u,)
        if kind == "upsample":
            if len(shape) != 3:
                raise NetworkShapeError(i, layer, f"upsample expects (H, W, C) input, got {shape}")
            f = int(layer.get("factor", 2))
            return (shape[0] * f, shape[1] * f, shape[2])
        if kind == "global_avg_pool":
            if len(shape) != 3:
                raise NetworkShapeError(i, layer, f"global_avg_pool expects (H, W, C) input, got {shape}")
            return (shape[2],)
        if kind == "flatten":
            return (int(np.prod(shape)),)
        if kind == "softmax" and len(shape) != 1:
            raise NetworkShapeError(i, layer, f"softmax expects a flat input, got {shape}")
        return shape

    @property
    def num_params(self):
        return int(sum(np.prod(s) for s in self.param_shapes.values()))

    def init_params(self, rng, prefix=""):
        """He-style fan-in scaled uniform weights, zero biases."""
        gen = rng.generator() if hasattr(rng, "generator") else rng
        params = {}
        for name, shape in self.param_shapes.items():
            layer = name.rsplit(".", 1)[0]
            if name.endswith(".b"):
                params[prefix + name] = np.zeros(shape, dtype=np.float32)
            else:
                bound = np.sqrt(6.0 / self.fan_in[layer])
                params[prefix + name] = gen.uniform(-bound, bound, size=shape).astype(np.float32)
        return params

    def forward(self, tape, params, x, prefix="", stop=None):
        """Run the stack on a batched tensor ``x`` of shape (N, *input_shape).

        ``params`` maps names to tape tensors. ``stop`` truncates the stack
        after that many layers.
        """
        if tuple(x.shape[1:]) != self.input_shape:
            raise NetworkShapeError(0, self.layers[0] if self.layers else {"type": "input"},
                                    f"expected input {self.input_shape}, got {tuple(x.shape[1:])}")
        layers = self.layers if stop is None else self.layers[:stop]
        for layer in layers:
            kind = layer["type"]
            if kind == "conv2d":
                n = prefix + layer["name"]
                x = ad.conv2d(x, params[n + ".w"], params[n + ".b"], int(layer.get("stride", 1)), layer["_pad"])
            elif kind == "dense":
                n = prefix + layer["name"]
                x = ad.dense(x, params[n + ".w"], params[n + ".b"])
            elif kind == "relu":
                x = ad.relu(x)
            elif kind == "leaky_relu":
                x = ad.leaky_relu(x, float(layer.get("slope", 0.01)))
            elif kind == "softmax":
                x = ad.softmax(x)
            elif kind == "upsample":
                x = ad.upsample_nearest(x, int(layer.get("factor", 2)))
            elif kind == "global_avg_pool":
                x = ad.global_avg_pool(x)
            elif kind == "flatten":
                x = ad.flatten(x)
        return x


def bind_params(tape, params, names=None):
    """Register numpy parameters on ``tape`` and return name -> Tensor."""
    names = params.keys() if names is None else names
    return {name: tape.parameter(name, params[name]) for name in names}


def evaluate_network(params, x, layers, input_shape=None, dtype=np.float32):
    """Inference-only forward pass.

    ``x`` is a single (H, W, C) image / flat vector, or a batch with a
    leading axis. Returns a numpy array of matching batch layout.
    """
    x = np.asarray(x)
    if input_shape is None:
        input_shape = x.shape
    net = layers if isinstance(layers, Network) else Network(layers, input_shape)
    single = x.shape == net.input_shape
    if single:
        x = x[None]
    tape = Tape(dtype=dtype, record=False)
    bound = {k: tape.constant(v) for k, v in params.items()}
    out = net.forward(tape, bound, tape.constant(x)).data
    return out[0] if single else out
