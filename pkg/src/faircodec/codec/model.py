from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from ..entropycoder import Decoder, Encoder, RangeCoderError
from ..tensorcore import Network, dumps_checkpoint, evaluate_network, loads_checkpoint
from .bitstream import Bitstream, BitstreamError
from .config import ALPHABET_BOUND, CodecConfig, ConfigError, RatePoint
from .entropy_models import FactorizedEntropyModel, SymbolRangeError, gaussian_conditional, scale_indexes

BATCH = 64


class CodecError(ValueError):
    pass


# ---------------------------------------------------------------- architecture


def encoder_layers(cfg):
    layers = []
    for i in range(cfg.stages):
        last = i == cfg.stages - 1
        layers.append({"type": "conv2d", "name": f"conv{i}", "kernel": cfg.kernel, "stride": 2,
                       "filters": cfg.latent_channels if last else cfg.hidden_channels})
        if not last:
            layers.append({"type": "relu"})
    return layers


def decoder_layers(cfg):
    layers = []
    for i in range(cfg.stages):
        last = i == cfg.stages - 1
        layers.append({"type": "upsample", "factor": 2})
        layers.append({"type": "conv2d", "name": f"conv{i}", "kernel": cfg.kernel,
                       "filters": cfg.input_size[2] if last else cfg.hidden_channels})
        if not last:
            layers.append({"type": "relu"})
    return layers


def hyper_encoder_layers(cfg):
    return [
        {"type": "conv2d", "name": "conv0", "kernel": 3, "filters": cfg.hidden_channels},
        {"type": "relu"},
        {"type": "conv2d", "name": "conv1", "kernel": 3, "stride": 2, "filters": cfg.hyper_channels},
    ]


def hyper_decoder_layers(cfg):
    return [
        {"type": "upsample", "factor": 2},
        {"type": "conv2d", "name": "conv0", "kernel": 3, "filters": cfg.hidden_channels},
        {"type": "relu"},
        {"type": "conv2d", "name": "conv1", "kernel": 3, "filters": cfg.latent_channels},
    ]


@dataclass
class Networks:
    encoder: Network
    decoder: Network
    hyper_encoder: Network | None = None
    hyper_decoder: Network | None = None


def build_networks(cfg):
    lat = cfg.latent_shape
    nets = Networks(Network(encoder_layers(cfg), cfg.input_size), Network(decoder_layers(cfg), lat))
    if cfg.entropy_model == "hyperprior-lite":
        nets.hyper_encoder = Network(hyper_encoder_layers(cfg), lat)
        nets.hyper_decoder = Network(hyper_decoder_layers(cfg), nets.hyper_encoder.output_shape)
    return nets


def init_params(cfg, rng):
    nets = build_networks(cfg)
    params = {}
    params.update(nets.encoder.init_params(rng.child("enc"), prefix="enc."))
    params.update(nets.decoder.init_params(rng.child("dec"), prefix="dec."))
    params["em.loc"] = np.zeros(cfg.latent_channels, dtype=np.float32)
    params["em.log_scale"] = np.zeros(cfg.latent_channels, dtype=np.float32)
    if nets.hyper_encoder is not None:
        params.update(nets.hyper_encoder.init_params(rng.child("henc"), prefix="henc."))
        params.update(nets.hyper_decoder.init_params(rng.child("hdec"), prefix="hdec."))
        params["hem.loc"] = np.zeros(cfg.hyper_channels, dtype=np.float32)
        params["hem.log_scale"] = np.zeros(cfg.hyper_channels, dtype=np.float32)
    return params


def _sub(params, prefix):
    n = len(prefix)
    return {k[n:]: v for k, v in params.items() if k.startswith(prefix)}


# ---------------------------------------------------------------- model


@dataclass
class CodecModel:
    """A trained codec. Parameters are treated as frozen once constructed."""

    config: CodecConfig
    params: dict
    lambda_index: int = 0
    log: list = field(default_factory=list)

    def __post_init__(self):
        self.nets = build_networks(self.config)
        self._hash = None
        self._em = None

    # -- serialisation
    def to_bytes(self):
        meta = {"kind": "codec", "config": self.config.to_dict(), "lambda_index": self.lambda_index,
                "log": self.log}
        return dumps_checkpoint(self.params, meta)

    @classmethod
    def from_bytes(cls, data):
        params, meta = loads_checkpoint(data)
        if meta.get("kind") != "codec":
            raise CodecError("checkpoint does not hold a codec")
        return cls(CodecConfig.from_dict(meta["config"]), params, meta["lambda_index"], meta.get("log", []))

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())

    @property
    def hash(self):
        """8-byte identity of parameters and configuration."""
        if self._hash is None:
            meta = json.dumps({"config": self.config.to_dict(), "lambda_index": self.lambda_index},
                              sort_keys=True).encode()
            self._hash = hashlib.sha256(dumps_checkpoint(self.params) + meta).digest()[:8]
        return self._hash

    # -- transforms
    def analysis(self, xs):
        xs = np.asarray(xs, dtype=np.float32)
        out = [evaluate_network(_sub(self.params, "enc."), xs[i:i + BATCH], self.nets.encoder)
               for i in range(0, len(xs), BATCH)]
        return np.concatenate(out) if out else np.zeros((0,) + self.config.latent_shape, np.float32)

    def synthesis(self, zhat):
        zhat = np.asarray(zhat, dtype=np.float32)
        out = [evaluate_network(_sub(self.params, "dec."), zhat[i:i + BATCH], self.nets.decoder)
               for i in range(0, len(zhat), BATCH)]
        return np.concatenate(out) if out else np.zeros((0,) + self.config.input_size, np.float32)

    def entropy_model(self):
        if self._em is None:
            if self.config.entropy_model == "factorized":
                self._em = FactorizedEntropyModel(self.params["em.loc"], self.params["em.log_scale"])
            else:
                self._em = HyperpriorLiteModel(self)
        return self._em

    def kept_channels(self, rp):
        cfg = self.config
        if rp.kind == "lambda-index":
            if rp.value != self.lambda_index:
                raise CodecError(f"rate point {rp.label()} does not match model lambda index {self.lambda_index}")
            return cfg.latent_channels
        if rp.groups != cfg.groups:
            raise CodecError(f"rate point has {rp.groups} groups, model has {cfg.groups}")
        return rp.value * cfg.latent_channels // cfg.groups


class HyperpriorLiteModel:
    """Side-information model: hyper latent -> per-element Gaussian scale index."""

    kind = "hyperprior-lite"

    def __init__(self, model):
        self.model = model
        p = model.params
        self.hyper = FactorizedEntropyModel(p["hem.loc"], p["hem.log_scale"])
        self.gaussian = gaussian_conditional()
        self._henc = _sub(p, "henc.")
        self._hdec = {k: v.astype(np.float64) for k, v in _sub(p, "hdec.").items()}

    def side_info(self, zhat):
        h = evaluate_network(self._henc, np.abs(zhat).astype(np.float32), self.model.nets.hyper_encoder)
        return quantize(h, "eval")

    def scale_index(self, hhat):
        # one image at a time, float64, so encoder and decoder agree bit for bit
        raw = evaluate_network(self._hdec, hhat.astype(np.float64), self.model.nets.hyper_decoder,
                               dtype=np.float64)
        return scale_indexes(np.exp(np.clip(raw, -10.0, 10.0)))

    def bits(self, zhat, kept=None):
        kept = zhat.shape[-1] if kept is None else kept
        hhat = self.side_info(_mask(zhat, kept))
        idx = self.scale_index(hhat)
        return self.hyper.bits(hhat) + self.gaussian.bits(zhat[..., :kept], idx[..., :kept])


def _mask(zhat, kept):
    if kept == zhat.shape[-1]:
        return zhat
    z = zhat.copy()
    z[..., kept:] = 0
    return z


# ---------------------------------------------------------------- operations


def quantize(latent, mode="eval", rng=None, L=ALPHABET_BOUND):
    """Quantise a numpy latent.

    eval: round half to even, clamp to [-L, L]. train-noise: add U[-0.5, 0.5)
    noise drawn from ``rng``. train-ste: rounded values (the identity
    gradient lives in the tape op ``straight_through_round``).
    """
    latent = np.asarray(latent)
    if mode == "eval":
        return np.clip(np.rint(latent), -L, L).astype(np.float32)
    if mode == "train-noise":
        gen = rng.generator() if hasattr(rng, "generator") else rng
        if gen is None:
            raise ValueError("train-noise quantisation needs an rng")
        return (latent + gen.uniform(-0.5, 0.5, size=latent.shape)).astype(latent.dtype)
    if mode == "train-ste":
        return np.rint(latent).astype(latent.dtype)
    raise ValueError(f"unknown quantisation mode {mode!r}")


def rate_estimate(zhat, em, kept=None):
    """Bits needed for an integer latent (h, w, C) under entropy model ``em``.

    Only the first ``kept`` channels count (all by default).
    """
    zhat = np.asarray(zhat)
    try:
        if em.kind == "factorized":
            kept = zhat.shape[-1] if kept is None else kept
            return em.bits(zhat[..., :kept])
        return em.bits(zhat, kept)
    except SymbolRangeError as exc:
        raise CodecError(str(exc)) from None


def rd_loss(x, xhat, bits, lmbda, pixels=None):
    """MSE(x, xhat) + lmbda * bits / pixels."""
    x = np.asarray(x, dtype=np.float64)
    xhat = np.asarray(xhat, dtype=np.float64)
    if x.shape != xhat.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {xhat.shape}")
    if pixels is None:
        pixels = x.shape[0] * x.shape[1]
    mse = float(np.mean((x - xhat) ** 2))
    return mse + lmbda * bits / pixels


def _check_input(model, xs):
    xs = np.asarray(xs, dtype=np.float32)
    if xs.shape[1:] != model.config.input_size:
        raise CodecError(f"image shape {xs.shape[1:]} does not match model input {model.config.input_size}")
    return xs


def encode_latents(model, xs):
    """Quantised latents of a batch of images."""
    return quantize(model.analysis(_check_input(model, xs)), "eval")


def compress_latent(model, zhat, rp):
    """Range-code one integer latent (h, w, C) at rate point ``rp``."""
    kept = model.kept_channels(rp)
    em = model.entropy_model()
    L = ALPHABET_BOUND
    enc = Encoder()
    z = _mask(zhat, kept)
    if em.kind == "factorized":
        part = z[..., :kept]
        enc.encode(part.astype(np.int64).ravel() + L, em.tables, em.indexes(part.shape).ravel())
    else:
        hhat = em.side_info(z)
        enc.encode(hhat.astype(np.int64).ravel() + L, em.hyper.tables, em.hyper.indexes(hhat.shape).ravel())
        idx = em.scale_index(hhat)[..., :kept]
        enc.encode(z[..., :kept].astype(np.int64).ravel() + L, em.gaussian.tables, idx.ravel())
    payload = enc.finish()
    return Bitstream(model.hash, rp, model.config.input_size, payload, 8 * len(payload))


def decompress_latent(model, bs):
    if bs.model_hash != model.hash:
        raise CodecError("bitstream was produced by a different model")
    if tuple(bs.shape) != model.config.input_size:
        raise CodecError(f"bitstream image shape {bs.shape} does not match model")
    kept = model.kept_channels(bs.rate_point)
    em = model.entropy_model()
    L = ALPHABET_BOUND
    shape = model.config.latent_shape
    z = np.zeros(shape, dtype=np.float32)
    n_main = shape[0] * shape[1] * kept
    try:
        dec = Decoder(bs.payload)
        if em.kind == "factorized":
            idx = em.indexes(shape[:2] + (kept,)).ravel()
            sym = dec.decode(em.tables, n_main, idx)
        else:
            hshape = model.nets.hyper_encoder.output_shape
            hsym = dec.decode(em.hyper.tables, int(np.prod(hshape)), em.hyper.indexes(hshape).ravel())
            hhat = (hsym.reshape(hshape) - L).astype(np.float32)
            idx = em.scale_index(hhat)[..., :kept]
            sym = dec.decode(em.gaussian.tables, n_main, idx.ravel())
        dec.finish()
    except RangeCoderError as exc:
        raise BitstreamError(f"corrupt payload: {exc}") from None
    z[..., :kept] = sym.reshape(shape[:2] + (kept,)) - L
    return z


def compress(model, x, rp):
    return compress_batch(model, np.asarray(x)[None], rp)[0]


def compress_batch(model, xs, rp):
    model.kept_channels(rp)
    zs = encode_latents(model, xs)
    return [compress_latent(model, z, rp) for z in zs]


def decompress(model, bs):
    return decompress_batch(model, [bs])[0]


def decompress_batch(model, streams):
    streams = [Bitstream.from_bytes(s) if isinstance(s, (bytes, bytearray)) else s for s in streams]
    zs = np.stack([decompress_latent(model, s) for s in streams]) if streams else \
        np.zeros((0,) + model.config.latent_shape, np.float32)
    return np.clip(model.synthesis(zs), 0.0, 1.0)


def rate_point_grid(model_config, n=5):
    """``n`` progressive rate points spread over 1..K groups (always includes K)."""
    K = model_config.groups
    if n >= K:
        ks = range(1, K + 1)
    else:
        ks = sorted({int(round(v)) for v in np.geomspace(1, K, n)})
        extra = [k for k in range(1, K + 1) if k not in ks]
        while len(ks) < n and extra:
            ks = sorted(set(ks) | {extra.pop(0)})
    return [RatePoint.progressive(k, K) for k in ks]


__all__ = [
    "CodecError", "CodecModel", "ConfigError", "HyperpriorLiteModel", "build_networks", "compress",
    "compress_batch", "compress_latent", "decompress", "decompress_batch", "decompress_latent",
    "encode_latents", "init_params", "quantize", "rate_estimate", "rate_point_grid", "rd_loss",
]
