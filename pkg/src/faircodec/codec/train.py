from __future__ import annotations

import logging
import math

import numpy as np

from ..tensorcore import OptimizerState, RngStream, Tape, bind_params, ops, optimizer_step
from .config import CodecConfig
from .entropy_models import gaussian_bits, logistic_bits
from .model import CodecModel, build_networks, init_params

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


def _images(dataset):
    return dataset.images if hasattr(dataset, "images") else np.asarray(dataset, dtype=np.float32)


def training_objective(tape, nets, P, x, cfg, gen, keep=None):
    """Build the rate-distortion objective on ``tape`` for a batch ``x``.

    Returns (loss, mse, bpp) tensors. ``keep`` holds the number of latent
    channels kept per example (nested channel dropout); None keeps all.
    """
    n = x.shape[0]
    y = nets.encoder.forward(tape, P, x, prefix="enc.")
    if cfg.surrogate == "noise":
        yq = y + gen.uniform(-0.5, 0.5, size=y.shape).astype(tape.dtype)
    else:
        yq = ops.straight_through_round(y)
    weight = None
    if keep is not None:
        chan = np.arange(cfg.latent_channels)
        weight = (chan[None, :] < keep[:, None]).astype(tape.dtype)[:, None, None, :]
        yq = yq * weight
    xhat = nets.decoder.forward(tape, P, yq, prefix="dec.")
    mse = ops.mean(ops.square(xhat - x))
    if cfg.entropy_model == "factorized":
        bits = logistic_bits(yq, P["em.loc"], P["em.log_scale"], weight)
    else:
        h = nets.hyper_encoder.forward(tape, P, ops.abs_(yq), prefix="henc.")
        if cfg.surrogate == "noise":
            hq = h + gen.uniform(-0.5, 0.5, size=h.shape).astype(tape.dtype)
        else:
            hq = ops.straight_through_round(h)
        raw = nets.hyper_decoder.forward(tape, P, hq, prefix="hdec.")
        scale = ops.lower_bound(ops.exp(raw), 0.11)
        bits = logistic_bits(hq, P["hem.loc"], P["hem.log_scale"]) + gaussian_bits(yq, scale, weight)
    bpp = bits * (1.0 / (n * cfg.pixels))
    loss = mse + bpp * cfg.lmbda
    return loss, mse, bpp


def train_codec(dataset, config: CodecConfig, lambda_index=0, init=None):
    """Minimise MSE + lambda * bpp with Adam.

    The returned model carries the parameters of the epoch with the lowest
    training objective and a per-epoch log. Training stops early when the
    objective has not improved for ``config.patience`` epochs.
    """
    xs = np.ascontiguousarray(_images(dataset), dtype=np.float32)
    if len(xs) == 0:
        raise TrainingError("empty training set")
    if xs.shape[1:] != config.input_size:
        raise TrainingError(f"images {xs.shape[1:]} do not match codec input {config.input_size}")
    rng = RngStream(config.seed, 0).child("codec")
    params = init if init is not None else init_params(config, rng.child("init"))
    params = {k: v.copy() for k, v in params.items()}
    nets = build_networks(config)
    scale = config.entropy_lr_scale
    opt = OptimizerState("adam", config.learning_rate, lr_scale={"em.": scale, "hem.": scale})
    order_gen = rng.child("order").generator()
    noise_gen = rng.child("noise").generator()
    drop_gen = rng.child("dropout").generator()
    K = config.groups
    per_group = config.latent_channels // K
    history = []
    best = (math.inf, None, -1)
    stale = 0
    for epoch in range(config.epochs):
        perm = order_gen.permutation(len(xs))
        tot = np.zeros(3)
        for start in range(0, len(xs), config.batch_size):
            idx = perm[start:start + config.batch_size]
            xb = xs[idx]
            keep = None
            if config.progressive_dropout > 0:
                k = drop_gen.integers(1, K + 1, size=len(idx))
                full = drop_gen.random(len(idx)) >= config.progressive_dropout
                keep = np.where(full, K, k) * per_group
            tape = Tape()
            P = bind_params(tape, params)
            loss, mse, bpp = training_objective(tape, nets, P, tape.constant(xb), config, noise_gen, keep)
            lv = float(loss.data)
            if not math.isfinite(lv):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch starting {start}")
            grads = tape.backward(loss)
            tape.release()
            optimizer_step(opt, params, grads)
            tot += len(idx) * np.array([lv, float(mse.data), float(bpp.data)])
        loss_e, mse_e, bpp_e = (tot / len(xs)).tolist()
        history.append({"epoch": epoch + 1, "loss": loss_e, "mse": mse_e, "bpp": bpp_e})
        log.info("codec epoch %d loss %.5f mse %.5f bpp %.4f", epoch + 1, loss_e, mse_e, bpp_e)
        if loss_e < best[0]:
            best = (loss_e, {k: v.copy() for k, v in params.items()}, epoch + 1)
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    model = CodecModel(config, best[1], lambda_index, history)
    model.best_epoch = best[2]
    return model
