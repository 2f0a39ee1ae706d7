from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from ..dataio.dataset import split
from ..tensorcore import (
    Network,
    OptimizerState,
    RngStream,
    Tape,
    bind_params,
    dumps_checkpoint,
    evaluate_network,
    loads_checkpoint,
    ops,
    optimizer_step,
)
from .grouping import GroupedLabelMap, group_labels

MODES = ("matched-rate", "clean-trained")

log = logging.getLogger(__name__)


class ClassifierError(ValueError):
    pass


@dataclass(frozen=True)
class ClassifierConfig:
    """Backbone and training protocol of a phenotype classifier.

    Defaults follow the evaluation protocol: plain SGD at lr 0.01, batch 32,
    at most 50 epochs with early stopping after 5 epochs without validation
    improvement, averaged over 5 seeds.
    """

    channels: tuple = (16, 32, 64)
    embedding_dim: int = 64
    optimizer: str = "sgd"
    learning_rate: float = 0.01
    batch_size: int = 32
    max_epochs: int = 50
    patience: int = 5
    seeds: tuple = (0, 1, 2, 3, 4)
    validation_fraction: float = 0.1
    split_seed: int = 0
    mode: str = "matched-rate"
    # fixed input standardization (x - shift) * scale; plain SGD barely moves on raw [0, 1] pixels
    input_shift: float = 0.5
    input_scale: float = 4.0

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not self.channels or min(self.channels) < 1:
            raise ClassifierError("channels must be a non-empty tuple of positive ints")
        if self.optimizer not in ("sgd", "adam"):
            raise ClassifierError(f"unknown optimizer {self.optimizer!r}")
        if self.mode not in MODES:
            raise ClassifierError(f"mode must be one of {MODES}")
        if not self.seeds:
            raise ClassifierError("at least one seed is required")
        if not 0 < self.validation_fraction < 1:
            raise ClassifierError("validation_fraction must lie in (0, 1)")
        if self.max_epochs < 1 or self.patience < 1 or self.batch_size < 1:
            raise ClassifierError("max_epochs, patience and batch_size must be positive")

    def to_dict(self):
        d = asdict(self)
        d["channels"] = list(self.channels)
        d["seeds"] = list(self.seeds)
        return d

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ClassifierError(f"unknown classifier config keys: {sorted(unknown)}")
        return cls(**d)

    def replace(self, **changes):
        d = self.to_dict()
        d.update(changes)
        return ClassifierConfig.from_dict(d)


def classifier_layers(config, n_classes):
    layers = []
    for i, c in enumerate(config.channels):
        layers.append({"type": "conv2d", "name": f"conv{i}", "kernel": 3, "stride": 2, "filters": c})
        layers.append({"type": "relu"})
    layers += [
        {"type": "global_avg_pool"},
        {"type": "dense", "name": "embed", "units": config.embedding_dim},
        {"type": "relu"},
        {"type": "dense", "name": "head", "units": n_classes},
    ]
    return layers


def early_stopping(losses, patience):
    """(stop epoch, best epoch), 1-based, for a validation loss sequence.

    Training stops once ``patience`` consecutive epochs fail to improve on
    the best loss so far.
    """
    best, best_epoch, stale = math.inf, 0, 0
    for epoch, loss in enumerate(losses, start=1):
        if loss < best:
            best, best_epoch, stale = loss, epoch, 0
        else:
            stale += 1
            if stale >= patience:
                return epoch, best_epoch
    return len(losses), best_epoch


def _softmax64(logits):
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass(eq=False)
class ClassifierModel:
    config: ClassifierConfig
    label_map: GroupedLabelMap
    params: dict
    input_shape: tuple
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.input_shape = tuple(self.input_shape)
        self.network = Network(classifier_layers(self.config, len(self.label_map.label_space)),
                               self.input_shape)

    @property
    def category(self):
        return self.label_map.category

    @property
    def label_space(self):
        return self.label_map.label_space

    def _check(self, x):
        x = np.asarray(x, dtype=np.float32)
        single = x.shape == self.input_shape
        if single:
            x = x[None]
        if x.shape[1:] != self.input_shape:
            raise ClassifierError(f"input {x.shape[1:]} does not match classifier input {self.input_shape}")
        return self.standardize(x), single

    def standardize(self, x):
        return ((x - self.config.input_shift) * self.config.input_scale).astype(np.float32)

    def logits(self, x, batch=256):
        x, single = self._check(x)
        out = [evaluate_network(self.params, x[i:i + batch], self.network) for i in range(0, len(x), batch)]
        out = np.concatenate(out) if out else np.zeros((0, len(self.label_space)), np.float32)
        return out[0] if single else out

    def probabilities(self, x):
        return _softmax64(self.logits(x))

    def embed(self, x, batch=256):
        """Penultimate activations (the ``embedding_dim``-wide layer after ReLU)."""
        x, single = self._check(x)
        stop = len(self.network.layers) - 1
        tape = Tape(record=False)
        bound = {k: tape.constant(v) for k, v in self.params.items()}
        out = [self.network.forward(tape, bound, tape.constant(x[i:i + batch]), stop=stop).data
               for i in range(0, len(x), batch)]
        out = np.concatenate(out) if out else np.zeros((0, self.config.embedding_dim), np.float32)
        return out[0] if single else out

    def to_bytes(self):
        meta = {"kind": "classifier", "config": self.config.to_dict(), "label_map": self.label_map.to_dict(),
                "input_shape": list(self.input_shape), "metadata": self.metadata}
        return dumps_checkpoint(self.params, meta)

    @classmethod
    def from_bytes(cls, data):
        params, meta = loads_checkpoint(data)
        if meta.get("kind") != "classifier":
            raise ClassifierError("checkpoint does not hold a classifier")
        return cls(ClassifierConfig.from_dict(meta["config"]), GroupedLabelMap.from_dict(meta["label_map"]),
                   params, tuple(meta["input_shape"]), meta.get("metadata", {}))

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def predict(model, x):
    """(label indices, probability vectors). Ties go to the lowest index."""
    probs = model.probabilities(x)
    return np.argmax(probs, axis=-1), probs


def predict_labels(model, x):
    idx, _ = predict(model, x)
    space = np.array(model.label_space, dtype=object)
    return space[idx]


def embed(model, x):
    return model.embed(x)


def _val_metrics(model, x, y):
    probs = model.probabilities(x)
    nll = -np.log(np.maximum(probs[np.arange(len(y)), y], 1e-12))
    return float(math.fsum(nll) / len(y)), float(np.mean(np.argmax(probs, -1) == y))


def train_classifier(train, category, config=None, seed=None, label_map=None):
    """Fit one classifier on ``train`` for ``category``.

    A ``validation_fraction`` slice of ``train`` (keyed hash of record id)
    drives early stopping; the returned model holds the parameters of the
    epoch with the lowest validation loss.
    """
    config = config or ClassifierConfig()
    seed = config.seeds[0] if seed is None else int(seed)
    if len(train) == 0:
        raise ClassifierError("empty training set")
    label_map = label_map or group_labels(train, category)
    fit, val = split(train, config.validation_fraction, config.split_seed, salt="validation")
    if len(fit) == 0 or len(val) == 0:
        raise ClassifierError(f"training set of {len(train)} is too small for a validation split")
    y_fit = label_map.indices(fit.groups, fit.label_array(category))
    y_val = label_map.indices(val.groups, val.label_array(category))
    x_val = np.ascontiguousarray(val.images)
    present = set(y_fit.tolist())
    warnings = [f"grouped label {lab!r} has no training examples; the class cannot be learned"
                for i, lab in enumerate(label_map.label_space) if i not in present]

    rng = RngStream(seed).child(f"classifier/{category}")
    model = ClassifierModel(config, label_map, {}, train.image_size)
    x_fit = model.standardize(fit.images)
    params = model.network.init_params(rng.child("init"))
    model.params = params
    order = rng.child("order").generator()
    opt = OptimizerState(config.optimizer, config.learning_rate)
    history = []
    best = (math.inf, None, 0)
    stale = 0
    for epoch in range(1, config.max_epochs + 1):
        perm = order.permutation(len(x_fit))
        tot = 0.0
        for start in range(0, len(perm), config.batch_size):
            idx = perm[start:start + config.batch_size]
            tape = Tape()
            P = bind_params(tape, params)
            logits = model.network.forward(tape, P, tape.constant(x_fit[idx]))
            loss = ops.cross_entropy(logits, y_fit[idx])
            lv = float(loss.data)
            if not math.isfinite(lv):
                raise ClassifierError(f"non-finite loss at epoch {epoch}")
            grads = tape.backward(loss)
            tape.release()
            optimizer_step(opt, params, grads)
            tot += lv * len(idx)
        model.params = params
        val_loss, val_acc = _val_metrics(model, x_val, y_val)
        history.append({"epoch": epoch, "train_loss": tot / len(x_fit), "val_loss": val_loss, "val_accuracy": val_acc})
        if val_loss < best[0]:
            best = (val_loss, {k: v.copy() for k, v in params.items()}, epoch)
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    meta = {"seed": seed, "epochs_run": len(history), "best_epoch": best[2], "history": history,
            "warnings": warnings, "mode": config.mode, "train_size": len(fit), "validation_size": len(val)}
    log.info("classifier %s seed %d: %d epochs, best %d", category, seed, len(history), best[2])
    return ClassifierModel(config, label_map, best[1], train.image_size, meta)


def per_group_accuracy(model, dataset):
    """{group: accuracy} of ``model`` on ``dataset`` under its label map."""
    y = model.label_map.indices(dataset.groups, dataset.label_array(model.category))
    pred, _ = predict(model, dataset.images)
    out = {}
    for g in dataset.schema.groups:
        m = dataset.groups == g
        if m.any():
            out[g] = float(np.mean(pred[m] == y[m]))
    return out


@dataclass
class TrainReport:
    category: str
    mode: str
    config: dict
    seeds: list
    runs: list
    warnings: list

    def summary(self):
        groups = sorted({g for r in self.runs for g in r.get("test_accuracy", {})})
        stats = {}
        for g in groups:
            vals = np.array([r["test_accuracy"][g] for r in self.runs if g in r.get("test_accuracy", {})])
            stats[g] = {"mean": float(np.mean(vals)), "std": float(np.std(vals))}
        return stats

    def to_dict(self):
        return {"category": self.category, "mode": self.mode, "config": self.config, "seeds": self.seeds,
                "runs": self.runs, "warnings": self.warnings, "test_accuracy": self.summary()}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def train_classifier_seeds(train, category, config=None, test=None, label_map=None):
    """One classifier per configured seed, plus a :class:`TrainReport`."""
    config = config or ClassifierConfig()
    label_map = label_map or group_labels(train, category)
    models, runs, warnings = [], [], []
    for seed in config.seeds:
        m = train_classifier(train, category, config, seed, label_map)
        run = {"seed": seed, "epochs_run": m.metadata["epochs_run"], "best_epoch": m.metadata["best_epoch"],
               "val_accuracy": [h["val_accuracy"] for h in m.metadata["history"]],
               "val_loss": [h["val_loss"] for h in m.metadata["history"]]}
        if test is not None:
            run["test_accuracy"] = per_group_accuracy(m, test)
        runs.append(run)
        warnings.extend(w for w in m.metadata["warnings"] if w not in warnings)
        models.append(m)
    return models, TrainReport(category, config.mode, config.to_dict(), list(config.seeds), runs, warnings)
