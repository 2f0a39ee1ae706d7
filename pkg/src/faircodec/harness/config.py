"""Experiment configuration (JSON).

Schema, with defaults::

    {
      "kind": "rate_sweep" | "balanced_comparison" | "subset_study" | "blur_study",
      "name": "experiment",
      "dataset": {"synth": {SynthSpec fields}} | {"manifest": "path/to/manifest.csv"},
      "reference": optional dataset source for the Fréchet reference
                   (default: the clean test split),
      "test_fraction": 0.2,
      "split_seed": 0,
      "codecs": [{"name": "...", "config": {CodecConfig fields},
                  "lambdas": [..]            # one model per lambda, or
                  "rate_points": [k, ...]}],  # progressive subsets of one model
      "categories": ["skin_type", ...],
      "classifier": {ClassifierConfig fields except seeds},
      "seeds": [0, 1, 2, 3, 4],
      "seed_codecs": true,
      "sigmas": [0, 1, 2],                   # blur_study
      "subsets": [{"name": "...", "groups": [...], "labels": {cat: [...]}}],  # subset_study
      "balance_target": {group: fraction},   # balanced_comparison, default uniform
      "bootstrap_samples": 1000,
      "output_dir": "out"
    }
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

from ..codec import CodecConfig, ConfigError
from ..dataio.schema import CATEGORIES
from ..dataio.synth import SynthSpec
from ..phenoclassifier import ClassifierConfig, ClassifierError

KINDS = ("rate_sweep", "balanced_comparison", "subset_study", "blur_study")


class ExperimentConfigError(ValueError):
    pass


@dataclass(frozen=True)
class CodecSpec:
    name: str
    config: CodecConfig
    lambdas: tuple = ()
    rate_points: tuple = ()

    @property
    def progressive(self):
        return bool(self.rate_points)

    def to_dict(self):
        d = {"name": self.name, "config": self.config.to_dict()}
        if self.progressive:
            d["rate_points"] = list(self.rate_points)
        else:
            d["lambdas"] = list(self.lambdas)
        return d


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    dataset: dict
    categories: tuple
    name: str = "experiment"
    codecs: tuple = ()
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    seeds: tuple = (0, 1, 2, 3, 4)
    seed_codecs: bool = True
    reference: dict | None = None
    test_fraction: float = 0.2
    split_seed: int = 0
    sigmas: tuple = (0.0, 1.0, 2.0)
    subsets: tuple = ()
    balance_target: dict | None = None
    bootstrap_samples: int = 1000
    output_dir: str = "out"
    base_dir: str = "."

    def to_dict(self):
        """Resolved configuration, defaults included, as echoed into reports."""
        return {
            "kind": self.kind, "name": self.name, "dataset": self.dataset, "reference": self.reference,
            "categories": list(self.categories), "codecs": [c.to_dict() for c in self.codecs],
            "classifier": self.classifier.to_dict(), "seeds": list(self.seeds), "seed_codecs": self.seed_codecs,
            "test_fraction": self.test_fraction, "split_seed": self.split_seed,
            "sigmas": list(self.sigmas), "subsets": [dict(s) for s in self.subsets],
            "balance_target": self.balance_target, "bootstrap_samples": self.bootstrap_samples,
            "output_dir": self.output_dir,
        }

    def resolve(self, path):
        return path if os.path.isabs(path) else os.path.join(self.base_dir, path)


def _require(d, key, kind):
    if key not in d:
        raise ExperimentConfigError(f"{kind} experiments need {key!r}")
    return d[key]


def _dataset_source(src, what):
    if not isinstance(src, dict) or len(src) != 1 or next(iter(src)) not in ("synth", "manifest"):
        raise ExperimentConfigError(f"{what} must be {{'synth': {{...}}}} or {{'manifest': path}}")
    if "synth" in src:
        try:
            SynthSpec.from_dict(src["synth"] or {})
        except (TypeError, ValueError) as exc:
            raise ExperimentConfigError(f"{what}: invalid synth spec: {exc}") from None
    return src


def parse_config(d, base_dir="."):
    """Validate a config mapping and fill in defaults."""
    if not isinstance(d, dict):
        raise ExperimentConfigError("experiment config must be a JSON object")
    known = {"kind", "name", "dataset", "reference", "test_fraction", "split_seed", "codecs", "categories",
             "classifier", "seeds", "seed_codecs", "sigmas", "subsets", "balance_target",
             "bootstrap_samples", "output_dir"}
    unknown = set(d) - known
    if unknown:
        raise ExperimentConfigError(f"unknown config keys: {sorted(unknown)}")
    kind = d.get("kind")
    if kind not in KINDS:
        raise ExperimentConfigError(f"kind must be one of {KINDS}, got {kind!r}")
    dataset = _dataset_source(_require(d, "dataset", kind), "dataset")
    reference = _dataset_source(d["reference"], "reference") if d.get("reference") is not None else None
    cats = tuple(d.get("categories") or ())
    if not cats:
        raise ExperimentConfigError("categories must be a non-empty list")
    bad = [c for c in cats if c not in CATEGORIES]
    if bad:
        raise ExperimentConfigError(f"unknown categories {bad}")
    seeds = tuple(int(s) for s in d.get("seeds", (0, 1, 2, 3, 4)))
    if not seeds:
        raise ExperimentConfigError("seeds must contain at least one seed")
    if len(set(seeds)) != len(seeds):
        raise ExperimentConfigError("seeds must be distinct")
    try:
        clf = ClassifierConfig.from_dict({**d.get("classifier", {}), "seeds": list(seeds)})
    except (ClassifierError, TypeError) as exc:
        raise ExperimentConfigError(f"classifier: {exc}") from None

    codecs = []
    if kind != "blur_study":
        raw = _require(d, "codecs", kind)
        if not raw:
            raise ExperimentConfigError("codec grid must be non-empty")
        names = set()
        for i, c in enumerate(raw):
            name = c.get("name", f"codec{i}")
            if name in names:
                raise ExperimentConfigError(f"duplicate codec name {name!r}")
            names.add(name)
            try:
                cfg = CodecConfig.from_dict(c.get("config", {}))
            except (ConfigError, TypeError) as exc:
                raise ExperimentConfigError(f"codec {name}: {exc}") from None
            lambdas = tuple(float(v) for v in c.get("lambdas", ()))
            rps = tuple(int(v) for v in c.get("rate_points", ()))
            if bool(lambdas) == bool(rps):
                raise ExperimentConfigError(f"codec {name}: give exactly one of a non-empty 'lambdas' or "
                                            "'rate_points' grid")
            if any(v <= 0 for v in lambdas):
                raise ExperimentConfigError(f"codec {name}: lambdas must be > 0")
            if any(not 1 <= k <= cfg.groups for k in rps):
                raise ExperimentConfigError(f"codec {name}: rate points must lie in 1..{cfg.groups}")
            if len(set(lambdas)) != len(lambdas) or len(set(rps)) != len(rps):
                raise ExperimentConfigError(f"codec {name}: grid values must be distinct")
            codecs.append(CodecSpec(name, cfg, lambdas, tuple(sorted(rps))))

    sigmas = tuple(float(s) for s in d.get("sigmas", (0.0, 1.0, 2.0)))
    if kind == "blur_study" and (not sigmas or min(sigmas) < 0):
        raise ExperimentConfigError("blur_study needs a non-empty grid of sigmas >= 0")
    subsets = tuple(d.get("subsets", ()))
    if kind == "subset_study":
        if not subsets:
            raise ExperimentConfigError("subset_study needs at least one subset")
        for s in subsets:
            if "name" not in s or not (s.get("groups") or s.get("labels")):
                raise ExperimentConfigError("each subset needs a name and a groups and/or labels filter")
    tf = float(d.get("test_fraction", 0.2))
    if not 0 < tf < 1:
        raise ExperimentConfigError("test_fraction must lie in (0, 1)")
    target = d.get("balance_target")
    if target is not None and (not target or min(target.values()) < 0):
        raise ExperimentConfigError("balance_target must map groups to non-negative shares")
    return ExperimentConfig(
        kind=kind, dataset=dataset, categories=cats, name=str(d.get("name", "experiment")),
        codecs=tuple(codecs), classifier=clf, seeds=seeds, seed_codecs=bool(d.get("seed_codecs", True)),
        reference=reference, test_fraction=tf, split_seed=int(d.get("split_seed", 0)), sigmas=sigmas,
        subsets=subsets, balance_target=target, bootstrap_samples=int(d.get("bootstrap_samples", 1000)),
        output_dir=str(d.get("output_dir", "out")), base_dir=base_dir,
    )


def load_config(path):
    try:
        with open(path) as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ExperimentConfigError(f"{path}: invalid JSON: {exc}") from None
    except OSError as exc:
        raise ExperimentConfigError(f"cannot read {path}: {exc}") from None
    return parse_config(d, os.path.dirname(os.path.abspath(path)))
