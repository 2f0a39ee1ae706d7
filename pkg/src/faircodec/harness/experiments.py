"""Experiment pipelines: rate sweeps, balanced comparisons, subset studies, blur studies.

A *cell* is one (codec, rate point, seed) combination, or one (category,
seed) pair for blur studies. Cells fail independently: an exception is
recorded with its cause and the remaining cells still run.
"""
from __future__ import annotations

import concurrent.futures
import logging
import math
import multiprocessing
import os
import traceback

import numpy as np

from .. import __version__
from ..biasmetrics import (
    MetricsError,
    PredictionRecord,
    batch_quality,
    blur_flip_analysis,
    compute_metrics,
    frechet_distance,
    gaussian_blur,
)
from ..codec import RatePoint, train_codec
from ..dataio import (
    SynthSpec,
    filter_subset,
    load_dataset,
    rebalance,
    reconstruct_dataset,
    split,
    synth_generate,
)
from ..phenoclassifier import group_labels, predict, train_classifier

log = logging.getLogger(__name__)

REPORT_VERSION = 1


# ---------------------------------------------------------------- data


def load_source(cfg, src):
    if "synth" in src:
        return synth_generate(SynthSpec.from_dict(src["synth"] or {}))
    return load_dataset(cfg.resolve(src["manifest"]))


class ExperimentData:
    """Clean splits shared by every cell, plus caches of clean-trained classifiers."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.dataset = load_source(cfg, cfg.dataset)
        self.train, self.test = split(self.dataset, cfg.test_fraction, cfg.split_seed)
        self.reference = load_source(cfg, cfg.reference) if cfg.reference else self.test
        self.label_maps = {c: group_labels(self.train, c) for c in cfg.categories}
        self._clean = {}
        self._ref_emb = {}
        self._codecs = {}

    def codec(self, codec_train, config, lambda_index):
        """Train (or reuse) a codec; identical configs on identical data give identical models."""
        key = (codec_train.fingerprint(), repr(sorted(config.to_dict().items())), lambda_index)
        if key not in self._codecs:
            self._codecs[key] = train_codec(codec_train, config, lambda_index=lambda_index)
        return self._codecs[key]

    def clean_classifier(self, category, seed):
        key = (category, seed)
        if key not in self._clean:
            self._clean[key] = train_classifier(self.train, category, self.cfg.classifier, seed,
                                                self.label_maps[category])
        return self._clean[key]

    def embedder(self, seed):
        """Clean-trained classifier whose penultimate layer defines the realism feature space."""
        return self.clean_classifier(self.cfg.categories[0], seed)

    def reference_embeddings(self, seed):
        if seed not in self._ref_emb:
            self._ref_emb[seed] = self.embedder(seed).embed(self.reference.images)
        return self._ref_emb[seed]


def _frechet(data, seed, images, groups):
    """Pooled and per-group Fréchet distance of ``images`` to the reference set.

    A set with too few samples for a covariance estimate gets None and the
    reason is noted.
    """
    emb = data.embedder(seed).embed(images)
    ref = data.reference_embeddings(seed)
    out = {"pooled": None, "per_group": {}, "notes": []}
    parts = [("pooled", emb, ref)] + [(g, emb[groups == g], ref[data.reference.groups == g])
                                      for g in data.dataset.schema.groups]
    for name, a, b in parts:
        try:
            value = frechet_distance(a, b)
        except MetricsError as exc:
            value = None
            out["notes"].append(f"{name}: {exc}")
        if name == "pooled":
            out["pooled"] = value
        else:
            out["per_group"][name] = value
    return out


def _records(model, dataset, category, images, clean_images, bpp):
    lm = model.label_map
    truth = lm.apply(dataset.groups, dataset.label_array(category))
    pred_idx, _ = predict(model, images)
    pred = np.array(lm.label_space, dtype=object)[pred_idx]
    if clean_images is not None:
        m, p, s = batch_quality(clean_images, images)
    else:
        m = p = s = np.full(len(dataset), math.nan)
    bpp = np.full(len(dataset), math.nan) if bpp is None else bpp
    return [PredictionRecord(dataset.ids[i], dataset.groups[i], truth[i], pred[i], float(bpp[i]),
                             float(m[i]), float(p[i]), float(s[i])) for i in range(len(dataset))]


def _groups_present(dataset):
    return [g for g in dataset.schema.groups if np.any(dataset.groups == g)]


# ---------------------------------------------------------------- cells


def _codec_seed(cfg, spec, seed):
    return spec.config.seed + seed if cfg.seed_codecs else spec.config.seed


def _rate_jobs(spec):
    """(model index, codec config overrides, rate point) for every grid point."""
    if spec.progressive:
        return [(0, {}, RatePoint.progressive(k, spec.config.groups)) for k in spec.rate_points]
    return [(i, {"lmbda": lm}, RatePoint.lambda_index(i)) for i, lm in enumerate(spec.lambdas)]


def _fail(cause):
    return {"status": "failed", "cause": cause}


def sweep_job(data, spec, seed, codec_train):
    """All rate-point cells of one codec at one seed."""
    cfg = data.cfg
    cells = []
    models = {}
    for model_idx, overrides, rp in _rate_jobs(spec):
        cell = {"codec": spec.name, "rate_point": rp.to_dict(), "rate_label": rp.label(), "seed": seed}
        try:
            if model_idx not in models:
                ccfg = spec.config.replace(seed=_codec_seed(cfg, spec, seed), **overrides)
                models[model_idx] = data.codec(codec_train, ccfg, model_idx)
            model = models[model_idx]
            rec_test = reconstruct_dataset(model, data.test, rp)
            rec_train = None
            if cfg.classifier.mode == "matched-rate":
                rec_train = reconstruct_dataset(model, data.train, rp)
            frechet = _frechet(data, seed, rec_test.dataset.images, data.test.groups)
            metrics = {}
            for cat in cfg.categories:
                if rec_train is not None:
                    clf = train_classifier(rec_train.dataset, cat, cfg.classifier, seed, data.label_maps[cat])
                else:
                    clf = data.clean_classifier(cat, seed)
                recs = _records(clf, data.test, cat, rec_test.dataset.images, data.test.images, rec_test.bpp)
                meta = {"classifier_mode": cfg.classifier.mode, "seed": seed, "codec": spec.name,
                        "classifier_epochs": clf.metadata["epochs_run"],
                        "classifier_best_epoch": clf.metadata["best_epoch"],
                        "warnings": clf.metadata["warnings"], "reconstruction_clamp": "[0, 1]"}
                metrics[cat] = compute_metrics(recs, cat, rp.to_dict(), _groups_present(data.test), frechet, meta,
                                               bootstrap_seed=seed, B=cfg.bootstrap_samples).to_dict()
            cell.update({"status": "ok", "codec_hash": model.hash.hex(), "codec_best_epoch": model.best_epoch,
                         "codec_epochs": len(model.log), "mean_bpp": rec_test.mean_bpp, "metrics": metrics})
            log.info("cell %s %s seed %d done: %.4f bpp", spec.name, rp.label(), seed, rec_test.mean_bpp)
        except Exception as exc:  # isolate the cell; the cause goes in the report
            log.warning("cell %s %s seed %d failed: %s", spec.name, rp.label(), seed, exc)
            cell.update(_fail(f"{type(exc).__name__}: {exc}"))
            cell["traceback"] = traceback.format_exc(limit=3).splitlines()[-3:]
        cells.append(cell)
    return cells


def blur_job(data, category, seed):
    cfg = data.cfg
    cell = {"category": category, "seed": seed}
    try:
        clf = data.clean_classifier(category, seed)
        flips = blur_flip_analysis(clf, data.test, cfg.sigmas)
        metrics = {}
        for s in cfg.sigmas:
            blurred = gaussian_blur(data.test.images, s)
            recs = _records(clf, data.test, category, blurred, data.test.images, None)
            meta = {"classifier_mode": "clean-trained", "seed": seed, "sigma": s}
            metrics[repr(float(s))] = compute_metrics(recs, category, {"kind": "blur", "sigma": float(s)},
                                                      _groups_present(data.test), None, meta, seed,
                                                      cfg.bootstrap_samples).to_dict()
        cell.update({"status": "ok", "flip": flips.to_dict(), "metrics": metrics,
                     "flip_rows_valid": flips.rows_valid()})
    except Exception as exc:  # isolate the cell
        cell.update(_fail(f"{type(exc).__name__}: {exc}"))
    return cell


# ---------------------------------------------------------------- scheduling


_CONTEXT = {}


def _run_indexed(i):
    fn, args = _CONTEXT["jobs"][i]
    return fn(_CONTEXT["data"], *args)


def _schedule(data, jobs):
    """Run ``jobs`` (fn, args) over at most FAIRCODEC_WORKERS processes; results keep job order."""
    workers = max(1, int(os.environ.get("FAIRCODEC_WORKERS", "1") or 1))
    if workers == 1 or len(jobs) < 2 or "fork" not in multiprocessing.get_all_start_methods():
        return [fn(data, *args) for fn, args in jobs]
    _CONTEXT.update(data=data, jobs=jobs)
    try:
        ctx = multiprocessing.get_context("fork")
        with concurrent.futures.ProcessPoolExecutor(min(workers, len(jobs)), mp_context=ctx) as pool:
            return list(pool.map(_run_indexed, range(len(jobs))))
    finally:
        _CONTEXT.clear()


# ---------------------------------------------------------------- aggregation


def _mean_std(vals):
    vals = [v for v in vals if v is not None and not (isinstance(v, float) and math.isnan(v))]
    if not vals:
        return None, None
    a = np.array(vals, dtype=np.float64)
    return float(np.mean(a)), float(np.std(a))


def sweep_curves(cells, categories):
    """Seed-averaged rate-bias, rate-distortion and bias-vs-Fréchet curves."""
    ok = [c for c in cells if c["status"] == "ok"]
    keys = []
    for c in ok:
        k = (c["codec"], c["rate_label"])
        if k not in keys:
            keys.append(k)
    rate_bias, rate_dist, pairs = {}, {}, []
    for codec, label in keys:
        group = [c for c in ok if c["codec"] == codec and c["rate_label"] == label]
        first = group[0]["metrics"][categories[0]]
        groups = first["groups"]
        bpp = _mean_std([c["mean_bpp"] for c in group])
        point = {"rate_point": group[0]["rate_point"], "rate_label": label, "seeds": len(group),
                 "bpp": bpp[0], "bpp_std": bpp[1]}
        rd = dict(point)
        for metric in ("psnr", "ssim"):
            rd[metric], rd[f"{metric}_std"] = _mean_std([c["metrics"][categories[0]][metric] for c in group])
            rd[f"per_group_{metric}"] = {g: _mean_std([c["metrics"][categories[0]][f"per_group_{metric}"][g]
                                                       for c in group])[0] for g in groups}
        rd["psnr_disparity"] = (max(rd["per_group_psnr"].values()) - min(rd["per_group_psnr"].values()))
        rd["frechet"] = _mean_std([c["metrics"][categories[0]]["frechet"].get("pooled") for c in group])[0]
        rate_dist.setdefault(codec, []).append(rd)
        for cat in categories:
            ms = [c["metrics"][cat] for c in group]
            b = _mean_std([m["bias"] for m in ms])
            rb = dict(point)
            rb.update({"bias": b[0], "bias_std": b[1], "bias_per_seed": [m["bias"] for m in ms],
                       "per_group_accuracy": {g: _mean_std([m["per_group_accuracy"][g] for m in ms])[0]
                                              for g in groups},
                       "mse_bias": _mean_std([m["mse_bias"] for m in ms])[0],
                       "psnr_bias": _mean_std([m["psnr_bias"] for m in ms])[0]})
            rate_bias.setdefault(codec, {}).setdefault(cat, []).append(rb)
            pairs.append({"codec": codec, "rate_label": label, "category": cat, "bias": b[0],
                          "frechet": rd["frechet"], "bpp": bpp[0]})
    for codec in rate_dist:
        rate_dist[codec].sort(key=lambda p: (p["bpp"] is None, p["bpp"]))
        for cat in rate_bias[codec]:
            rate_bias[codec][cat].sort(key=lambda p: (p["bpp"] is None, p["bpp"]))
    return {"rate_bias": rate_bias, "rate_distortion": rate_dist, "bias_frechet": pairs}


def blur_curves(cells, sigmas):
    ok = [c for c in cells if c["status"] == "ok"]
    out = {}
    for cat in sorted({c["category"] for c in ok}):
        rows = []
        for s in sigmas:
            ms = [c["metrics"][repr(float(s))] for c in ok if c["category"] == cat]
            groups = ms[0]["groups"]
            acc = {g: _mean_std([m["per_group_accuracy"][g] for m in ms])[0] for g in groups}
            overall = _mean_std([sum(m["per_group_counts"][g][0] for g in groups)
                                 / sum(m["per_group_counts"][g][1] for g in groups) for m in ms])
            b = _mean_std([m["bias"] for m in ms])
            rows.append({"sigma": float(s), "accuracy": overall[0], "accuracy_std": overall[1],
                         "per_group_accuracy": acc, "bias": b[0], "bias_std": b[1], "seeds": len(ms)})
        out[cat] = rows
    return {"blur_accuracy": out}


# ---------------------------------------------------------------- experiments


def _arm_jobs(data, codec_train):
    return [(sweep_job, (spec, seed, codec_train)) for spec in data.cfg.codecs for seed in data.cfg.seeds]


def _run_arms(data, arms):
    """``arms``: list of (name, codec training set, description)."""
    jobs, owner = [], []
    for name, train, _ in arms:
        js = _arm_jobs(data, train)
        jobs.extend(js)
        owner.extend([name] * len(js))
    results = _schedule(data, jobs)
    out = []
    for name, train, desc in arms:
        cells = [c for o, r in zip(owner, results) if o == name for c in r]
        out.append({"name": name, "description": desc, "codec_train_size": len(train),
                    "codec_train_groups": train.group_counts(), "cells": cells,
                    "curves": sweep_curves(cells, data.cfg.categories)})
    return out


def _subset_filter(spec):
    groups = set(spec.get("groups") or ())
    labels = {k: set(v) for k, v in (spec.get("labels") or {}).items()}

    def keep(group, ys):
        if groups and group not in groups:
            return False
        return all(ys[k] in v for k, v in labels.items())

    return keep


def run_experiment(cfg):
    """Run every cell of ``cfg`` and return the EvaluationReport as a dict."""
    data = ExperimentData(cfg)
    if cfg.kind == "rate_sweep":
        arms = _run_arms(data, [("main", data.train, "codec trained on the training split")])
    elif cfg.kind == "balanced_comparison":
        present = [g for g in data.dataset.schema.groups if np.any(data.train.groups == g)]
        target = cfg.balance_target or {g: 1.0 / len(present) for g in present}
        total = sum(target.values())
        target = {g: v / total for g, v in target.items()}
        balanced = rebalance(data.train, target, cfg.split_seed)
        arms = _run_arms(data, [("imbalanced", data.train, "codec trained on the original training split"),
                                ("balanced", balanced, f"codec trained on a rebalanced split {target}")])
    elif cfg.kind == "subset_study":
        spec_arms = [("baseline", data.train, "codec trained on the full training split")]
        for s in cfg.subsets:
            sub = filter_subset(data.train, _subset_filter(s))
            spec_arms.append((s["name"], sub, f"codec trained on subset {s}"))
        arms = _run_arms(data, spec_arms)
    else:
        jobs = [(blur_job, (cat, seed)) for cat in cfg.categories for seed in cfg.seeds]
        cells = _schedule(data, jobs)
        arms = [{"name": "blur", "description": "clean-trained classifiers on blurred clean test images",
                 "cells": cells, "curves": blur_curves(cells, cfg.sigmas)}]

    failures = [{"arm": a["name"], **{k: c[k] for k in ("codec", "rate_label", "category", "seed", "cause")
                                     if k in c}}
                for a in arms for c in a["cells"] if c["status"] != "ok"]
    return {
        "version": REPORT_VERSION,
        "kind": cfg.kind,
        "name": cfg.name,
        "config": cfg.to_dict(),
        "versions": {"faircodec": __version__, "numpy": np.__version__},
        "hashes": {"dataset": data.dataset.fingerprint(), "train": data.train.fingerprint(),
                   "test": data.test.fingerprint()},
        "data": {"size": len(data.dataset), "train": len(data.train), "test": len(data.test),
                 "groups": data.dataset.group_counts(), "test_groups": data.test.group_counts(),
                 "label_maps": {c: m.to_dict() for c, m in data.label_maps.items()}},
        "arms": arms,
        "failures": failures,
        "status": "complete" if not failures else "partial",
    }

