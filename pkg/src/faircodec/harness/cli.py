"""Command line entry point.

Exit codes: 0 success, 1 one or more experiment cells failed (or a runtime
error), 2 invalid configuration or arguments.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2


class UsageError(ValueError):
    pass


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON: {exc}") from None
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from None


def _dataset_from(src, base):
    from ..dataio import SynthSpec, load_dataset, synth_generate

    if not isinstance(src, dict) or len(src) != 1 or next(iter(src)) not in ("synth", "manifest"):
        raise UsageError("dataset must be {'synth': {...}} or {'manifest': path}")
    if "synth" in src:
        return synth_generate(SynthSpec.from_dict(src["synth"] or {}))
    path = src["manifest"]
    return load_dataset(path if os.path.isabs(path) else os.path.join(base, path))


def cmd_synth(args):
    from ..dataio import SynthSpec, save_dataset, synth_generate

    spec = SynthSpec.from_dict(_read_json(args.spec)) if args.spec else SynthSpec()
    if args.seed is not None:
        spec = SynthSpec.from_dict({**spec.to_dict(), "seed": args.seed})
    ds = synth_generate(spec)
    manifest = save_dataset(ds, args.out)
    print(f"wrote {len(ds)} records to {manifest}")
    return EXIT_OK


def cmd_train_codec(args):
    """Config: {"dataset": source, "codec": {CodecConfig}, "lambda_index": 0, "output": "model.fcb"}."""
    from ..codec import CodecConfig, train_codec

    conf = _read_json(args.config)
    base = os.path.dirname(os.path.abspath(args.config))
    if "dataset" not in conf:
        raise UsageError("train-codec config needs 'dataset'")
    cfg = CodecConfig.from_dict(conf.get("codec", {}))
    out = args.out or conf.get("output", "codec.fcb")
    out = out if os.path.isabs(out) else os.path.join(base, out)
    ds = _dataset_from(conf["dataset"], base)
    model = train_codec(ds, cfg, int(conf.get("lambda_index", 0)))
    model.save(out)
    last = model.log[-1]
    print(f"trained {len(model.log)} epochs (best {model.best_epoch}); final loss {last['loss']:.5f} "
          f"bpp {last['bpp']:.4f}; wrote {out}")
    return EXIT_OK


def _rate_point(text, model):
    from ..codec import RatePoint

    text = str(text)
    if text.startswith("lambda:"):
        return RatePoint.lambda_index(int(text.split(":", 1)[1]))
    if "/" in text:
        k, K = text.split("/", 1)
        return RatePoint.progressive(int(k), int(K))
    return RatePoint.progressive(int(text), model.config.groups)


def cmd_compress(args):
    from ..codec import CodecModel, compress
    from ..dataio import read_netpbm

    model = CodecModel.load(args.model)
    rp = _rate_point(args.rate_point, model)
    img = read_netpbm(args.inp)
    bs = compress(model, img, rp)
    out = args.out or os.path.splitext(args.inp)[0] + ".fcbs"
    with open(out, "wb") as fh:
        fh.write(bs.to_bytes())
    print(f"{rp.label()}: {bs.payload_bits} payload bits, {bs.bpp():.4f} bpp -> {out}")
    return EXIT_OK


def cmd_decompress(args):
    from ..codec import CodecModel, decompress
    from ..dataio import write_netpbm

    model = CodecModel.load(args.model)
    with open(args.inp, "rb") as fh:
        data = fh.read()
    img = decompress(model, data)
    out = args.out or os.path.splitext(args.inp)[0] + ".ppm"
    write_netpbm(out, img)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_train_classifier(args):
    """Config: {"dataset": source, "category": ..., "classifier": {...}, "test_fraction": 0.2,
    "split_seed": 0, "output_dir": "..."}; writes one checkpoint per seed and train_report.json."""
    from ..dataio import split
    from ..phenoclassifier import ClassifierConfig, train_classifier_seeds

    conf = _read_json(args.config)
    base = os.path.dirname(os.path.abspath(args.config))
    for key in ("dataset", "category"):
        if key not in conf:
            raise UsageError(f"train-classifier config needs {key!r}")
    cfg = ClassifierConfig.from_dict(conf.get("classifier", {}))
    ds = _dataset_from(conf["dataset"], base)
    if conf["category"] not in ds.labels:
        raise UsageError(f"dataset has no {conf['category']!r} labels")
    train, test = split(ds, float(conf.get("test_fraction", 0.2)), int(conf.get("split_seed", 0)))
    models, report = train_classifier_seeds(train, conf["category"], cfg, test)
    out = args.out or conf.get("output_dir", "classifier")
    out = out if os.path.isabs(out) else os.path.join(base, out)
    os.makedirs(out, exist_ok=True)
    for m in models:
        m.save(os.path.join(out, f"{conf['category']}_seed{m.metadata['seed']}.fcb"))
    with open(os.path.join(out, "train_report.json"), "w") as fh:
        fh.write(report.to_json() + "\n")
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(json.dumps(report.summary(), sort_keys=True))
    return EXIT_OK


def cmd_evaluate(args):
    from .config import load_config
    from .emit import emit_report
    from .experiments import run_experiment

    cfg = load_config(args.config)
    out = args.out or cfg.resolve(cfg.output_dir)
    report = run_experiment(cfg)
    paths = emit_report(report, out, args.formats.split(","))
    print(f"wrote {len(paths)} files to {out}")
    for f in report["failures"]:
        print(f"failed cell: {f}", file=sys.stderr)
    return EXIT_FAILED if report["failures"] else EXIT_OK


def cmd_report(args):
    from .emit import emit_report, load_report

    try:
        report = load_report(args.inp)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read report {args.inp}: {exc}") from None
    out = args.out or os.path.dirname(os.path.abspath(args.inp))
    paths = emit_report(report, out, args.formats.split(","))
    print(f"wrote {len(paths)} files to {out}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="faircodec", description="Bias evaluation of learned image codecs.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="render a synthetic labeled dataset")
    s.add_argument("--spec", help="SynthSpec JSON (default: the skewed four-group spec)")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True, help="output dataset directory")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train-codec", help="train one codec")
    s.add_argument("--config", required=True)
    s.add_argument("--out", help="checkpoint path (overrides the config)")
    s.set_defaults(func=cmd_train_codec)

    for name, fn in (("compress", cmd_compress), ("decompress", cmd_decompress)):
        s = sub.add_parser(name, help=f"{name} one image")
        s.add_argument("--model", required=True)
        s.add_argument("--in", dest="inp", required=True)
        s.add_argument("--out")
        if name == "compress":
            s.add_argument("--rate-point", required=True,
                           help="k (first k of K groups), k/K, or lambda:i for a lambda-grid model")
        s.set_defaults(func=fn)

    s = sub.add_parser("train-classifier", help="train phenotype classifiers over seeds")
    s.add_argument("--config", required=True)
    s.add_argument("--out", help="output directory (overrides the config)")
    s.set_defaults(func=cmd_train_classifier)

    s = sub.add_parser("evaluate", help="run an experiment and emit its report")
    s.add_argument("--config", required=True)
    s.add_argument("--out", help="output directory (overrides the config)")
    s.add_argument("--formats", default="json,csv,svg")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("report", help="re-emit CSV/SVG from a report JSON")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--formats", default="csv,svg")
    s.add_argument("--out")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    from ..codec import CodecError, ConfigError
    from ..codec.bitstream import BitstreamError
    from ..dataio import DatasetError, ImageFormatError, SchemaError, SynthSpecError
    from ..phenoclassifier import ClassifierError
    from .config import ExperimentConfigError
    from .emit import EmitError

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    np.seterr(all="ignore")
    try:
        return args.func(args)
    except (UsageError, ExperimentConfigError, ConfigError, ClassifierError, SynthSpecError, TypeError) as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DatasetError, ImageFormatError, SchemaError, CodecError, BitstreamError, EmitError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
