"""Acceptance criteria, each at its stated tolerance.

Run with ``pytest tests/test_acceptance.py -v``; the terminal summary lists
one PASS/FAIL line per criterion with the measured values.
"""
import itertools
import json
import time

import numpy as np
import pytest
from helpers import gradient_check

from faircodec.biasmetrics import (
    PSNR_CAP,
    PredictionRecord,
    accuracy_disparity,
    bias_general,
    frechet_distance,
    frechet_from_stats,
    psnr,
    psnr_from_mse,
    ssim,
)
from faircodec.codec import CodecConfig, RatePoint, decompress_batch, encode_latents, rate_estimate, train_codec
from faircodec.codec.model import compress_latent
from faircodec.dataio import OTHER, Dataset, SynthSpec, split, synth_generate
from faircodec.entropycoder import build_cdf, decode_symbols, encode_symbols, pack_tables
from faircodec.harness import dumps_report, parse_config, run_experiment
from faircodec.harness.cli import main
from faircodec.phenoclassifier import group_labels, retained_labels


# ---------------------------------------------------------------- 1


def test_criterion_1_gradient_correctness(note):
    t0 = time.perf_counter()
    results = [gradient_check(seed) for seed in range(5)]
    elapsed = time.perf_counter() - t0
    worst = max(r[0] for r in results)
    note(f"max rel err {worst:.2e} over 5 networks, {sum(r[1] for r in results)} kink entries skipped, "
         f"{elapsed:.1f}s")
    assert worst < 1e-4
    assert elapsed < 60


# ---------------------------------------------------------------- 2


def test_criterion_2_entropy_coder(note):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    n_tables = 12
    alphabets = rng.integers(2, 66, n_tables)
    pmfs = [rng.dirichlet(np.full(a, rng.choice([0.1, 0.5, 2.0]))) for a in alphabets]
    tables = pack_tables([build_cdf(p) for p in pmfs])
    cdfs, sizes = tables
    cum = [np.cumsum(p) for p in pmfs]

    n_streams = 100_000
    lengths = rng.integers(0, 61, n_streams)
    total = int(lengths.sum())
    idx = rng.integers(0, n_tables, total).astype(np.int32)
    u = rng.random(total)
    sym = np.empty(total, dtype=np.int64)
    for t in range(n_tables):
        m = idx == t
        sym[m] = np.minimum(np.searchsorted(cum[t], u[m], side="right"), alphabets[t] - 1)
    freq = (cdfs[idx, sym + 1].astype(np.float64) - cdfs[idx, sym]) / 2 ** 16
    info = -np.log2(freq)
    bounds = np.r_[0, np.cumsum(lengths)]

    worst_excess = -np.inf
    failures = 0
    for k in range(n_streams):
        a, b = bounds[k], bounds[k + 1]
        s, ix = sym[a:b], idx[a:b]
        payload = encode_symbols(s, tables, ix)
        out = decode_symbols(payload, tables, b - a, ix)
        if not np.array_equal(out, s):
            failures += 1
        entropy = float(info[a:b].sum())
        excess = 8 * len(payload) - (1.02 * entropy + 64)
        worst_excess = max(worst_excess, excess)
    elapsed = time.perf_counter() - t0
    note(f"{n_streams} streams, {total} symbols, {n_tables} tables; {failures} round-trip failures; "
         f"worst payload minus bound {worst_excess:.1f} bits; {elapsed:.1f}s")
    assert failures == 0
    assert worst_excess <= 0
    assert elapsed < 120


# ---------------------------------------------------------------- 3


@pytest.mark.slow
def test_criterion_3_codec_rate_sweep(note):
    t0 = time.perf_counter()
    ds = synth_generate(SynthSpec.balanced(500))
    train, test = split(ds, 0.2, seed=0)
    lambdas = [0.003, 0.01, 0.03, 0.1, 0.3]
    base = CodecConfig(epochs=8, batch_size=32, learning_rate=2e-3, patience=8, progressive_dropout=0.0)
    bpp, quality, worst_gap = [], [], -np.inf
    for i, lm in enumerate(lambdas):
        model = train_codec(train, base.replace(lmbda=lm), lambda_index=i)
        rp = RatePoint.lambda_index(i)
        zs = encode_latents(model, test.images)
        em = model.entropy_model()
        streams = [compress_latent(model, z, rp) for z in zs]
        for z, s in zip(zs, streams):
            est = rate_estimate(z, em)
            worst_gap = max(worst_gap, abs(s.payload_bits - est) - (0.02 * est + 64))
        recon = decompress_batch(model, streams)
        bpp.append(float(np.mean([s.bpp() for s in streams])))
        quality.append(float(np.mean([psnr(a, b) for a, b in zip(test.images, recon)])))
    elapsed = time.perf_counter() - t0
    note("bpp " + ", ".join(f"{v:.3f}" for v in bpp) + "; PSNR " + ", ".join(f"{v:.2f}" for v in quality)
         + f"; worst rate gap minus allowance {worst_gap:.1f} bits; {elapsed / 60:.1f} min")
    assert all(a > b for a, b in zip(bpp, bpp[1:])), "bpp must strictly decrease in lambda"
    assert all(b <= a + 0.5 for a, b in zip(quality, quality[1:])), "PSNR inversion above 0.5 dB"
    assert worst_gap <= 0
    assert elapsed < 45 * 60


# ---------------------------------------------------------------- 4


def _random_table(rng):
    groups = list("ABCDEF"[:rng.integers(2, 7)])
    recs = []
    for g in groups:
        for _ in range(rng.integers(1, 25)):
            y = str(rng.integers(0, 3))
            p = y if rng.random() < rng.random() else str(rng.integers(0, 3))
            recs.append(PredictionRecord(f"{len(recs)}", g, y, p))
    return recs


def _brute_disparity(recs):
    groups = sorted({r.group for r in recs})
    acc = {}
    for g in groups:
        hits = total = 0
        for r in recs:
            if r.group == g:
                total += 1
                hits += r.label == r.predicted
        acc[g] = (hits, total)
    # compare every pair of groups by cross-multiplication, so no division happens before the end
    best = (0, 1)
    for a, b in itertools.permutations(groups, 2):
        num = acc[a][0] * acc[b][1] - acc[b][0] * acc[a][1]
        den = acc[a][1] * acc[b][1]
        if num * best[1] > best[0] * den:
            best = (num, den)
    return best[0] / best[1]


def test_criterion_4_bias_oracle(note):
    rng = np.random.default_rng(4)
    mismatches = 0
    for _ in range(100):
        recs = _random_table(rng)
        brute = _brute_disparity(recs)
        if accuracy_disparity(recs) != brute or bias_general(recs, "error") != brute:
            mismatches += 1
        perm = rng.permutation(sorted({r.group for r in recs}))
        rename = dict(zip(sorted({r.group for r in recs}), perm))
        moved = [PredictionRecord(r.id, rename[r.group], r.label, r.predicted) for r in recs]
        assert accuracy_disparity(moved) == accuracy_disparity(recs)
    note(f"{mismatches} mismatches against enumeration over 100 tables")
    assert mismatches == 0
    for _ in range(50):
        k, n = int(rng.integers(0, 6)), int(rng.integers(6, 10))
        recs = [PredictionRecord(f"{g}{i}", g, "y", "y" if i < k * m else "n")
                for g, m in (("A", 1), ("B", 2), ("C", 3)) for i in range(n * m)]
        assert accuracy_disparity(recs) == 0.0


# ---------------------------------------------------------------- 5


def test_criterion_5_frechet(note):
    rng = np.random.default_rng(5)
    x = rng.normal(size=(500, 6))
    same = frechet_distance(x, x.copy())
    one_d = frechet_from_stats([0.0], [[1.0]], [1.0], [[4.0]])
    mu_a, mu_b = rng.normal(size=8), rng.normal(size=8)
    va, vb = rng.uniform(0.2, 3, 8), rng.uniform(0.2, 3, 8)
    closed = float(np.sum((mu_a - mu_b) ** 2) + np.sum((np.sqrt(va) - np.sqrt(vb)) ** 2))
    diag = frechet_from_stats(mu_a, np.diag(va), mu_b, np.diag(vb))
    note(f"identical {same:.1e}; 1-D {one_d:.9f}; d=8 diagonal error {abs(diag - closed):.1e}")
    assert same == pytest.approx(0.0, abs=1e-6)
    assert one_d == pytest.approx(2.0, abs=1e-6)
    assert diag == pytest.approx(closed, abs=1e-4)


# ---------------------------------------------------------------- 6


def test_criterion_6_ssim_psnr(note):
    rng = np.random.default_rng(6)
    x = rng.random((64, 64, 3))
    s = ssim(x, x)
    p = psnr(np.full((8, 8), 0.5), np.full((8, 8), 0.25))
    capped = psnr_from_mse(5e-11)
    note(f"SSIM(x,x)-1 = {s - 1:.1e}; PSNR {p:.4f} dB; cap {capped}")
    assert abs(s - 1.0) < 1e-9
    assert p == pytest.approx(12.0412, abs=1e-3)
    assert capped == PSNR_CAP and psnr(x, x) == PSNR_CAP


# ---------------------------------------------------------------- 7


def test_criterion_7_protocol_echo(tmp_path, note):
    cfg = {"kind": "blur_study", "name": "protocol",
           "dataset": {"synth": {"group_counts": {"African": 12, "Asian": 12, "Caucasian": 12, "Indian": 12},
                                 "image_size": [32, 32, 3]}},
           "categories": ["eye_type"], "sigmas": [0], "bootstrap_samples": 10, "output_dir": "out"}
    path = tmp_path / "exp.json"
    path.write_text(json.dumps(cfg))
    assert main(["evaluate", "--config", str(path), "--formats", "json"]) == 0
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    clf = report["config"]["classifier"]
    note(f"echo: {clf['optimizer']} lr {clf['learning_rate']} batch {clf['batch_size']} "
         f"max {clf['max_epochs']} patience {clf['patience']} seeds {clf['seeds']}")
    assert clf["optimizer"] == "sgd" and clf["learning_rate"] == 0.01 and clf["batch_size"] == 32
    assert clf["max_epochs"] == 50 and clf["patience"] == 5
    assert clf["seeds"] == [0, 1, 2, 3, 4] and report["config"]["seeds"] == [0, 1, 2, 3, 4]
    assert len(report["arms"][0]["cells"]) == 5


def test_criterion_7_label_grouping():
    assert retained_labels({"5": 58, "6": 39, "4": 3}, "skin_type") == {"5", "6"}
    assert retained_labels({"1": 5, "2": 95}, "skin_type") == {"1", "2"}
    assert retained_labels({"1": 49, "2": 951}, "skin_type") == {"2"}
    hair = {"black": 40, "brown": 25, "blonde": 20, "red": 10, "grey": 5}
    assert retained_labels(hair, "hair_color") == {"black", "brown", "blonde"}
    assert retained_labels({"straight": 60, "wavy": 30, "curly": 7, "bald": 3}, "hair_type") == \
        {"straight", "wavy", "curly"}
    rows = [("African", "5")] * 58 + [("African", "6")] * 39 + [("African", "4")] * 3
    ds = Dataset(np.zeros((100, 2, 2, 3)), [str(i) for i in range(100)], [g for g, _ in rows],
                 {"skin_type": [y for _, y in rows]})
    m = group_labels(ds, "skin_type")
    assert [m.map("African", y) for y in ("4", "5", "6")] == [OTHER, "5", "6"]


# ---------------------------------------------------------------- 8

TREND = {
    "kind": "rate_sweep", "name": "trend",
    "dataset": {"synth": {}},
    "codecs": [{"name": "grid", "lambdas": [0.01, 0.3],
                "config": {"epochs": 8, "batch_size": 32, "learning_rate": 0.002, "patience": 3}}],
    "categories": ["skin_type"],
    "seeds": [0, 1, 2, 3, 4], "seed_codecs": False, "bootstrap_samples": 200,
}


@pytest.mark.slow
def test_criterion_8_rate_bias_trend(note):
    t0 = time.perf_counter()
    spec = SynthSpec()
    minority = min(spec.group_counts.values()) / sum(spec.group_counts.values())
    assert minority == pytest.approx(0.10)
    report = run_experiment(parse_config(TREND))
    elapsed = time.perf_counter() - t0
    assert report["status"] == "complete", report["failures"]
    cells = report["arms"][0]["cells"]
    by_rate = {}
    for c in cells:
        by_rate.setdefault(c["rate_label"], {})[c["seed"]] = c["metrics"]["skin_type"]
    bpp = {k: v[0]["mean_bpp"] for k, v in by_rate.items()}
    low, high = by_rate[min(bpp, key=bpp.get)], by_rate[max(bpp, key=bpp.get)]
    rising = sum(low[s]["bias"] > high[s]["bias"] for s in TREND["seeds"])
    disparity = max(max(m["per_group_psnr"].values()) - min(m["per_group_psnr"].values())
                    for seeds in by_rate.values() for m in seeds.values())
    note("bias low/high per seed " + ", ".join(f"{low[s]['bias']:.3f}/{high[s]['bias']:.3f}"
                                               for s in TREND["seeds"])
         + f"; {rising}/5 seeds rising; max per-group PSNR disparity {disparity:.2f} dB; {elapsed / 60:.1f} min")
    assert rising >= 4
    assert disparity < 1.0
    assert elapsed < 60 * 60


# ---------------------------------------------------------------- 9


@pytest.mark.slow
def test_criterion_9_blur_ablation(note):
    cfg = parse_config({"kind": "blur_study", "name": "blur",
                        "dataset": {"synth": SynthSpec.balanced(250).to_dict()},
                        "categories": ["skin_type"], "sigmas": [0, 2], "bootstrap_samples": 100})
    report = run_experiment(cfg)
    assert report["status"] == "complete", report["failures"]
    rows = {r["sigma"]: r for r in report["arms"][0]["curves"]["blur_accuracy"]["skin_type"]}
    valid = all(c["flip_rows_valid"] for c in report["arms"][0]["cells"])
    worst_row = max(abs(sum(row) - 1.0) for c in report["arms"][0]["cells"] for b in c["flip"]["blocks"]
                    for row, cnt in zip(b["fractions"], b["counts"]) if sum(cnt) > 0)
    note(f"mean accuracy sigma=0 {rows[0.0]['accuracy']:.3f}, sigma=2 {rows[2.0]['accuracy']:.3f} over "
         f"{rows[0.0]['seeds']} seeds; worst flip row sum error {worst_row:.1e}")
    assert rows[0.0]["seeds"] == 5
    assert rows[2.0]["accuracy"] <= rows[0.0]["accuracy"]
    assert valid and worst_row < 1e-6


# ---------------------------------------------------------------- 10

SMALL = {"synth": {"group_counts": {"African": 16, "Asian": 16, "Caucasian": 16, "Indian": 16},
                   "image_size": [32, 32, 3], "seed": 7}}
SMALL_CODEC = {"input_size": [32, 32, 3], "latent_channels": 8, "hidden_channels": 8, "downsampling": 4,
               "groups": 4, "epochs": 1, "batch_size": 16, "learning_rate": 0.002}


@pytest.mark.parametrize("kind", ["rate_sweep", "blur_study", "balanced_comparison"])
def test_criterion_10_determinism(kind, tmp_path, note):
    cfg = {"kind": kind, "name": "det", "dataset": SMALL, "categories": ["skin_type", "eye_type"],
           "classifier": {"channels": [4, 8, 8], "embedding_dim": 8, "max_epochs": 2}, "seeds": [0, 1],
           "sigmas": [0, 1], "bootstrap_samples": 30}
    if kind != "blur_study":
        cfg["codecs"] = [{"name": "p", "config": SMALL_CODEC, "rate_points": [1, 4]}]
    path = tmp_path / "exp.json"
    path.write_text(json.dumps(cfg))
    outs = []
    for run in ("a", "b"):
        assert main(["evaluate", "--config", str(path), "--out", str(tmp_path / run), "--formats", "json"]) == 0
        outs.append((tmp_path / run / "report.json").read_bytes())
    note(f"{kind}: {len(outs[0])} bytes, identical={outs[0] == outs[1]}")
    assert outs[0] == outs[1]
    assert dumps_report(json.loads(outs[0])).encode() == outs[0]
