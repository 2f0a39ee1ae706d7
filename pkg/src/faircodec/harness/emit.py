"""Report emission: full JSON, flat CSV and SVG line plots.

Output bytes depend only on the report contents.
"""
from __future__ import annotations

import csv
import io
import json
import os
import re

FORMATS = ("json", "csv", "svg")
CSV_COLUMNS = ("arm", "codec", "rate_label", "seed", "category", "metric", "group", "value")
SCALAR_METRICS = ("bias", "psnr", "ssim", "mean_bpp", "mse_bias", "psnr_bias")
GROUP_METRICS = ("per_group_accuracy", "per_group_error", "per_group_psnr", "per_group_ssim", "per_group_bpp")


class EmitError(ValueError):
    pass


def dumps_report(report):
    return json.dumps(report, indent=2, sort_keys=True, allow_nan=False) + "\n"


# ---------------------------------------------------------------- CSV


def _fmt(v):
    return repr(float(v))


def report_scalars(report):
    """{(arm, codec, rate_label, seed, category, metric, group): value} of every scalar cell metric."""
    out = {}
    for arm in report["arms"]:
        for cell in arm["cells"]:
            if cell.get("status") != "ok":
                continue
            codec = cell.get("codec", "")
            seed = str(cell["seed"])
            for mkey, m in cell["metrics"].items():
                label = cell.get("rate_label", f"sigma={mkey}")
                cat = m["category"]
                for name in SCALAR_METRICS:
                    if m.get(name) is not None:
                        out[(arm["name"], codec, label, seed, cat, name, "")] = float(m[name])
                if m["frechet"].get("pooled") is not None:
                    out[(arm["name"], codec, label, seed, cat, "frechet", "")] = float(m["frechet"]["pooled"])
                for g, v in sorted(m["frechet"].get("per_group", {}).items()):
                    if v is not None:
                        out[(arm["name"], codec, label, seed, cat, "frechet", g)] = float(v)
                for name in GROUP_METRICS:
                    for g, v in sorted(m[name].items()):
                        if v is not None:
                            out[(arm["name"], codec, label, seed, cat, name, g)] = float(v)
    return out


def report_csv(report):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for key, v in sorted(report_scalars(report).items()):
        w.writerow(list(key) + [_fmt(v)])
    return buf.getvalue()


def csv_scalars(text):
    """Inverse of :func:`report_csv`."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != CSV_COLUMNS:
        raise EmitError("not a metrics CSV")
    return {tuple(r[:-1]): float(r[-1]) for r in rows[1:]}


# ---------------------------------------------------------------- SVG

WIDTH, HEIGHT = 640, 420
MARGIN = {"left": 70, "right": 170, "top": 40, "bottom": 55}
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf")


def _esc(s):
    return (str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;"))


def _range(vals):
    lo, hi = min(vals), max(vals)
    if hi - lo < 1e-12:
        pad = max(abs(lo) * 0.05, 1e-3)
    else:
        pad = (hi - lo) * 0.05
    return lo - pad, hi + pad


def svg_plot(title, xlabel, ylabel, series, scatter=False):
    """Render {name: [(x, y), ...]} as a line (or scatter) plot.

    Every point lands inside the plot area: the axis ranges are padded
    bounds of the data. The ranges are stored on the root element as
    ``data-x-range`` / ``data-y-range``.
    """
    pts = [(x, y) for s in series.values() for x, y in s if x is not None and y is not None]
    if not pts:
        raise EmitError(f"plot {title!r} has no points")
    x0, x1 = _range([p[0] for p in pts])
    y0, y1 = _range([p[1] for p in pts])
    L, T = MARGIN["left"], MARGIN["top"]
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def sx(x):
        return L + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return T + ph - (y - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" data-x-range="{x0:.6g} {x1:.6g}" data-y-range="{y0:.6g} {y1:.6g}" '
           f'data-plot-area="{L} {T} {pw} {ph}">',
           f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<text x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" font-family="sans-serif" '
           f'font-size="15">{_esc(title)}</text>',
           f'<rect x="{L}" y="{T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for i in range(5):
        xv = x0 + (x1 - x0) * i / 4
        yv = y0 + (y1 - y0) * i / 4
        out.append(f'<line x1="{sx(xv):.2f}" y1="{T + ph}" x2="{sx(xv):.2f}" y2="{T + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{sx(xv):.2f}" y="{T + ph + 18}" text-anchor="middle" font-family="sans-serif" '
                   f'font-size="11">{xv:.3g}</text>')
        out.append(f'<line x1="{L - 5}" y1="{sy(yv):.2f}" x2="{L}" y2="{sy(yv):.2f}" stroke="black"/>')
        out.append(f'<text x="{L - 8}" y="{sy(yv) + 4:.2f}" text-anchor="end" font-family="sans-serif" '
                   f'font-size="11">{yv:.3g}</text>')
    out.append(f'<text x="{L + pw / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle" font-family="sans-serif" '
               f'font-size="13">{_esc(xlabel)}</text>')
    out.append(f'<text x="16" y="{T + ph / 2:.1f}" text-anchor="middle" font-family="sans-serif" font-size="13" '
               f'transform="rotate(-90 16 {T + ph / 2:.1f})">{_esc(ylabel)}</text>')
    for k, (name, s) in enumerate(series.items()):
        color = PALETTE[k % len(PALETTE)]
        s = [(x, y) for x, y in s if x is not None and y is not None]
        if not scatter and len(s) > 1:
            path = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in sorted(s))
            out.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        for x, y in s:
            out.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="3" fill="{color}" '
                       f'data-x="{x!r}" data-y="{y!r}"><title>{_esc(name)}</title></circle>')
        ly = T + 14 + 18 * k
        out.append(f'<rect x="{L + pw + 14}" y="{ly - 9}" width="10" height="10" fill="{color}"/>')
        out.append(f'<text x="{L + pw + 30}" y="{ly}" font-family="sans-serif" font-size="12">{_esc(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _slug(s):
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", str(s)).strip("_")


def report_plots(report):
    """{filename: svg text} for every figure the report supports."""
    plots = {}
    for arm in report["arms"]:
        curves = arm.get("curves", {})
        prefix = _slug(arm["name"])
        for codec, cats in curves.get("rate_bias", {}).items():
            series = {cat: [(p["bpp"], p["bias"]) for p in pts] for cat, pts in cats.items()}
            plots[f"{prefix}_rate_bias_{_slug(codec)}.svg"] = svg_plot(
                f"{arm['name']} / {codec}: bias vs rate", "bits per pixel", "accuracy disparity", series)
            for cat, pts in cats.items():
                groups = sorted(pts[0]["per_group_accuracy"]) if pts else []
                series = {g: [(p["bpp"], p["per_group_accuracy"][g]) for p in pts] for g in groups}
                plots[f"{prefix}_rate_accuracy_{_slug(codec)}_{_slug(cat)}.svg"] = svg_plot(
                    f"{arm['name']} / {codec} / {cat}: accuracy vs rate", "bits per pixel", "accuracy", series)
        for codec, pts in curves.get("rate_distortion", {}).items():
            groups = sorted(pts[0]["per_group_psnr"]) if pts else []
            for metric in ("psnr", "ssim"):
                series = {g: [(p["bpp"], p[f"per_group_{metric}"][g]) for p in pts] for g in groups}
                series["all"] = [(p["bpp"], p[metric]) for p in pts]
                plots[f"{prefix}_rate_{metric}_{_slug(codec)}.svg"] = svg_plot(
                    f"{arm['name']} / {codec}: {metric.upper()} vs rate", "bits per pixel",
                    "PSNR (dB)" if metric == "psnr" else "SSIM", series)
        pairs = [p for p in curves.get("bias_frechet", []) if p["frechet"] is not None]
        if pairs:
            series = {}
            for p in pairs:
                series.setdefault(f"{p['codec']} / {p['category']}", []).append((p["frechet"], p["bias"]))
            plots[f"{prefix}_frechet_bias.svg"] = svg_plot(
                f"{arm['name']}: bias vs Fréchet distance", "Fréchet distance", "accuracy disparity", series,
                scatter=True)
        for cat, rows in curves.get("blur_accuracy", {}).items():
            groups = sorted(rows[0]["per_group_accuracy"]) if rows else []
            series = {g: [(r["sigma"], r["per_group_accuracy"][g]) for r in rows] for g in groups}
            series["all"] = [(r["sigma"], r["accuracy"]) for r in rows]
            plots[f"{prefix}_blur_accuracy_{_slug(cat)}.svg"] = svg_plot(
                f"{cat}: accuracy vs blur", "Gaussian sigma (pixels)", "accuracy", series)
    return plots


def flip_csvs(report):
    out = {}
    for arm in report["arms"]:
        for cell in arm["cells"]:
            if cell.get("status") == "ok" and "flip" in cell:
                buf = io.StringIO()
                w = csv.writer(buf, lineterminator="\n")
                w.writerow(["group", "sigma", "true_label", "predicted_label", "fraction"])
                labels = cell["flip"]["labels"]
                for b in cell["flip"]["blocks"]:
                    for i, a in enumerate(labels):
                        if sum(b["counts"][i]) == 0:
                            continue
                        for j, p in enumerate(labels):
                            w.writerow([b["group"], _fmt(b["sigma"]), a, p, _fmt(b["fractions"][i][j])])
                out[f"flip_{_slug(cell['category'])}_seed{cell['seed']}.csv"] = buf.getvalue()
    return out


# ---------------------------------------------------------------- emission


def emit_report(report, out_dir, formats=FORMATS):
    """Write the requested formats under ``out_dir``; returns the written paths."""
    formats = [f.strip() for f in formats if f.strip()]
    bad = [f for f in formats if f not in FORMATS]
    if bad:
        raise EmitError(f"unknown formats {bad}; choose from {FORMATS}")
    if not report.get("config", {}).get("categories"):
        raise EmitError("report has no categories")
    files = {}
    if "json" in formats:
        files["report.json"] = dumps_report(report)
    if "csv" in formats:
        files["metrics.csv"] = report_csv(report)
        files.update(flip_csvs(report))
    if "svg" in formats:
        files.update(report_plots(report))
    try:
        os.makedirs(out_dir, exist_ok=True)
        written = []
        for name in sorted(files):
            path = os.path.join(out_dir, name)
            with open(path, "w", newline="") as fh:
                fh.write(files[name])
            written.append(path)
    except OSError as exc:
        raise EmitError(f"cannot write to {out_dir}: {exc}") from None
    return written


def load_report(path):
    with open(path) as fh:
        return json.load(fh)

