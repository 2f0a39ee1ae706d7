"""Parametric face-like images with controllable phenotype labels.

Each image is a skin-tone oval on a muted background with a hair cap, two
eye glyphs, a nose bar and a lip bar. Every rendered attribute is driven by
one label:

* skin type: base intensity of the oval (band monotone in the type index)
* eye type: eye aspect ratio (monolid eyes are flat slits)
* hair type: stripe frequency of the hair cap (bald means no cap)
* hair color: hue of the hair cap
* lip type: lip bar thickness
* nose type: nose bar width

Background, eyes, nose and lips are drawn at fixed offsets from the skin
colour, and hair texture has the same gradient for every type and colour,
so no group is intrinsically harder to compress than another.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..tensorcore import RngStream
from .dataset import Dataset
from .netpbm import quantize8
from .schema import CATEGORIES, DEFAULT_LABELS, GROUPS, LabelSchema


class SynthSpecError(ValueError):
    pass


TONE_LEVELS = {"1": 0.88, "2": 0.76, "3": 0.64, "4": 0.52, "5": 0.40, "6": 0.28}
TONE_JITTER = 0.03
SKIN_RGB = np.array([1.0, 0.82, 0.70])

HAIR_RGB = {
    "black": (0.08, 0.07, 0.06),
    "brown": (0.40, 0.25, 0.12),
    "blonde": (0.85, 0.72, 0.40),
    "grey": (0.62, 0.62, 0.62),
    "red": (0.66, 0.24, 0.10),
}
# stripe period in pixels; curly is the finest texture
HAIR_PERIOD = {"straight": 8.0, "wavy": 5.0, "curly": 2.5}
HAIR_TEXTURE = 0.02
BG_CONTRAST = 0.25
BG_PIVOT = 0.58
BG_TINT = np.array([0.8, 1.0, 1.2])
# features are drawn at a fixed offset from the skin colour so that their
# contrast, and hence the distortion a codec leaves, does not depend on tone
EYE_OFFSET = np.array([-0.26, -0.24, -0.22])
NOSE_OFFSET = np.array([-0.08, -0.07, -0.06])
LIP_OFFSET = np.array([0.10, -0.14, -0.08])

SKEWED_COUNTS = {"African": 200, "Asian": 600, "Caucasian": 600, "Indian": 600}

SKEWED_DISTRIBUTIONS = {
    "African": {
        "skin_type": {"5": 0.58, "6": 0.39, "4": 0.03},
        "eye_type": {"monolid": 0.1, "non-monolid": 0.9},
        "hair_type": {"curly": 0.7, "wavy": 0.1, "straight": 0.05, "bald": 0.15},
        "hair_color": {"black": 0.8, "brown": 0.12, "grey": 0.08},
        "lip_type": {"full": 0.75, "small": 0.25},
        "nose_type": {"wide": 0.7, "narrow": 0.3},
    },
    "Asian": {
        "skin_type": {"3": 0.5, "4": 0.45, "2": 0.05},
        "eye_type": {"monolid": 0.7, "non-monolid": 0.3},
        "hair_type": {"straight": 0.8, "wavy": 0.1, "curly": 0.05, "bald": 0.05},
        "hair_color": {"black": 0.85, "brown": 0.1, "grey": 0.05},
        "lip_type": {"full": 0.3, "small": 0.7},
        "nose_type": {"wide": 0.4, "narrow": 0.6},
    },
    "Caucasian": {
        "skin_type": {"2": 0.45, "3": 0.4, "1": 0.1, "4": 0.05},
        "eye_type": {"monolid": 0.1, "non-monolid": 0.9},
        "hair_type": {"straight": 0.45, "wavy": 0.35, "curly": 0.1, "bald": 0.1},
        "hair_color": {"brown": 0.4, "blonde": 0.3, "black": 0.15, "grey": 0.08, "red": 0.07},
        "lip_type": {"full": 0.2, "small": 0.8},
        "nose_type": {"wide": 0.2, "narrow": 0.8},
    },
    "Indian": {
        "skin_type": {"3": 0.4, "4": 0.55, "2": 0.05},
        "eye_type": {"monolid": 0.1, "non-monolid": 0.9},
        "hair_type": {"straight": 0.5, "wavy": 0.35, "curly": 0.1, "bald": 0.05},
        "hair_color": {"black": 0.75, "brown": 0.2, "grey": 0.05},
        "lip_type": {"full": 0.4, "small": 0.6},
        "nose_type": {"wide": 0.4, "narrow": 0.6},
    },
}


@dataclass(frozen=True)
class SynthSpec:
    group_counts: dict = field(default_factory=lambda: dict(SKEWED_COUNTS))
    distributions: dict = field(default_factory=lambda: json.loads(json.dumps(SKEWED_DISTRIBUTIONS)))
    image_size: tuple = (64, 64, 3)
    noise: float = 0.04
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "image_size", tuple(self.image_size))
        h, w, c = self.image_size
        if c != 3 or h < 16 or w < 16:
            raise SynthSpecError(f"unsupported image size {self.image_size}; need (H>=16, W>=16, 3)")
        if self.noise < 0:
            raise SynthSpecError("noise level must be non-negative")
        for g, n in self.group_counts.items():
            if g not in self.distributions:
                raise SynthSpecError(f"group {g!r} has no phenotype distributions")
            if n < 0:
                raise SynthSpecError(f"negative count for group {g!r}")
            for cat in CATEGORIES:
                dist = self.distributions[g].get(cat)
                if not dist:
                    raise SynthSpecError(f"group {g!r} lacks a {cat} distribution")
                unknown = set(dist) - set(DEFAULT_LABELS[cat])
                if unknown:
                    raise SynthSpecError(f"group {g!r}: unknown {cat} labels {sorted(unknown)}")
                if abs(sum(dist.values()) - 1.0) > 1e-6 or min(dist.values()) < 0:
                    raise SynthSpecError(f"group {g!r}: {cat} distribution does not sum to 1")

    @classmethod
    def balanced(cls, per_group=500, **kw):
        return cls(group_counts={g: per_group for g in GROUPS}, **kw)

    def to_dict(self):
        return {"group_counts": dict(self.group_counts), "distributions": self.distributions,
                "image_size": list(self.image_size), "noise": self.noise, "seed": self.seed}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "image_size" in d:
            d["image_size"] = tuple(d["image_size"])
        return cls(**d)


def _ellipse(yy, xx, cy, cx, ry, rx, soft=0.8):
    """Anti-aliased ellipse coverage in [0, 1]."""
    d = np.sqrt(((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2)
    edge = soft / max(min(ry, rx), 1e-6)
    return np.clip((1.0 - d) / edge + 0.5, 0.0, 1.0)


def _paint(img, mask, rgb):
    img *= 1.0 - mask[..., None]
    img += mask[..., None] * np.asarray(rgb)


def render_face(labels, gen, size=(64, 64)):
    """Render one noiseless float64 (H, W, 3) face for ``labels``."""
    h, w = size
    s = np.array([h, w], dtype=float) / 64.0
    yy, xx = np.mgrid[0:h, 0:w].astype(float) + 0.5
    img = np.empty((h, w, 3))
    contrast = BG_CONTRAST * gen.uniform(0.8, 1.2)
    cy = (36 + gen.uniform(-1.5, 1.5)) * s[0]
    cx = (32 + gen.uniform(-1.5, 1.5)) * s[1]
    ry, rx = 23 * s[0] * gen.uniform(0.95, 1.05), 19 * s[1] * gen.uniform(0.95, 1.05)

    tone = TONE_LEVELS[labels["skin_type"]] + gen.uniform(-TONE_JITTER, TONE_JITTER)
    skin = tone * SKIN_RGB
    # the background sits a fixed step away from the skin, darker behind light faces
    side = -1.0 if tone >= BG_PIVOT else 1.0
    img[:] = np.clip(skin + side * contrast * BG_TINT, 0.0, 1.0)
    _paint(img, _ellipse(yy, xx, cy, cx, ry, rx), skin)

    if labels["hair_type"] != "bald":
        cap = _ellipse(yy, xx, cy - 4 * s[0], cx, ry + 3 * s[0], rx + 3 * s[1])
        cap = cap * np.clip((cy - 0.45 * ry - yy) / 1.5 + 0.5, 0.0, 1.0)
        period = HAIR_PERIOD[labels["hair_type"]] * s[1]
        phase = gen.uniform(0, 2 * np.pi)
        if labels["hair_type"] == "wavy":
            arg = xx + 1.5 * np.sin(yy * 2 * np.pi / 6.0)
        elif labels["hair_type"] == "curly":
            arg = xx + yy
        else:
            arg = xx
        # amplitude proportional to the period keeps the stripe gradient, and so
        # the coding cost, the same for every hair type and colour
        texture = HAIR_TEXTURE * period * np.sin(2 * np.pi * arg / period + phase)
        hair = np.clip(np.asarray(HAIR_RGB[labels["hair_color"]]) + texture[..., None], 0.0, 1.0)
        img *= 1.0 - cap[..., None]
        img += cap[..., None] * hair

    ey = cy - 0.1 * ry
    if labels["eye_type"] == "monolid":
        ery, erx = 1.1 * s[0], 4.5 * s[1]
    else:
        ery, erx = 2.6 * s[0], 3.6 * s[1]
    for side in (-1, 1):
        _paint(img, _ellipse(yy, xx, ey, cx + side * 0.42 * rx, ery, erx), np.clip(skin + EYE_OFFSET, 0.0, 1.0))

    nose_w = (3.2 if labels["nose_type"] == "wide" else 1.3) * s[1]
    nose = _ellipse(yy, xx, cy + 0.22 * ry, cx, 4.5 * s[0], nose_w)
    _paint(img, nose, np.clip(skin + NOSE_OFFSET, 0.0, 1.0))

    lip_h = (2.6 if labels["lip_type"] == "full" else 1.0) * s[0]
    lips = _ellipse(yy, xx, cy + 0.55 * ry, cx, lip_h, 6.5 * s[1])
    _paint(img, lips, np.clip(skin + LIP_OFFSET, 0.0, 1.0))
    return img


def synth_generate(spec: SynthSpec | None = None):
    """Sample labels from ``spec`` and render a synthetic :class:`Dataset`."""
    spec = spec or SynthSpec()
    root = RngStream(spec.seed).child("synth")
    h, w, _ = spec.image_size
    images, ids, groups = [], [], []
    labels = {c: [] for c in CATEGORIES}
    i = 0
    for g in sorted(spec.group_counts, key=lambda g: (GROUPS.index(g) if g in GROUPS else len(GROUPS), g)):
        for _ in range(spec.group_counts[g]):
            gen = root.child(f"record-{i}").generator()
            lab = {}
            for cat in CATEGORIES:
                dist = spec.distributions[g][cat]
                keys = sorted(dist)
                p = np.array([dist[k] for k in keys], dtype=float)
                lab[cat] = keys[int(gen.choice(len(keys), p=p / p.sum()))]
            img = render_face(lab, gen, (h, w))
            if spec.noise > 0:
                img = img + gen.normal(0.0, spec.noise, size=img.shape)
            images.append(quantize8(np.clip(img, 0.0, 1.0)))
            ids.append(f"synth-{spec.seed}-{i:05d}")
            groups.append(g)
            for cat in CATEGORIES:
                labels[cat].append(lab[cat])
            i += 1
    if images:
        stack = np.stack(images)
    else:
        stack = np.zeros((0, h, w, 3), dtype=np.float32)
    schema = LabelSchema(tuple(g for g in GROUPS if g in spec.group_counts)
                         + tuple(sorted(g for g in spec.group_counts if g not in GROUPS)),
                         dict(DEFAULT_LABELS))
    return Dataset(stack, ids, groups, labels, schema, "synthetic", f"synth-{spec.seed}")
