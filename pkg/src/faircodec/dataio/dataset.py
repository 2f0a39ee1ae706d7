from __future__ import annotations

import csv
import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .netpbm import ImageFormatError, read_netpbm, write_netpbm
from .schema import CATEGORIES, LabelSchema, SchemaError

PROVENANCES = ("real", "synthetic", "reconstructed")
MANIFEST_COLUMNS = ("path",) + ("group",) + CATEGORIES


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class ManifestRecord:
    path: str
    group: str
    labels: dict


@dataclass(eq=False)
class Dataset:
    """Images with a protected group and per-category phenotype labels.

    ``images`` is (N, H, W, C) float32 in [0, 1]; ``groups`` and each
    ``labels[category]`` are length-N arrays of strings.
    """

    images: np.ndarray
    ids: tuple
    groups: np.ndarray
    labels: dict
    schema: LabelSchema = field(default_factory=LabelSchema.default)
    provenance: str = "real"
    name: str = ""

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float32)
        if self.images.ndim != 4:
            raise DatasetError("images must be (N, H, W, C)")
        n = len(self.images)
        self.ids = tuple(self.ids)
        self.groups = np.asarray(self.groups, dtype=object)
        self.labels = {k: np.asarray(v, dtype=object) for k, v in self.labels.items()}
        if len(self.ids) != n or len(self.groups) != n or any(len(v) != n for v in self.labels.values()):
            raise DatasetError("ids, groups and labels must match the image count")
        if len(set(self.ids)) != n:
            raise DatasetError("record ids must be unique")
        if self.provenance not in PROVENANCES:
            raise DatasetError(f"unknown provenance {self.provenance!r}")
        self.images.setflags(write=False)

    def __len__(self):
        return len(self.images)

    @property
    def image_size(self):
        return tuple(self.images.shape[1:])

    def label_array(self, category):
        try:
            return self.labels[category]
        except KeyError:
            raise SchemaError(f"dataset has no labels for category {category!r}") from None

    def subset(self, index, name=None):
        index = np.asarray(index)
        index = np.flatnonzero(index) if index.dtype == bool else index.astype(np.int64, copy=False)
        return Dataset(self.images[index], [self.ids[i] for i in index], self.groups[index],
                       {k: v[index] for k, v in self.labels.items()}, self.schema, self.provenance,
                       self.name if name is None else name)

    def with_images(self, images, provenance=None, name=None):
        return Dataset(images, self.ids, self.groups, self.labels, self.schema,
                       provenance or self.provenance, self.name if name is None else name)

    def with_labels(self, category, values):
        labels = dict(self.labels)
        labels[category] = np.asarray(values, dtype=object)
        return Dataset(self.images, self.ids, self.groups, labels, self.schema, self.provenance, self.name)

    def group_counts(self):
        return {g: int(np.sum(self.groups == g)) for g in self.schema.groups}

    def fingerprint(self):
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.images).tobytes())
        h.update(json.dumps([list(self.ids), list(self.groups),
                             {k: list(v) for k, v in sorted(self.labels.items())}]).encode())
        return h.hexdigest()[:16]


# ---------------------------------------------------------------- manifests


def save_dataset(dataset, directory):
    """Write ``images/``, ``manifest.csv`` and ``schema.json`` under ``directory``."""
    img_dir = os.path.join(directory, "images")
    os.makedirs(img_dir, exist_ok=True)
    ext = ".ppm" if dataset.image_size[2] == 3 else ".pgm"
    cats = [c for c in CATEGORIES if c in dataset.labels]
    with open(os.path.join(directory, "manifest.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "path", "group"] + cats)
        for i, rid in enumerate(dataset.ids):
            rel = f"images/{rid}{ext}"
            write_netpbm(os.path.join(directory, rel), dataset.images[i])
            w.writerow([rid, rel, dataset.groups[i]] + [dataset.labels[c][i] for c in cats])
    with open(os.path.join(directory, "schema.json"), "w") as fh:
        fh.write(dataset.schema.dumps())
    return os.path.join(directory, "manifest.csv")


def read_manifest(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in ("path", "group") if c not in (reader.fieldnames or [])]
        if missing:
            raise DatasetError(f"manifest {path} lacks columns {missing}")
        cats = [c for c in reader.fieldnames if c in CATEGORIES]
        rows = []
        for row in reader:
            rows.append((row.get("id"), ManifestRecord(row["path"], row["group"], {c: row[c] for c in cats})))
    return rows


def load_dataset(manifest_path, provenance="real"):
    """Load a manifest CSV with its PGM/PPM images.

    Labels are checked against ``schema.json`` beside the manifest when it
    exists; otherwise the schema is inferred from the labels present.
    """
    base = os.path.dirname(os.path.abspath(manifest_path))
    rows = read_manifest(manifest_path)
    schema_path = os.path.join(base, "schema.json")
    schema = None
    if os.path.exists(schema_path):
        with open(schema_path) as fh:
            schema = LabelSchema.from_dict(json.load(fh))
    images, ids, groups = [], [], []
    cats = sorted({c for _, r in rows for c in r.labels}, key=CATEGORIES.index)
    labels = {c: [] for c in cats}
    for line, (rid, rec) in enumerate(rows, start=2):
        where = f"record {rid or rec.path} (line {line}): "
        full = rec.path if os.path.isabs(rec.path) else os.path.join(base, rec.path)
        if not os.path.exists(full):
            raise DatasetError(f"{where}missing image file {rec.path}")
        try:
            img = read_netpbm(full)
        except ImageFormatError as exc:
            raise DatasetError(f"{where}malformed image {rec.path}: {exc}") from None
        if images and img.shape != images[0].shape:
            raise DatasetError(f"{where}image size {img.shape} differs from {images[0].shape}")
        if schema is not None:
            try:
                schema.validate(rec.group, rec.labels, where)
            except SchemaError as exc:
                raise DatasetError(str(exc)) from None
        images.append(img)
        ids.append(rid or os.path.splitext(os.path.basename(rec.path))[0])
        groups.append(rec.group)
        for c in cats:
            labels[c].append(rec.labels[c])
    if schema is None:
        schema = LabelSchema(sorted(set(groups)), {c: sorted(set(v)) for c, v in labels.items()})
    if not images:
        raise DatasetError(f"manifest {manifest_path} has no records")
    return Dataset(np.stack(images), ids, groups, labels, schema, provenance,
                   os.path.basename(base))


# ---------------------------------------------------------------- splitting


def _unit_hash(key, rid):
    digest = hashlib.blake2b(str(rid).encode(), key=key, digest_size=8).digest()
    return int.from_bytes(digest, "little") / 2.0 ** 64


def split(dataset, test_fraction, seed=0, salt=""):
    """Deterministic (train, test) split by keyed hash of record id.

    ``salt`` separates nested splits: a split taken from the train side of
    another split with the same seed and no salt would be degenerate.
    """
    if not 0 < test_fraction < 1:
        raise DatasetError("test fraction must lie in (0, 1)")
    key = int(seed).to_bytes(8, "little", signed=True) + salt.encode()[:56]
    is_test = np.array([_unit_hash(key, rid) < test_fraction for rid in dataset.ids], dtype=bool)
    return dataset.subset(~is_test), dataset.subset(is_test)


def rebalance(dataset, target, seed=0):
    """Subsample without replacement to per-group ``target`` counts.

    ``target`` maps group -> count, or group -> fraction (values summing to
    1), in which case the largest achievable total is used.
    """
    counts = dataset.group_counts()
    target = {g: v for g, v in target.items() if v > 0}
    if abs(sum(target.values()) - 1.0) < 1e-9 and all(v <= 1 for v in target.values()):
        total = min(counts.get(g, 0) / f for g, f in target.items())
        want = {g: int(np.floor(total * f + 1e-9)) for g, f in target.items()}
    else:
        want = {g: int(v) for g, v in target.items()}
    deficit = {g: want[g] - counts.get(g, 0) for g in want if want[g] > counts.get(g, 0)}
    if deficit:
        raise DatasetError(f"target not achievable by subsampling; deficit per group: {deficit}")
    gen = np.random.default_rng(np.random.Philox(key=int(seed) & 0xFFFFFFFFFFFFFFFF))
    keep = []
    for g in dataset.schema.groups:
        if g not in want:
            continue
        idx = np.flatnonzero(dataset.groups == g)
        keep.extend(np.sort(gen.choice(idx, size=want[g], replace=False)).tolist())
    return dataset.subset(np.sort(np.array(keep, dtype=np.int64)))


def filter_subset(dataset, predicate):
    """Records for which ``predicate(group, labels)`` is true."""
    cats = list(dataset.labels)
    keep = [i for i in range(len(dataset))
            if predicate(dataset.groups[i], {c: dataset.labels[c][i] for c in cats})]
    return dataset.subset(np.array(keep, dtype=np.int64))
