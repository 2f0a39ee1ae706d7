"""Per-group label grouping.

Rare labels carry too few examples to learn, so within each protected
group only the dominant labels are kept as classes and the rest collapse
into a shared ``"other"`` class:

* hair color and hair type: the three most frequent labels of the group
* skin type: every label making up at least 5% of the group
* binary categories: unchanged

``"other"`` never competes for a retained slot, which makes grouping an
already grouped dataset a no-op.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from ..dataio.schema import OTHER, SchemaError

TOP_K_CATEGORIES = ("hair_color", "hair_type")
THRESHOLD_CATEGORIES = ("skin_type",)
TOP_K = 3
MIN_FRACTION = 0.05


def _label_order(schema, category):
    return {lab: i for i, lab in enumerate(schema.labels(category))}


def retained_labels(counts, category, top_k=TOP_K, min_fraction=MIN_FRACTION, order=None):
    """Labels kept for one group given its label ``counts``.

    Top-k ties are broken by label order (``order`` maps label -> rank,
    defaulting to lexical order).
    """
    counts = {k: v for k, v in counts.items() if k != OTHER and v > 0}
    rank = order or {k: i for i, k in enumerate(sorted(counts))}
    if category in TOP_K_CATEGORIES:
        ranked = sorted(counts, key=lambda k: (-counts[k], rank.get(k, len(rank)), k))
        return set(ranked[:top_k])
    if category in THRESHOLD_CATEGORIES:
        total = sum(counts.values())
        # tolerance keeps a label sitting exactly on the threshold
        return {k for k, v in counts.items() if v >= min_fraction * total * (1 - 1e-12)}
    return set(counts)


@dataclass(frozen=True)
class GroupedLabelMap:
    """Per (group, category) map from original label to retained label or ``"other"``."""

    category: str
    mapping: dict
    label_space: tuple

    def map(self, group, label):
        try:
            table = self.mapping[group]
        except KeyError:
            raise SchemaError(f"group {group!r} not covered by the label map") from None
        if label == OTHER:
            return OTHER
        return table.get(label, OTHER)

    def apply(self, groups, labels):
        return np.array([self.map(g, y) for g, y in zip(groups, labels)], dtype=object)

    def indices(self, groups, labels):
        pos = {lab: i for i, lab in enumerate(self.label_space)}
        return np.array([pos[self.map(g, y)] for g, y in zip(groups, labels)], dtype=np.int64)

    def retained(self, group):
        return sorted({v for v in self.mapping[group].values() if v != OTHER})

    def to_dict(self):
        return {"category": self.category, "label_space": list(self.label_space),
                "mapping": {g: dict(sorted(m.items())) for g, m in sorted(self.mapping.items())}}

    @classmethod
    def from_dict(cls, d):
        return cls(d["category"], {g: dict(m) for g, m in d["mapping"].items()}, tuple(d["label_space"]))


def group_labels(dataset, category, schema=None, top_k=TOP_K, min_fraction=MIN_FRACTION):
    """Build the :class:`GroupedLabelMap` for ``category`` from ``dataset`` frequencies."""
    schema = schema or dataset.schema
    if category not in schema.categories:
        raise SchemaError(f"category {category!r} not in schema")
    labels = dataset.label_array(category)
    order = _label_order(schema, category)
    mapping = {}
    for g in schema.groups:
        if category in TOP_K_CATEGORIES or category in THRESHOLD_CATEGORIES:
            counts = Counter(labels[dataset.groups == g].tolist())
            keep = retained_labels(counts, category, top_k, min_fraction, order)
        else:
            keep = set(schema.labels(category))
        mapping[g] = {lab: (lab if lab in keep else OTHER) for lab in schema.labels(category)}
    used = {v for m in mapping.values() for v in m.values()}
    space = [lab for lab in schema.labels(category) if lab in used]
    if OTHER in used:
        space.append(OTHER)
    return GroupedLabelMap(category, mapping, tuple(space))


def apply_grouping(dataset, label_map):
    """Dataset with ``label_map.category`` labels replaced by grouped labels."""
    cat = label_map.category
    return dataset.with_labels(cat, label_map.apply(dataset.groups, dataset.label_array(cat)))
