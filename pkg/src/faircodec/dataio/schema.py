from __future__ import annotations

import json
from dataclasses import dataclass

CATEGORIES = ("skin_type", "eye_type", "hair_type", "hair_color", "lip_type", "nose_type")
GROUPS = ("African", "Asian", "Caucasian", "Indian")
OTHER = "other"

DEFAULT_LABELS = {
    "skin_type": ("1", "2", "3", "4", "5", "6"),
    "eye_type": ("monolid", "non-monolid"),
    "hair_type": ("bald", "curly", "straight", "wavy"),
    "hair_color": ("black", "blonde", "brown", "grey", "red"),
    "lip_type": ("full", "small"),
    "nose_type": ("narrow", "wide"),
}


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class LabelSchema:
    groups: tuple
    categories: dict

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(self.groups))
        object.__setattr__(self, "categories", {k: tuple(v) for k, v in self.categories.items()})
        for cat, labels in self.categories.items():
            if not labels:
                raise SchemaError(f"category {cat!r} has no labels")

    @classmethod
    def default(cls):
        return cls(GROUPS, dict(DEFAULT_LABELS))

    def labels(self, category):
        try:
            return self.categories[category]
        except KeyError:
            raise SchemaError(f"category {category!r} not in schema") from None

    def validate(self, group, labels, where=""):
        if group not in self.groups:
            raise SchemaError(f"{where}unknown group {group!r}")
        for cat, lab in labels.items():
            if lab not in self.labels(cat) and lab != OTHER:
                raise SchemaError(f"{where}unknown {cat} label {lab!r}")

    def to_dict(self):
        return {"groups": list(self.groups), "categories": {k: list(v) for k, v in self.categories.items()}}

    @classmethod
    def from_dict(cls, d):
        return cls(d["groups"], d["categories"])

    def dumps(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)
