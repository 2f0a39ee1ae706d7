from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

from ..codec import CodecError, compress_batch, decompress_batch
from ..codec.bitstream import BitstreamError
from .dataset import Dataset, DatasetError, load_dataset, save_dataset


@dataclass(eq=False)
class ReconstructionSet:
    """Decoded images of a source dataset at one rate point, labels copied verbatim."""

    dataset: Dataset
    source_id: str
    model_hash: str
    rate_point: object
    bpp: np.ndarray

    def __post_init__(self):
        self.bpp = np.asarray(self.bpp, dtype=np.float64)
        if len(self.bpp) != len(self.dataset):
            raise DatasetError("one bpp value per reconstruction is required")

    def __len__(self):
        return len(self.dataset)

    @property
    def mean_bpp(self):
        return float(np.mean(self.bpp))

    def save(self, directory):
        save_dataset(self.dataset, directory)
        with open(os.path.join(directory, "bpp.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["id", "bpp"])
            for rid, b in zip(self.dataset.ids, self.bpp):
                w.writerow([rid, repr(float(b))])
            # provenance rides along as trailing comment rows
            w.writerow(["#source", self.source_id])
            w.writerow(["#model", self.model_hash])
            w.writerow(["#rate_point", self.rate_point.label() if hasattr(self.rate_point, "label")
                        else str(self.rate_point)])

    @classmethod
    def load(cls, directory):
        ds = load_dataset(os.path.join(directory, "manifest.csv"), provenance="reconstructed")
        bpp, meta = {}, {}
        with open(os.path.join(directory, "bpp.csv"), newline="") as fh:
            for row in csv.reader(fh):
                if row[0] == "id":
                    continue
                if row[0].startswith("#"):
                    meta[row[0][1:]] = row[1]
                else:
                    bpp[row[0]] = float(row[1])
        return cls(ds, meta.get("source", ""), meta.get("model", ""), meta.get("rate_point", ""),
                   [bpp[i] for i in ds.ids])


def reconstruct_dataset(model, dataset, rate_point, batch=64):
    """Compress and decompress every example of ``dataset`` at ``rate_point``."""
    if dataset.image_size != model.config.input_size:
        raise CodecError(f"dataset images {dataset.image_size} do not match codec input "
                         f"{model.config.input_size}")
    outs, bpps = [], []
    for start in range(0, len(dataset), batch):
        xs = dataset.images[start:start + batch]
        try:
            streams = compress_batch(model, xs, rate_point)
            outs.append(decompress_batch(model, streams))
        except (CodecError, BitstreamError) as exc:
            ids = dataset.ids[start:start + batch]
            raise CodecError(f"records {ids[0]}..{ids[-1]}: {exc}") from exc
        bpps.extend(s.bpp() for s in streams)
    images = np.concatenate(outs) if outs else np.zeros((0,) + dataset.image_size, np.float32)
    rec = dataset.with_images(images, provenance="reconstructed",
                              name=f"{dataset.name}@{rate_point.label()}")
    return ReconstructionSet(rec, dataset.name or dataset.fingerprint(), model.hash.hex(), rate_point, bpps)
