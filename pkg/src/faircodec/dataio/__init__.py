"""Datasets: manifests, splits, rebalancing, synthetic faces, reconstructions."""
from .dataset import (
    Dataset,
    DatasetError,
    ManifestRecord,
    filter_subset,
    load_dataset,
    rebalance,
    save_dataset,
    split,
)
from .netpbm import ImageFormatError, decode_netpbm, encode_netpbm, quantize8, read_netpbm, write_netpbm
from .reconstruct import ReconstructionSet, reconstruct_dataset
from .schema import CATEGORIES, DEFAULT_LABELS, GROUPS, OTHER, LabelSchema, SchemaError
from .synth import SKEWED_COUNTS, SKEWED_DISTRIBUTIONS, TONE_LEVELS, SynthSpec, SynthSpecError, render_face, synth_generate

__all__ = [
    "CATEGORIES", "DEFAULT_LABELS", "Dataset", "DatasetError", "GROUPS", "ImageFormatError", "LabelSchema",
    "ManifestRecord", "OTHER", "ReconstructionSet", "SKEWED_COUNTS", "SKEWED_DISTRIBUTIONS", "SchemaError",
    "SynthSpec", "SynthSpecError", "TONE_LEVELS", "decode_netpbm", "encode_netpbm", "filter_subset",
    "load_dataset", "quantize8", "read_netpbm", "rebalance", "reconstruct_dataset", "render_face",
    "save_dataset", "split", "synth_generate", "write_netpbm",
]
