"""Learned image codecs: transforms, entropy models, rate-distortion training."""
from .bitstream import Bitstream, BitstreamError
from .config import ALPHABET_BOUND, CodecConfig, ConfigError, RatePoint
from .entropy_models import FactorizedEntropyModel, GaussianConditionalModel
from .model import (
    CodecError,
    CodecModel,
    HyperpriorLiteModel,
    compress,
    compress_batch,
    decompress,
    decompress_batch,
    encode_latents,
    quantize,
    rate_estimate,
    rate_point_grid,
    rd_loss,
)
from .train import TrainingError, train_codec

__all__ = [
    "ALPHABET_BOUND", "Bitstream", "BitstreamError", "CodecConfig", "CodecError", "CodecModel",
    "ConfigError", "FactorizedEntropyModel", "GaussianConditionalModel", "HyperpriorLiteModel",
    "RatePoint", "TrainingError", "compress", "compress_batch", "decompress", "decompress_batch",
    "encode_latents", "quantize", "rate_estimate", "rate_point_grid", "rd_loss", "train_codec",
]
