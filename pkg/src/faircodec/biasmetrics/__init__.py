"""Bias, distortion and realism metrics over compressed-image predictions."""
from .blur import FlipMatrix, blur_flip_analysis, confusion, gaussian_blur, gaussian_kernel, normalize_rows
from .bootstrap import bootstrap_ci
from .fairness import (
    LOSS_KINDS,
    EmptyGroupError,
    MetricsError,
    PredictionRecord,
    accuracy,
    accuracy_disparity,
    bias_general,
    conditional_error,
    conditional_loss,
    per_group_accuracy,
)
from .frechet import frechet_distance, frechet_from_stats, gaussian_stats
from .quality import PSNR_CAP, batch_quality, mse, psnr, psnr_from_mse, ssim
from .report import MetricsReport, compute_metrics

__all__ = [
    "EmptyGroupError", "FlipMatrix", "LOSS_KINDS", "MetricsError", "MetricsReport", "PSNR_CAP",
    "PredictionRecord", "accuracy", "accuracy_disparity", "batch_quality", "bias_general", "blur_flip_analysis",
    "bootstrap_ci", "compute_metrics", "conditional_error", "conditional_loss", "confusion", "frechet_distance",
    "frechet_from_stats", "gaussian_blur", "gaussian_kernel", "gaussian_stats", "mse", "normalize_rows",
    "per_group_accuracy", "psnr", "psnr_from_mse", "ssim",
]
