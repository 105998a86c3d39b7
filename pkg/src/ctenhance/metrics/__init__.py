"""Image quality metrics and method ranking."""

from .fidelity import PSNR_CAP_DB, psnr, ssim, vif_p
from .perceptual import dists, load_calibration, perceptual_distance
from .piqe import block_count, piqe
from .ranking import (
    METRIC_DIRECTIONS,
    MetricReport,
    MetricValue,
    RankEntry,
    RankTable,
    aggregate_report,
    api_rank,
    load_report,
    save_report,
)

__all__ = [
    "psnr",
    "ssim",
    "vif_p",
    "perceptual_distance",
    "dists",
    "piqe",
    "block_count",
    "load_calibration",
    "PSNR_CAP_DB",
    "METRIC_DIRECTIONS",
    "MetricReport",
    "MetricValue",
    "RankEntry",
    "RankTable",
    "aggregate_report",
    "api_rank",
    "save_report",
    "load_report",
]
