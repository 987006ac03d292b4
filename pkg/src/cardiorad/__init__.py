"""Radiomics-based diagnosis from segmented cardiac cine-MRI volumes."""

from .features import REGISTRY, FeatureTable, extract_subject, extract_table, read_table, write_table
from .io import read_manifest, read_segmentation, read_volume
from .selection import loo_accuracy, metrics_from_confusion, sfs_select
from .svm import SvmParams, predict_multiclass, train_binary, train_multiclass

__version__ = "0.1.0"

__all__ = [
    "REGISTRY", "FeatureTable", "SvmParams", "extract_subject", "extract_table",
    "loo_accuracy", "metrics_from_confusion", "predict_multiclass", "read_manifest",
    "read_segmentation", "read_table", "read_volume", "sfs_select", "train_binary",
    "train_multiclass", "write_table",
]
