"""Multimodal stixel world: column-wise MAP segmentation of LiDAR scans fused
with LiDAR- and camera-domain semantic class distributions."""

from .metrics import EvalReport, compression_rate, evaluate, iou, outlier_rate
from .model import (INFINITE, ClassSet, Measurement, ModelParams, PolarDepth, Scan, ScanColumn,
                    Stixel, StixelColumn, StixelWorld, StructuralClass)
from .solver import ScanSolution, solve_column, solve_scan
from .synthetic import Obstacle, SceneSpec, SyntheticScene, generate

__version__ = "0.1.0"

__all__ = [
    "INFINITE", "ClassSet", "EvalReport", "Measurement", "ModelParams", "Obstacle", "PolarDepth", "Scan",
    "ScanColumn", "ScanSolution", "SceneSpec", "Stixel", "StixelColumn", "StixelWorld", "StructuralClass",
    "SyntheticScene", "compression_rate", "evaluate", "generate", "iou", "outlier_rate", "solve_column", "solve_scan",
]
