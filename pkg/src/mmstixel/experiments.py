"""Weight sweeps and modality ablations over one or more scenes."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from . import metrics
from .model import SCALAR_PARAMS, ModelParams, Scan
from .solver import solve_scan

#: weight settings (w_geo, w_sem_lidar, w_sem_cam) of the modality ablation
ABLATION_CONFIGS = {
    "depth_only": (1.0, 0.0, 0.0),
    "lidar_semantics_only": (0.0, 1.0, 0.0),
    "camera_semantics_only": (0.0, 0.0, 1.0),
    "multimodal": (1.0, 1.0, 1.0),
}


@dataclass(frozen=True, eq=False)
class Case:
    """A scan with per-point reference labels and an optional evaluation mask."""

    scan: Scan
    reference: np.ndarray
    mask: np.ndarray | None = None


@dataclass
class Row:
    name: str
    value: float
    outlier_rate: float
    mean_iou: float
    compression_rate: float
    n_stixels: int


def evaluate_cases(cases: Sequence[Case], params: ModelParams, threshold: float = 0.05,
                   workers: int = 1, count_invalid: bool = False) -> tuple[float, float, float, int]:
    """Pooled (outlier rate, mean IoU, compression rate, stixel count) over all cases.

    Counts are pooled before dividing, so larger scans weigh more.
    """
    n_out = n_den = n_stix = n_pts = 0
    cm = None
    classes = None
    for case in cases:
        world = solve_scan(case.scan, params, workers=workers).world
        classes = world.classes
        dev = metrics.point_deviation(case.scan, world, params.sensor_height_m)
        region = np.ones(dev.shape, dtype=bool) if case.mask is None else case.mask
        valid = np.isfinite(case.scan.ranges) & region
        n_out += int(np.sum(valid & (dev > threshold)))
        n_den += int(region.sum()) if count_invalid else int(valid.sum())
        ref = case.reference if case.mask is None else np.where(case.mask, case.reference, metrics.UNLABELED)
        c = metrics.confusion(ref, world.label_grid(), len(classes))
        cm = c if cm is None else cm + c
        n_stix += world.n_stixels
        n_pts += case.scan.n_points
    _, mean_iou = metrics.iou_from_confusion(cm, classes)
    return (n_out / n_den if n_den else 0.0), mean_iou, 1.0 - n_stix / n_pts, n_stix


def sweep(cases: Sequence[Case], params: ModelParams, name: str, values: Iterable[float],
          threshold: float = 0.05, workers: int = 1, count_invalid: bool = False) -> list[Row]:
    if name not in SCALAR_PARAMS:
        raise ValueError(f"unknown parameter {name!r}")
    rows = []
    for v in values:
        p = replace(params, **{name: float(v)})
        out, iou, comp, n = evaluate_cases(cases, p, threshold, workers, count_invalid)
        rows.append(Row(name, float(v), out, iou, comp, n))
    return rows


def grid(lo: float, hi: float, steps: int) -> np.ndarray:
    if steps < 1:
        raise ValueError("a sweep needs at least one step")
    if steps == 1:
        return np.array([lo])
    return np.linspace(lo, hi, steps)


def ablation(cases: Sequence[Case], params: ModelParams, threshold: float = 0.05,
             workers: int = 1, count_invalid: bool = False) -> list[Row]:
    rows = []
    for name, (wg, wl, wc) in ABLATION_CONFIGS.items():
        p = replace(params, w_geo=wg, w_sem_lidar=wl, w_sem_cam=wc)
        out, iou, comp, n = evaluate_cases(cases, p, threshold, workers, count_invalid)
        rows.append(Row(name, float("nan"), out, iou, comp, n))
    return rows
