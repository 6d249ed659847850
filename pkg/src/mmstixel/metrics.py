"""Point-wise evaluation of a stixel world: outlier rate, IoU, compression rate."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import ClassSet, Scan, StixelWorld, StructuralClass

UNLABELED = -1


@dataclass
class EvalReport:
    outlier_rate: float
    iou_per_class: dict[str, float]
    mean_iou: float
    compression_rate: float
    n_points: int
    n_valid_points: int
    n_stixels: int
    extra: dict[str, str] = field(default_factory=dict)


def _check_shapes(scan: Scan, world: StixelWorld) -> None:
    if len(world) != scan.width or world.height != scan.height:
        raise ValueError(f"world is {len(world)}x{world.height} but scan is {scan.width}x{scan.height}")


def point_deviation(scan: Scan, world: StixelWorld, sensor_height_m: float = 1.8) -> np.ndarray:
    """Relative range deviation of every point from its covering stixel.

    ``nan`` for invalid points, ``inf`` where the stixel predicts no return
    (SKY, a GROUND stixel at a non-negative elevation, a distance-less
    OBJECT stixel). GROUND stixels are compared against the range at which
    the point's beam meets the ideal ground plane.
    """
    _check_shapes(scan, world)
    dev = np.full(scan.ranges.shape, np.nan)
    for i, col in enumerate(world):
        r = scan.ranges[i]
        el = scan.elevation[i]
        for s in col:
            rows = slice(s.bottom - 1, s.top)
            rj = r[rows]
            if s.sclass == StructuralClass.SKY or (s.sclass == StructuralClass.OBJECT and s.distance is None):
                pred = np.full(rj.shape, np.inf)
            elif s.sclass == StructuralClass.OBJECT:
                pred = np.full(rj.shape, float(s.distance))
            else:
                down = -np.sin(el[rows])
                with np.errstate(divide="ignore"):
                    pred = np.where(down > 0, sensor_height_m / np.where(down > 0, down, 1.0), np.inf)
            with np.errstate(invalid="ignore"):
                dev[i, rows] = np.where(np.isfinite(pred), np.abs(rj - pred) / rj, np.inf)
            dev[i, rows] = np.where(np.isfinite(rj), dev[i, rows], np.nan)
    return dev


def outlier_rate(scan: Scan, world: StixelWorld, threshold: float = 0.05, sensor_height_m: float = 1.8,
                 count_invalid: bool = False, mask: np.ndarray | None = None) -> float:
    """Fraction of points deviating more than ``threshold`` from their stixel.

    The denominator is the number of valid points, or of all points when
    ``count_invalid`` is set. ``mask`` restricts evaluation to a region.
    """
    dev = point_deviation(scan, world, sensor_height_m)
    region = np.ones(dev.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    valid = np.isfinite(scan.ranges) & region
    denom = int(region.sum()) if count_invalid else int(valid.sum())
    if denom == 0:
        return 0.0
    n_out = int(np.sum(valid & (dev > threshold)))
    return n_out / denom


def confusion(reference: np.ndarray, predicted: np.ndarray, n_classes: int) -> np.ndarray:
    """Confusion counts, rows = reference, columns = prediction; unlabeled points skipped."""
    ref = np.asarray(reference).ravel()
    pred = np.asarray(predicted).ravel()
    keep = ref != UNLABELED
    ref, pred = ref[keep], pred[keep]
    if ref.size and (ref.min() < 0 or ref.max() >= n_classes):
        raise ValueError("reference holds labels outside the class set")
    if pred.size and (pred.min() < 0 or pred.max() >= n_classes):
        raise ValueError("prediction holds labels outside the class set")
    return np.bincount(ref * n_classes + pred, minlength=n_classes * n_classes).reshape(n_classes, n_classes)


def iou_from_confusion(cm: np.ndarray, classes: ClassSet) -> tuple[dict[str, float], float]:
    tp = np.diag(cm).astype(float)
    fp = cm.sum(axis=0) - tp
    fn = cm.sum(axis=1) - tp
    present = (tp + fp + fn) > 0
    per_class = {classes.names[k]: float(tp[k] / (tp[k] + fp[k] + fn[k])) for k in np.flatnonzero(present)}
    mean = float(np.mean(list(per_class.values()))) if per_class else math.nan
    return per_class, mean


def iou(reference: np.ndarray, world: StixelWorld, classes: ClassSet | None = None,
        mask: np.ndarray | None = None) -> tuple[dict[str, float], float]:
    """Per-class and mean IoU of stixel labels against per-point reference labels.

    ``reference`` is a (W, h) array of stixel class-set indices with
    ``UNLABELED`` (-1) for points to ignore. Classes absent from both the
    reference and the prediction are left out of the mean.
    """
    classes = classes or world.classes
    reference = np.asarray(reference)
    pred = world.label_grid()
    if reference.shape != pred.shape:
        raise ValueError(f"reference shape {reference.shape} does not match world {pred.shape}")
    if mask is not None:
        reference = np.where(mask, reference, UNLABELED)
    return iou_from_confusion(confusion(reference, pred, len(classes)), classes)


def compression_rate(world: StixelWorld, scan: Scan) -> float:
    n_points = scan.n_points
    if n_points == 0:
        raise ValueError("compression rate of an empty scan is undefined")
    return 1.0 - world.n_stixels / n_points


def evaluate(scan: Scan, world: StixelWorld, reference: np.ndarray, threshold: float = 0.05,
             sensor_height_m: float = 1.8, count_invalid: bool = False,
             mask: np.ndarray | None = None) -> EvalReport:
    per_class, mean = iou(reference, world, mask=mask)
    return EvalReport(
        outlier_rate=outlier_rate(scan, world, threshold, sensor_height_m, count_invalid, mask),
        iou_per_class=per_class,
        mean_iou=mean,
        compression_rate=compression_rate(world, scan),
        n_points=scan.n_points,
        n_valid_points=int(np.isfinite(scan.ranges).sum()),
        n_stixels=world.n_stixels,
    )
