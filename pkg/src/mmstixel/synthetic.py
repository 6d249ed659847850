"""Seeded synthetic scans with exact ground truth.

Beams are cast from a sensor ``sensor_height_m`` above a flat ground plane.
Obstacles are surfaces of constant range over an azimuth interval, i.e.
boxes in the cylindrical range image, so every return from one obstacle has
the same true range. Beams that hit nothing are invalid and labelled sky. Every hit gets
Gaussian range noise; ground hits may additionally get height noise, i.e.
an uneven road surface.

Semantic distributions put ``1 - eps`` on a class and spread ``eps`` over the
others. The class is the true one unless boundary errors are enabled:
``lidar_jitter_rows`` reads each LiDAR label from a random row up to that
many rows away, ``cam_row_offset`` reads every camera label from a fixed row
offset, as a miscalibrated image-to-point projection would.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import (INFINITE, ClassSet, Scan, Stixel, StixelColumn, StixelWorld,
                    StructuralClass)


@dataclass(frozen=True)
class Obstacle:
    azimuth_min: float
    azimuth_max: float
    range_m: float
    height_m: float
    label: str


def default_obstacles() -> tuple[Obstacle, ...]:
    return (
        Obstacle(-0.55, -0.52, 6.0, 4.0, "pole"),
        Obstacle(-0.40, -0.12, 9.0, 1.5, "small_vehicle"),
        Obstacle(-0.08, -0.02, 14.0, 1.8, "person"),
        Obstacle(0.05, 0.30, 22.0, 3.5, "large_vehicle"),
        Obstacle(0.34, 0.60, 30.0, 9.0, "construction"),
        Obstacle(-0.70, -0.58, 16.0, 2.5, "vegetation"),
    )


@dataclass(frozen=True)
class SceneSpec:
    rows: int = 32
    elevation_min: float = -0.42
    elevation_max: float = 0.25
    columns: int = 64
    azimuth_min: float = -0.75
    azimuth_max: float = 0.75
    sensor_height_m: float = 1.8
    ground_extent_m: float = 60.0
    ground_label: str = "road"
    obstacles: tuple[Obstacle, ...] = field(default_factory=default_obstacles)
    sigma_range_m: float = 0.0
    sigma_height_m: float = 0.0
    outlier_rate: float = 0.0
    outlier_range_max_m: float = 100.0
    dropout_rate: float = 0.0
    eps_lidar: float = 0.0
    eps_cam: float = 0.0
    lidar_jitter_rows: int = 0
    cam_row_offset: int = 0
    cam_fov_min: float = -math.pi
    cam_fov_max: float = math.pi
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        if self.rows < 1 or self.columns < 1:
            raise ValueError("degenerate grid: rows and columns must be >= 1")
        if not self.elevation_min < self.elevation_max or self.rows > 1 and self.elevation_min == self.elevation_max:
            raise ValueError("degenerate grid: elevation_min must be below elevation_max")
        if not (-math.pi / 2 <= self.elevation_min and self.elevation_max <= math.pi / 2):
            raise ValueError("elevations must lie within [-pi/2, pi/2]")
        if not (-math.pi < self.azimuth_min <= self.azimuth_max <= math.pi):
            raise ValueError("degenerate grid: azimuths must satisfy -pi < min <= max <= pi")
        if self.sensor_height_m <= 0 or self.ground_extent_m <= 0 or self.outlier_range_max_m <= 0:
            raise ValueError("sensor height, ground extent and outlier support must be > 0")
        if self.sigma_range_m < 0 or self.sigma_height_m < 0:
            raise ValueError("noise levels must be >= 0")
        for name in ("outlier_rate", "dropout_rate", "eps_lidar", "eps_cam"):
            v = getattr(self, name)
            if not 0 <= v < 1:
                raise ValueError(f"{name} must be in [0, 1), got {v}")
        if self.lidar_jitter_rows < 0:
            raise ValueError("lidar_jitter_rows must be >= 0")
        for ob in self.obstacles:
            if not (ob.range_m > 0 and ob.height_m > 0 and ob.azimuth_min <= ob.azimuth_max):
                raise ValueError(f"invalid obstacle {ob}")

    @property
    def elevations(self) -> np.ndarray:
        return np.linspace(self.elevation_min, self.elevation_max, self.rows)

    @property
    def azimuths(self) -> np.ndarray:
        if self.columns == 1:
            return np.array([(self.azimuth_min + self.azimuth_max) / 2])
        return np.linspace(self.azimuth_min, self.azimuth_max, self.columns)


@dataclass(frozen=True, eq=False)
class SyntheticScene:
    scan: Scan
    truth: StixelWorld
    labels: np.ndarray
    camera_mask: np.ndarray


def cast(spec: SceneSpec, classes: ClassSet) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Noise-free ray casting: true range (nan on miss), label index and hit id per beam.

    Hit id is -1 for a miss, 0 for ground and ``k + 1`` for obstacle ``k``.
    """
    el = spec.elevations
    az = spec.azimuths
    w, h = len(az), len(el)
    ranges = np.full((w, h), np.nan)
    hit = np.full((w, h), -1, dtype=np.int64)
    labels = np.full((w, h), classes.index("sky"), dtype=np.int64)

    down = -np.sin(el)
    with np.errstate(divide="ignore"):
        r_ground = np.where(down > 0, spec.sensor_height_m / np.where(down > 0, down, 1.0), np.inf)
    ground_ok = np.isfinite(r_ground) & (r_ground * np.cos(el) <= spec.ground_extent_m)
    ranges[:, ground_ok] = r_ground[ground_ok]
    hit[:, ground_ok] = 0
    labels[:, ground_ok] = classes.index(spec.ground_label)

    for k, ob in enumerate(spec.obstacles):
        z = ob.range_m * np.sin(el)
        rows = (z >= -spec.sensor_height_m) & (z <= ob.height_m - spec.sensor_height_m)
        cols = (az >= ob.azimuth_min) & (az <= ob.azimuth_max)
        sel = cols[:, None] & rows[None, :]
        nearer = sel & ~(ranges <= ob.range_m)
        ranges[nearer] = ob.range_m
        hit[nearer] = k + 1
        labels[nearer] = classes.index(ob.label)
    return ranges, labels, hit


def truth_world(ranges: np.ndarray, elevation: np.ndarray, labels: np.ndarray, hit: np.ndarray,
                classes: ClassSet) -> StixelWorld:
    """One stixel per maximal run of rows hitting the same surface."""
    w, h = labels.shape
    columns = []
    for i in range(w):
        stixels = []
        b = 0
        for j in range(1, h + 1):
            if j < h and hit[i, j] == hit[i, b] and labels[i, j] == labels[i, b]:
                continue
            name = classes.names[labels[i, b]]
            sclass = classes.structural[labels[i, b]]
            if sclass == StructuralClass.SKY:
                r = INFINITE
            elif sclass == StructuralClass.OBJECT:
                r = float(ranges[i, b])
            else:
                top = j - 1
                r = float(ranges[i, top] * math.cos(elevation[i, top]))
            stixels.append(Stixel(b + 1, j, r, name, sclass))
            b = j
        columns.append(StixelColumn(tuple(stixels), i))
    return StixelWorld(tuple(columns), h, classes)


def _semantics(rng: np.random.Generator, labels: np.ndarray, n: int, eps: float) -> np.ndarray:
    probs = np.zeros(labels.shape + (n,))
    if eps > 0:
        spread = rng.dirichlet(np.ones(n - 1), labels.shape)
        others = np.ones(labels.shape + (n,), dtype=bool)
        np.put_along_axis(others, labels[..., None], False, axis=-1)
        probs[others] = (eps * spread).reshape(-1)
    np.put_along_axis(probs, labels[..., None], 1.0 - eps, axis=-1)
    return probs


def generate(spec: SceneSpec, classes: ClassSet | None = None) -> SyntheticScene:
    classes = classes or ClassSet.default()
    for name in {spec.ground_label, "sky"} | {ob.label for ob in spec.obstacles}:
        classes.index(name)
    if classes.structural_of(spec.ground_label) != StructuralClass.GROUND:
        raise ValueError(f"ground label {spec.ground_label!r} is not a GROUND class")
    rng = np.random.default_rng(spec.seed)
    el = spec.elevations
    az = spec.azimuths
    w, h = len(az), len(el)
    elevation = np.broadcast_to(el, (w, h)).copy()
    azimuth = np.broadcast_to(az[:, None], (w, h)).copy()

    true_ranges, labels, hit = cast(spec, classes)
    truth = truth_world(true_ranges, elevation, labels, hit, classes)

    # fixed draw order keeps scenes reproducible per seed
    n_range = rng.normal(0.0, 1.0, (w, h))
    n_height = rng.normal(0.0, 1.0, (w, h))
    u_outlier = rng.random((w, h))
    u_outlier_r = rng.random((w, h))
    u_drop = rng.random((w, h))

    valid = hit >= 0
    measured = true_ranges.copy()
    gnd = hit == 0
    if spec.sigma_height_m > 0:
        down = -np.sin(elevation[gnd])
        measured[gnd] = (spec.sensor_height_m - spec.sigma_height_m * n_height[gnd]) / down
    measured[valid] += spec.sigma_range_m * n_range[valid]
    outl = valid & (u_outlier < spec.outlier_rate)
    measured[outl] = spec.outlier_range_max_m * (1.0 - u_outlier_r[outl])
    measured[valid] = np.maximum(measured[valid], 1e-3)
    drop = valid & (u_drop < spec.dropout_rate)
    measured[drop] = np.nan

    rows = np.arange(h)
    jitter = rng.integers(-spec.lidar_jitter_rows, spec.lidar_jitter_rows + 1, (w, h))
    lidar_src = np.take_along_axis(labels, np.clip(rows + jitter, 0, h - 1), axis=1)
    cam_src = labels[:, np.clip(rows + spec.cam_row_offset, 0, h - 1)]

    lidar = _semantics(rng, lidar_src, len(classes), spec.eps_lidar)
    lidar[drop] = np.nan
    cam = _semantics(rng, cam_src, len(classes), spec.eps_cam)
    in_fov = (azimuth >= spec.cam_fov_min) & (azimuth <= spec.cam_fov_max)
    cam[~in_fov] = np.nan

    scan = Scan(measured, elevation, azimuth, lidar, cam, az, classes, classes, classes)
    return SyntheticScene(scan, truth, labels, in_fov)
