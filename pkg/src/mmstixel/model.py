"""Domain types: measurements, scans, class sets, stixels and model parameters.

Scans are stored column-major as dense arrays, one row per LiDAR layer:

* ``ranges``       (W, h)   metres, ``nan`` marks an invalid return
* ``elevation``    (W, h)   vertical angle in radians, bottom row first
* ``azimuth``      (W, h)   horizontal angle in radians
* ``lidar_probs``  (W, h, K_lidar)  rows of ``nan`` mark an absent distribution
* ``cam_probs``    (W, h, K_cam)    idem

Stixel row indices are 1-based and inclusive, ``1 <= bottom <= top <= h``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, fields
from typing import Iterator, Sequence

import numpy as np

PROB_SUM_TOL = 1e-6

#: distance of a SKY stixel
INFINITE = math.inf


class StructuralClass(enum.IntEnum):
    GROUND = 0
    OBJECT = 1
    SKY = 2


class Domain(enum.Enum):
    LIDAR = "lidar"
    CAMERA = "camera"


DEFAULT_LABELS = (
    "road", "sidewalk", "person", "rider", "small_vehicle", "large_vehicle",
    "two_wheeler", "construction", "pole", "traffic_sign", "vegetation",
    "terrain", "sky",
)

DEFAULT_PALETTE = {
    "road": (128, 64, 128),
    "sidewalk": (244, 35, 232),
    "person": (220, 20, 60),
    "rider": (255, 0, 0),
    "small_vehicle": (0, 0, 142),
    "large_vehicle": (0, 0, 70),
    "two_wheeler": (119, 11, 32),
    "construction": (70, 70, 70),
    "pole": (153, 153, 153),
    "traffic_sign": (220, 220, 0),
    "vegetation": (107, 142, 35),
    "terrain": (152, 251, 152),
    "sky": (70, 130, 180),
}

_DEFAULT_GROUND = frozenset({"road", "sidewalk", "terrain"})
_DEFAULT_SKY = frozenset({"sky"})


def default_structural(name: str) -> StructuralClass:
    if name in _DEFAULT_GROUND:
        return StructuralClass.GROUND
    if name in _DEFAULT_SKY:
        return StructuralClass.SKY
    return StructuralClass.OBJECT


@dataclass(frozen=True)
class ClassSet:
    """Ordered semantic labels, each tied to one structural class."""

    names: tuple[str, ...]
    structural: tuple[StructuralClass, ...]

    def __post_init__(self):
        names = tuple(self.names)
        structural = tuple(StructuralClass(s) for s in self.structural)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "structural", structural)
        if len(set(names)) != len(names):
            raise ValueError(f"class names are not unique: {names}")
        if len(structural) != len(names):
            raise ValueError("every label needs exactly one structural class")
        for n in names:
            if not n or any(ch.isspace() for ch in n):
                raise ValueError(f"invalid class name {n!r}")

    @classmethod
    def from_names(cls, names: Sequence[str], overrides: dict[str, StructuralClass] | None = None) -> ClassSet:
        overrides = overrides or {}
        return cls(tuple(names), tuple(overrides.get(n, default_structural(n)) for n in names))

    @classmethod
    def default(cls) -> ClassSet:
        return cls.from_names(DEFAULT_LABELS)

    def __len__(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown label {name!r}") from None

    def structural_of(self, name: str) -> StructuralClass:
        return self.structural[self.index(name)]

    def labels_of(self, sclass: StructuralClass) -> list[int]:
        return [i for i, s in enumerate(self.structural) if s == sclass]


@dataclass(frozen=True)
class PolarDepth:
    """One LiDAR beam. ``range_m`` is ``None`` for an invalid return."""

    range_m: float | None
    azimuth_rad: float
    elevation_rad: float

    @property
    def valid(self) -> bool:
        return self.range_m is not None


@dataclass(frozen=True, eq=False)
class Measurement:
    depth: PolarDepth
    lidar_sem: np.ndarray | None
    cam_sem: np.ndarray | None


def _readonly(a, dtype=float) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ScanColumn:
    """A vertically ordered column of measurements, bottom row first."""

    ranges: np.ndarray
    elevation: np.ndarray
    azimuth: np.ndarray
    lidar_probs: np.ndarray
    cam_probs: np.ndarray
    column_azimuth: float = 0.0

    def __post_init__(self):
        for f in ("ranges", "elevation", "azimuth", "lidar_probs", "cam_probs"):
            object.__setattr__(self, f, _readonly(getattr(self, f)))
        h = self.ranges.shape[0]
        if self.ranges.ndim != 1 or h == 0:
            raise ValueError("a column needs at least one measurement")
        if self.elevation.shape != (h,) or self.azimuth.shape != (h,):
            raise ValueError("angle arrays must match the column height")
        if self.lidar_probs.ndim != 2 or self.lidar_probs.shape[0] != h:
            raise ValueError("lidar_probs must have shape (h, K_lidar)")
        if self.cam_probs.ndim != 2 or self.cam_probs.shape[0] != h:
            raise ValueError("cam_probs must have shape (h, K_cam)")

    @classmethod
    def from_measurements(cls, cells: Sequence[Measurement], n_lidar: int, n_cam: int,
                          column_azimuth: float | None = None) -> ScanColumn:
        h = len(cells)
        ranges = np.full(h, np.nan)
        elev = np.empty(h)
        azi = np.empty(h)
        lid = np.full((h, n_lidar), np.nan)
        cam = np.full((h, n_cam), np.nan)
        for j, m in enumerate(cells):
            if m.depth.valid:
                ranges[j] = m.depth.range_m
            elev[j] = m.depth.elevation_rad
            azi[j] = m.depth.azimuth_rad
            if m.lidar_sem is not None:
                lid[j] = m.lidar_sem
            if m.cam_sem is not None:
                cam[j] = m.cam_sem
        if column_azimuth is None:
            column_azimuth = float(azi[0]) if h else 0.0
        return cls(ranges, elev, azi, lid, cam, column_azimuth)

    @property
    def height(self) -> int:
        return self.ranges.shape[0]

    @property
    def valid(self) -> np.ndarray:
        return np.isfinite(self.ranges)

    def __len__(self) -> int:
        return self.height

    def __getitem__(self, j: int) -> Measurement:
        r = self.ranges[j]
        lid = self.lidar_probs[j]
        cam = self.cam_probs[j]
        return Measurement(
            PolarDepth(float(r) if np.isfinite(r) else None, float(self.azimuth[j]), float(self.elevation[j])),
            None if np.isnan(lid).any() else lid,
            None if np.isnan(cam).any() else cam,
        )

    def __iter__(self) -> Iterator[Measurement]:
        return (self[j] for j in range(self.height))


@dataclass(frozen=True, eq=False)
class Scan:
    """An ordered set of columns of equal height from a cylindrical projection."""

    ranges: np.ndarray
    elevation: np.ndarray
    azimuth: np.ndarray
    lidar_probs: np.ndarray
    cam_probs: np.ndarray
    column_azimuth: np.ndarray
    lidar_classes: ClassSet
    cam_classes: ClassSet
    stixel_classes: ClassSet
    lidar_class_map: np.ndarray | None = None
    cam_class_map: np.ndarray | None = None

    def __post_init__(self):
        for f in ("ranges", "elevation", "azimuth", "lidar_probs", "cam_probs", "column_azimuth"):
            object.__setattr__(self, f, _readonly(getattr(self, f)))
        for f in ("lidar_class_map", "cam_class_map"):
            if getattr(self, f) is not None:
                object.__setattr__(self, f, _readonly(getattr(self, f)))
        if self.ranges.ndim != 2:
            raise ValueError("ranges must have shape (W, h)")
        w, h = self.ranges.shape
        if self.elevation.shape != (w, h) or self.azimuth.shape != (w, h):
            raise ValueError("angle arrays must have shape (W, h)")
        if self.lidar_probs.shape != (w, h, len(self.lidar_classes)):
            raise ValueError("lidar_probs must have shape (W, h, K_lidar)")
        if self.cam_probs.shape != (w, h, len(self.cam_classes)):
            raise ValueError("cam_probs must have shape (W, h, K_cam)")
        if self.column_azimuth.shape != (w,):
            raise ValueError("column_azimuth must have shape (W,)")
        ks = len(self.stixel_classes)
        if self.lidar_class_map is not None and self.lidar_class_map.shape != (len(self.lidar_classes), ks):
            raise ValueError("lidar_class_map must have shape (K_lidar, K_stixel)")
        if self.cam_class_map is not None and self.cam_class_map.shape != (len(self.cam_classes), ks):
            raise ValueError("cam_class_map must have shape (K_cam, K_stixel)")

    @classmethod
    def from_columns(cls, columns: Sequence[ScanColumn], lidar_classes: ClassSet,
                     cam_classes: ClassSet | None = None, stixel_classes: ClassSet | None = None,
                     lidar_class_map=None, cam_class_map=None) -> Scan:
        cam_classes = cam_classes or lidar_classes
        stixel_classes = stixel_classes or lidar_classes
        if columns:
            heights = {c.height for c in columns}
            if len(heights) != 1:
                raise ValueError(f"columns differ in height: {sorted(heights)}")

            def stack(attr):
                return np.stack([getattr(c, attr) for c in columns])

            arrays = [stack(a) for a in ("ranges", "elevation", "azimuth", "lidar_probs", "cam_probs")]
            col_az = np.array([c.column_azimuth for c in columns])
        else:
            arrays = [np.zeros((0, 0))] * 3 + [np.zeros((0, 0, len(lidar_classes))),
                                               np.zeros((0, 0, len(cam_classes)))]
            col_az = np.zeros(0)
        return cls(*arrays, col_az, lidar_classes, cam_classes, stixel_classes,
                   lidar_class_map, cam_class_map)

    @property
    def width(self) -> int:
        return self.ranges.shape[0]

    @property
    def height(self) -> int:
        return self.ranges.shape[1]

    @property
    def n_points(self) -> int:
        return self.ranges.size

    @property
    def valid(self) -> np.ndarray:
        return np.isfinite(self.ranges)

    def column(self, i: int) -> ScanColumn:
        return ScanColumn(self.ranges[i], self.elevation[i], self.azimuth[i],
                          self.lidar_probs[i], self.cam_probs[i], float(self.column_azimuth[i]))

    @property
    def columns(self) -> list[ScanColumn]:
        return [self.column(i) for i in range(self.width)]

    def __len__(self) -> int:
        return self.width


@dataclass(frozen=True)
class Stixel:
    bottom: int
    top: int
    distance: float | None
    label: str
    sclass: StructuralClass

    @property
    def rows(self) -> range:
        """0-based row indices covered by this stixel."""
        return range(self.bottom - 1, self.top)

    def __len__(self) -> int:
        return self.top - self.bottom + 1


@dataclass(frozen=True)
class StixelColumn:
    stixels: tuple[Stixel, ...]
    index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "stixels", tuple(self.stixels))

    def __len__(self) -> int:
        return len(self.stixels)

    def __iter__(self) -> Iterator[Stixel]:
        return iter(self.stixels)

    def row_labels(self, h: int) -> list[str]:
        out = [""] * h
        for s in self.stixels:
            for j in s.rows:
                out[j] = s.label
        return out


@dataclass(frozen=True)
class StixelWorld:
    columns: tuple[StixelColumn, ...]
    height: int
    classes: ClassSet = field(default_factory=ClassSet.default)

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))

    def __len__(self) -> int:
        return len(self.columns)

    def __iter__(self) -> Iterator[StixelColumn]:
        return iter(self.columns)

    @property
    def n_stixels(self) -> int:
        return sum(len(c) for c in self.columns)

    def label_grid(self) -> np.ndarray:
        """(W, h) stixel-set label index covering each point."""
        grid = np.full((len(self.columns), self.height), -1, dtype=np.int64)
        for i, col in enumerate(self.columns):
            for s in col:
                grid[i, s.bottom - 1:s.top] = self.classes.index(s.label)
        return grid


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Weights and sensor-model parameters of the energy.

    ``lidar_class_map`` / ``cam_class_map`` map input-domain distributions
    onto the stixel class set; ``None`` defers to the map carried by the scan
    or, failing that, the identity.
    """

    w_geo: float = 1.0
    w_sem_lidar: float = 1.0
    w_sem_cam: float = 1.0
    mc_cost: float = 8.0
    sigma_range_m: float = 0.05
    sigma_height_m: float = 0.05
    outlier_rate: float = 0.05
    outlier_range_max_m: float = 100.0
    grad_steep: float = 1.5
    grad_shift: float = 0.5
    sens_scale: float = 30.0
    sens_shift: float = 0.02
    sensor_height_m: float = 1.8
    lidar_class_map: np.ndarray | None = None
    cam_class_map: np.ndarray | None = None

    def __post_init__(self):
        for name in ("w_geo", "w_sem_lidar", "w_sem_cam", "mc_cost"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and >= 0, got {v}")
        for name in ("sigma_range_m", "sigma_height_m", "outlier_range_max_m",
                     "grad_steep", "sens_scale", "sensor_height_m"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be finite and > 0, got {v}")
        for name in ("grad_shift", "sens_shift"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if not 0 <= self.outlier_rate < 1:
            raise ValueError(f"outlier_rate must be in [0, 1), got {self.outlier_rate}")
        for name in ("lidar_class_map", "cam_class_map"):
            m = getattr(self, name)
            if m is not None:
                m = _readonly(m)
                object.__setattr__(self, name, m)
                check_class_map(m, name)

    def class_map(self, domain: Domain) -> np.ndarray | None:
        return self.lidar_class_map if domain is Domain.LIDAR else self.cam_class_map

    def scalar_items(self) -> list[tuple[str, float]]:
        return [(f.name, getattr(self, f.name)) for f in fields(self) if not f.name.endswith("class_map")]


SCALAR_PARAMS = tuple(f.name for f in fields(ModelParams) if not f.name.endswith("class_map"))


def check_class_map(m: np.ndarray, name: str = "class map") -> None:
    if m.ndim != 2:
        raise ValueError(f"{name} must be a matrix")
    if not np.all(np.isfinite(m)) or m.min() < 0:
        raise ValueError(f"{name} entries must be finite and non-negative")
    if np.any(np.abs(m.sum(axis=1) - 1) > PROB_SUM_TOL):
        raise ValueError(f"{name} must be row-stochastic")


def identity_map(src: ClassSet, dst: ClassSet) -> np.ndarray:
    """Class map sending each source label to the identically named target label."""
    m = np.zeros((len(src), len(dst)))
    for i, n in enumerate(src.names):
        m[i, dst.index(n)] = 1.0
    return m


def validate_scan(scan: Scan) -> list[str]:
    """Return one description per violated invariant; empty when well-formed."""
    problems: list[str] = []
    w, h = scan.ranges.shape if scan.ranges.ndim == 2 else (0, 0)
    for i in range(w):
        for j in range(h):
            r = scan.ranges[i, j]
            if not np.isnan(r) and not (np.isfinite(r) and r > 0):
                problems.append(f"column {i}, row {j + 1}: PolarDepth range must be finite and > 0 (got {r})")
            el, az = scan.elevation[i, j], scan.azimuth[i, j]
            if not (np.isfinite(el) and -math.pi / 2 <= el <= math.pi / 2):
                problems.append(f"column {i}, row {j + 1}: PolarDepth elevation out of [-pi/2, pi/2] ({el})")
            if not (np.isfinite(az) and -math.pi < az <= math.pi):
                problems.append(f"column {i}, row {j + 1}: PolarDepth azimuth out of (-pi, pi] ({az})")
            for dom, probs in (("lidar", scan.lidar_probs[i, j]), ("camera", scan.cam_probs[i, j])):
                if np.isnan(probs).all():
                    if dom == "lidar" and np.isfinite(r):
                        problems.append(f"column {i}, row {j + 1}: Measurement lidar semantics absent for a valid return")
                    continue
                if np.isnan(probs).any() or probs.min() < 0 or probs.max() > 1:
                    problems.append(f"column {i}, row {j + 1}: SemanticDistribution ({dom}) entries outside [0, 1]")
                elif abs(probs.sum() - 1) > PROB_SUM_TOL:
                    problems.append(f"column {i}, row {j + 1}: SemanticDistribution sum ({dom}) is {probs.sum():.6g}, not 1")
        if h and np.any(np.diff(scan.elevation[i]) <= 0):
            problems.append(f"column {i}: ScanColumn elevations not strictly increasing bottom to top")
    for name, m in (("lidar_class_map", scan.lidar_class_map), ("cam_class_map", scan.cam_class_map)):
        if m is not None:
            try:
                check_class_map(m, name)
            except ValueError as exc:
                problems.append(str(exc))
    return problems


def world_problems(world: StixelWorld) -> list[str]:
    """Stixel-level invariants beyond contiguity (see prior.consistency_check)."""
    out = []
    for col in world:
        for s in col:
            try:
                expected = world.classes.structural_of(s.label)
            except KeyError:
                out.append(f"column {col.index}: unknown label {s.label!r}")
                continue
            if s.sclass != expected:
                out.append(f"column {col.index}: stixel {s.bottom}-{s.top} class {s.sclass.name} does not match label {s.label}")
            if s.sclass == StructuralClass.SKY:
                if s.distance != INFINITE:
                    out.append(f"column {col.index}: SKY stixel {s.bottom}-{s.top} must have infinite distance")
            elif s.distance is not None and not (math.isfinite(s.distance) and s.distance > 0):
                out.append(f"column {col.index}: stixel {s.bottom}-{s.top} distance must be finite and > 0")
    return out
