"""Polar/Cartesian conversion and the slope between two LiDAR returns."""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .model import PolarDepth


class CartesianPoint(NamedTuple):
    x: float
    y: float
    z: float


def polar_to_cartesian(d: PolarDepth) -> CartesianPoint:
    if not d.valid:
        raise ValueError("invalid measurement has no Cartesian position")
    r, ah, av = d.range_m, d.azimuth_rad, d.elevation_rad
    return CartesianPoint(r * math.cos(av) * math.cos(ah), r * math.cos(av) * math.sin(ah), r * math.sin(av))


def cartesian_to_polar(p: CartesianPoint) -> PolarDepth:
    ground = math.hypot(p.x, p.y)
    return PolarDepth(math.hypot(ground, p.z), math.atan2(p.y, p.x), math.atan2(p.z, ground))


def gradient(d_j: PolarDepth, d_k: PolarDepth) -> float | None:
    """Slope angle between two returns, ``None`` when undefined.

    The pair is oriented from the lower beam to the upper one (by elevation,
    argument order when equal), so the result does not depend on argument
    order. A vertical face gives +pi/2; an overhang (upper return closer)
    gives more than pi/2.
    """
    if not (d_j.valid and d_k.valid):
        return None
    if d_k.elevation_rad < d_j.elevation_rad:
        d_j, d_k = d_k, d_j
    dz = d_k.range_m * math.sin(d_k.elevation_rad) - d_j.range_m * math.sin(d_j.elevation_rad)
    dg = d_k.range_m * math.cos(d_k.elevation_rad) - d_j.range_m * math.cos(d_j.elevation_rad)
    if dz == 0 and dg == 0:
        return None
    return math.atan2(dz, dg)


def column_gradients(ranges: np.ndarray, elevation: np.ndarray) -> np.ndarray:
    """Slope from row ``j-1`` to row ``j`` along the last axis; ``nan`` where undefined.

    Row 0 has no predecessor and is always ``nan``. Rows are assumed ordered
    by increasing elevation.
    """
    z = ranges * np.sin(elevation)
    g = ranges * np.cos(elevation)
    dz = np.diff(z, axis=-1)
    dg = np.diff(g, axis=-1)
    phi = np.arctan2(dz, dg)
    phi[(dz == 0) & (dg == 0)] = np.nan
    phi[np.isnan(dz) | np.isnan(dg)] = np.nan
    pad = np.full(phi.shape[:-1] + (1,), np.nan)
    return np.concatenate([pad, phi], axis=-1)
