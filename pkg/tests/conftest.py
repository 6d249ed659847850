import numpy as np
import pytest

from mmstixel.model import ClassSet, Scan, ScanColumn


@pytest.fixture
def three_classes():
    return ClassSet.from_names(["road", "car", "sky"])


def make_column(ranges, elevation, lidar, cam=None, azimuth=0.0):
    ranges = np.asarray(ranges, dtype=float)
    lidar = np.asarray(lidar, dtype=float)
    cam = np.full_like(lidar, np.nan) if cam is None else np.asarray(cam, dtype=float)
    return ScanColumn(ranges, np.asarray(elevation, dtype=float), np.full(len(ranges), azimuth),
                      lidar, cam, azimuth)


@pytest.fixture
def two_column_scan(three_classes):
    col = make_column([5.0, 5.2, np.nan], [-0.3, -0.1, 0.2],
                      [[0.8, 0.1, 0.1], [0.1, 0.8, 0.1], [0.0, 0.0, 1.0]])
    return Scan.from_columns([col, col], three_classes)
