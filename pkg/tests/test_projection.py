import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mmstixel.model import PolarDepth
from mmstixel.projection import (CartesianPoint, cartesian_to_polar, column_gradients, gradient,
                                 polar_to_cartesian)


@pytest.mark.parametrize("d, expected", [
    (PolarDepth(5.0, 0.0, 0.0), (5.0, 0.0, 0.0)),
    (PolarDepth(2.0, 0.0, math.pi / 2), (0.0, 0.0, 2.0)),
    (PolarDepth(math.sqrt(2.0), 0.0, math.pi / 4), (1.0, 0.0, 1.0)),
])
def test_polar_to_cartesian(d, expected):
    assert polar_to_cartesian(d) == pytest.approx(expected, abs=1e-12)


def test_invalid_has_no_position():
    with pytest.raises(ValueError):
        polar_to_cartesian(PolarDepth(None, 0.0, 0.0))


def _at(x, y, z):
    return cartesian_to_polar(CartesianPoint(x, y, z))


def test_gradient_examples():
    assert gradient(_at(3, 0, 0), _at(4, 0, 1)) == pytest.approx(math.pi / 4, abs=1e-12)
    assert gradient(_at(3, 0, 0), _at(4, 0, 0)) == pytest.approx(0.0, abs=1e-12)
    assert gradient(_at(3, 0, 0), PolarDepth(None, 0.0, 0.3)) is None


def test_gradient_vertical_face_and_overhang():
    assert gradient(_at(5, 0, -1), _at(5, 0, 1)) == pytest.approx(math.pi / 2, abs=1e-12)
    assert gradient(_at(5, 0, 0), _at(4, 0, 1)) > math.pi / 2


angles = st.floats(-1.4, 1.4)
ranges = st.floats(0.5, 80.0)


@given(ranges, angles, ranges, angles)
def test_gradient_is_symmetric_in_argument_order(r1, a1, r2, a2):
    d1, d2 = PolarDepth(r1, 0.0, a1), PolarDepth(r2, 0.0, a2)
    g1, g2 = gradient(d1, d2), gradient(d2, d1)
    if a1 == a2:
        return  # orientation falls back to argument order
    assert g1 == g2


@given(ranges, st.floats(-math.pi + 1e-6, math.pi), angles)
def test_cartesian_round_trip(r, az, el):
    back = cartesian_to_polar(polar_to_cartesian(PolarDepth(r, az, el)))
    assert back.range_m == pytest.approx(r, rel=1e-12)
    assert back.elevation_rad == pytest.approx(el, abs=1e-12)
    assert math.cos(back.azimuth_rad - az) == pytest.approx(1.0, abs=1e-12)


def test_column_gradients_match_scalar():
    rng = np.random.default_rng(0)
    el = np.sort(rng.uniform(-0.4, 0.2, 10))
    r = rng.uniform(2, 30, 10)
    r[4] = np.nan
    phi = column_gradients(r, el)
    assert np.isnan(phi[0])
    for j in range(1, 10):
        g = gradient(PolarDepth(None if np.isnan(r[j - 1]) else r[j - 1], 0, el[j - 1]),
                     PolarDepth(None if np.isnan(r[j]) else r[j], 0, el[j]))
        if g is None:
            assert np.isnan(phi[j])
        else:
            assert phi[j] == pytest.approx(g, abs=1e-12)
