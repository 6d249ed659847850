import math

import numpy as np
import pytest

from conftest import make_column
from mmstixel.model import (DEFAULT_LABELS, DEFAULT_PALETTE, ClassSet, Measurement, ModelParams,
                            PolarDepth, Scan, ScanColumn, Stixel, StixelColumn, StixelWorld,
                            StructuralClass, identity_map, validate_scan, world_problems)


def test_default_class_set_structure():
    cs = ClassSet.default()
    assert cs.names == DEFAULT_LABELS
    assert cs.structural_of("road") == StructuralClass.GROUND
    assert cs.structural_of("sky") == StructuralClass.SKY
    assert cs.structural_of("small_vehicle") == StructuralClass.OBJECT
    assert set(DEFAULT_PALETTE) == set(DEFAULT_LABELS)


def test_class_set_rejects_duplicates_and_whitespace():
    with pytest.raises(ValueError):
        ClassSet.from_names(["road", "road"])
    with pytest.raises(ValueError):
        ClassSet.from_names(["big car"])
    with pytest.raises(KeyError):
        ClassSet.default().index("unicorn")


def test_structural_overrides():
    cs = ClassSet.from_names(["floor", "wall"], {"floor": StructuralClass.GROUND})
    assert cs.structural == (StructuralClass.GROUND, StructuralClass.OBJECT)
    assert cs.labels_of(StructuralClass.OBJECT) == [1]


def test_polar_depth_validity():
    assert PolarDepth(3.0, 0.0, 0.1).valid
    assert not PolarDepth(None, 0.0, 0.1).valid


def test_scan_column_measurements_round_trip():
    cells = [Measurement(PolarDepth(4.0, 0.1, -0.2), np.array([0.7, 0.2, 0.1]), None),
             Measurement(PolarDepth(None, 0.1, 0.1), None, np.array([0.0, 0.0, 1.0]))]
    col = ScanColumn.from_measurements(cells, 3, 3, column_azimuth=0.1)
    assert col.height == 2
    assert col[0].depth == PolarDepth(4.0, 0.1, -0.2)
    assert col[0].cam_sem is None
    assert col[1].depth.range_m is None
    np.testing.assert_array_equal(col[1].cam_sem, [0.0, 0.0, 1.0])
    np.testing.assert_array_equal(col.valid, [True, False])


def test_scan_arrays_are_read_only(two_column_scan):
    with pytest.raises(ValueError):
        two_column_scan.ranges[0, 0] = 1.0


def test_scan_shape_checks(three_classes):
    col = make_column([5.0], [0.0], [[1.0, 0.0, 0.0]])
    other = make_column([5.0, 6.0], [0.0, 0.1], [[1.0, 0.0, 0.0]] * 2)
    with pytest.raises(ValueError, match="differ in height"):
        Scan.from_columns([col, other], three_classes)


def test_validate_well_formed_two_column_scan(two_column_scan):
    assert validate_scan(two_column_scan) == []


def test_validate_flags_probability_sum(three_classes):
    col = make_column([5.0, 6.0], [-0.2, -0.1], [[0.5, 0.2, 0.1], [1.0, 0.0, 0.0]])
    problems = validate_scan(Scan.from_columns([col], three_classes))
    assert len(problems) == 1
    assert "SemanticDistribution sum" in problems[0]


def test_validate_flags_non_increasing_elevations(three_classes):
    good = make_column([5.0, 6.0], [-0.2, -0.1], [[1.0, 0.0, 0.0]] * 2)
    bad = make_column([5.0, 6.0], [-0.1, -0.1], [[1.0, 0.0, 0.0]] * 2)
    problems = validate_scan(Scan.from_columns([good, bad], three_classes))
    assert len(problems) == 1
    assert problems[0].startswith("column 1")


def test_validate_flags_range_and_angles(three_classes):
    col = make_column([-1.0, 6.0], [-0.2, 2.0], [[1.0, 0.0, 0.0]] * 2)
    problems = validate_scan(Scan.from_columns([col], three_classes))
    assert any("range must be finite and > 0" in p for p in problems)
    assert any("elevation out of" in p for p in problems)


@pytest.mark.parametrize("field, value", [("w_geo", -1.0), ("mc_cost", math.inf), ("sigma_range_m", 0.0),
                                          ("outlier_rate", 1.0), ("grad_shift", math.nan)])
def test_params_bounds(field, value):
    with pytest.raises(ValueError, match=field):
        ModelParams(**{field: value})


def test_params_class_map_must_be_stochastic():
    with pytest.raises(ValueError, match="row-stochastic"):
        ModelParams(lidar_class_map=np.array([[0.5, 0.2]]))


def test_identity_map_by_name():
    src = ClassSet.from_names(["sky", "road"])
    dst = ClassSet.from_names(["road", "car", "sky"])
    np.testing.assert_array_equal(identity_map(src, dst), [[0, 0, 1], [1, 0, 0]])


def test_world_label_grid_and_problems(three_classes):
    col = StixelColumn((Stixel(1, 2, 10.0, "road", StructuralClass.GROUND),
                        Stixel(3, 3, math.inf, "sky", StructuralClass.SKY)), 0)
    world = StixelWorld((col,), 3, three_classes)
    np.testing.assert_array_equal(world.label_grid(), [[0, 0, 2]])
    assert world.n_stixels == 2
    assert world_problems(world) == []
    bad = StixelWorld((StixelColumn((Stixel(1, 3, 5.0, "sky", StructuralClass.SKY),), 0),), 3, three_classes)
    assert any("infinite distance" in p for p in world_problems(bad))
