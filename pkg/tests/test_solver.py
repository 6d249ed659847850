import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_column
from oracles import FOUR_LABELS, brute_force_column, direct_segment_cost, random_column
from mmstixel.likelihood import StixelHypothesis, mixture_energy, resolve_class_maps
from mmstixel.model import INFINITE, ClassSet, ModelParams, Scan, StructuralClass
from mmstixel.prior import consistency_check
from mmstixel.solver import column_energy, rows_energy, segment_cost, solve_column, solve_scan

G, O, S = StructuralClass.GROUND, StructuralClass.OBJECT, StructuralClass.SKY


def _resolved(col, classes, params):
    return resolve_class_maps(params, Scan.from_columns([col], classes))


def test_single_row_ground_column(three_classes):
    col = make_column([1.8 / math.sin(0.3)], [-0.3], [[0.9, 0.05, 0.05]])
    stixels, _ = solve_column(col, ModelParams(), three_classes)
    assert [(s.bottom, s.top, s.label, s.sclass) for s in stixels] == [(1, 1, "road", G)]


def test_all_invalid_high_elevation_is_one_sky_stixel(three_classes):
    h = 6
    col = make_column([np.nan] * h, np.linspace(0.3, 0.8, h), np.full((h, 3), np.nan))
    stixels, energy = solve_column(col, ModelParams(mc_cost=1.0), three_classes)
    assert len(stixels) == 1
    s = stixels.stixels[0]
    assert (s.bottom, s.top, s.sclass, s.distance) == (1, h, S, INFINITE)
    assert energy == pytest.approx(column_energy(col, stixels, ModelParams(mc_cost=1.0), three_classes))


def test_segment_cost_single_object_row(three_classes):
    col = make_column([5.0, 5.0], [-0.1, 0.0], [[0.1, 0.8, 0.1]] * 2)
    p = _resolved(col, three_classes, ModelParams())
    e, r = segment_cost(col, 2, 2, O, 1, p)
    assert r == 5.0
    # distance term vanishes at the candidate; what is left is slope + semantics
    hyp = StixelHypothesis(O, 1, 5.0)
    assert e == pytest.approx(rows_energy(col, 2, 2, hyp, p))
    # slope of two 5 m returns 0.1 rad apart: dz = 5 sin 0.1, dground = 5 (1 - cos 0.1)
    phi = math.atan2(5 * math.sin(0.1), 5 * (1 - math.cos(0.1)))
    p_ob = (1 + math.tanh(p.grad_steep * (phi - p.grad_shift))) / 2
    assert e == pytest.approx(-math.log(p_ob) - math.log(0.8), abs=1e-9)


def test_segment_cost_all_invalid_sky(three_classes):
    el = [0.1, 0.2, 0.3]
    col = make_column([np.nan] * 3, el, np.full((3, 3), np.nan))
    p = _resolved(col, three_classes, ModelParams())
    e, r = segment_cost(col, 1, 3, S, 2, p)
    assert r == INFINITE
    assert e == pytest.approx(sum(-math.log((1 + math.tanh(p.sens_scale * (a - p.sens_shift))) / 2) for a in el))


def test_segment_cost_ground_distance_is_topmost_valid(three_classes):
    el = np.array([-0.4, -0.3, -0.2])
    r = 1.8 / np.sin(-el)
    col = make_column([r[0], r[1], np.nan], el, [[1.0, 0.0, 0.0]] * 3)
    p = _resolved(col, three_classes, ModelParams())
    _, dist = segment_cost(col, 1, 3, G, 0, p)
    assert dist == pytest.approx(r[1] * math.cos(el[1]))
    col_invalid = make_column([np.nan] * 3, el, np.full((3, 3), np.nan))
    assert segment_cost(col_invalid, 1, 3, G, 0, p)[1] is None


def test_object_distance_against_fine_grid(three_classes):
    """Distance candidates are the measured ranges; the continuous optimum may lie between them.

    For two inliers a distance ``s`` apart the best data point is worse than
    the midpoint by at most ``s**2 / (4 sigma**2)``; that bound is the
    documented tolerance of the candidate restriction.
    """
    ranges = [10.0, 10.1, 30.0]
    col = make_column(ranges, [-0.05, 0.0, 0.05], [[0.0, 1.0, 0.0]] * 3)
    p = _resolved(col, three_classes, ModelParams(outlier_rate=0.1, w_sem_lidar=0.0, w_sem_cam=0.0))
    e, r_hat = segment_cost(col, 1, 3, O, 1, p)
    assert r_hat in (10.0, 10.1)
    grid = np.arange(5.0, 35.0, 0.001)
    dist = lambda r: sum(mixture_energy(x - r, p.sigma_range_m, p.outlier_rate, p.outlier_range_max_m)
                         for x in ranges)
    fixed = e - dist(r_hat)
    fine = min(dist(r) for r in grid) + fixed
    assert fine <= e + 1e-9
    assert e - fine <= 0.1 ** 2 / (4 * p.sigma_range_m ** 2) + 1e-9
    # on the candidate set itself the choice is exact
    assert dist(r_hat) == pytest.approx(min(dist(r) for r in ranges), abs=1e-12)


@pytest.mark.parametrize("seed", range(40))
def test_dp_matches_exhaustive_labelling(seed):
    rng = np.random.default_rng(1000 + seed)
    h = int(rng.integers(1, 8))
    col = random_column(rng, h, 4)
    params = ModelParams(mc_cost=float(rng.choice([0.0, 0.5, 2.0, 8.0])))
    _, energy = solve_column(col, params, FOUR_LABELS)
    assert energy == pytest.approx(brute_force_column(col, FOUR_LABELS, params), abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 20))
def test_energy_audit_and_invariants(seed, h):
    rng = np.random.default_rng(seed)
    col = random_column(rng, h, 4)
    params = ModelParams(mc_cost=float(rng.uniform(0, 6)))
    stixels, energy = solve_column(col, params, FOUR_LABELS)
    assert consistency_check(stixels, h) is None
    p = _resolved(col, FOUR_LABELS, params)
    assert column_energy(col, stixels, p, FOUR_LABELS) == pytest.approx(energy, abs=1e-9)
    for s in stixels:
        if s.sclass == S:
            assert not np.isfinite(col.ranges[s.bottom - 1:s.top]).any()
        if s.sclass == O and s.distance is not None:
            assert s.distance in col.ranges[s.bottom - 1:s.top]
        # every stixel's energy is the minimum over its labels
        cost = direct_segment_cost(col, s.bottom - 1, s.top - 1, FOUR_LABELS.index(s.label), FOUR_LABELS, p)
        best = min(direct_segment_cost(col, s.bottom - 1, s.top - 1, l, FOUR_LABELS, p) for l in range(4))
        assert cost == pytest.approx(best, abs=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_stixel_count_never_grows_with_mc_cost(seed):
    rng = np.random.default_rng(seed)
    col = random_column(rng, 16, 4)
    counts = [len(solve_column(col, ModelParams(mc_cost=m), FOUR_LABELS)[0]) for m in np.linspace(0, 20, 21)]
    assert all(a >= b for a, b in zip(counts, counts[1:]))


def test_ties_prefer_fewer_stixels_then_label_order(three_classes):
    h = 5
    col = make_column(np.full(h, np.nan), np.linspace(-0.2, 0.2, h), np.full((h, 3), 1 / 3))
    p = ModelParams(w_geo=0.0, w_sem_cam=0.0, mc_cost=0.0)
    stixels, energy = solve_column(col, p, three_classes)
    assert [(s.bottom, s.top, s.label) for s in stixels] == [(1, h, "road")]
    assert energy == pytest.approx(h * math.log(3))


def test_ties_prefer_earliest_first_cut():
    # two classes, rows alternate so that one cut at either of two places costs the same
    classes = ClassSet.from_names(["a", "b"], {"a": O, "b": O})
    lid = [[1.0, 0.0], [0.5, 0.5], [0.0, 1.0]]
    col = make_column([np.nan] * 3, [-0.1, 0.0, 0.1], lid)
    p = ModelParams(w_geo=0.0, w_sem_cam=0.0, mc_cost=0.1)
    stixels, _ = solve_column(col, p, classes)
    assert [(s.bottom, s.top, s.label) for s in stixels] == [(1, 1, "a"), (2, 3, "b")]


def test_sky_never_covers_valid_returns():
    rng = np.random.default_rng(3)
    for _ in range(50):
        col = random_column(rng, 10, 4)
        lid = np.tile([0.0, 0.0, 0.0, 1.0], (10, 1))  # semantics insist on sky everywhere
        col = make_column(col.ranges, col.elevation, lid, lid)
        stixels, _ = solve_column(col, ModelParams(w_sem_lidar=50.0), FOUR_LABELS)
        for s in stixels:
            if s.sclass == S:
                assert np.isnan(col.ranges[s.bottom - 1:s.top]).all()


def test_without_geometry_sky_may_cover_valid_returns():
    col = make_column([5.0, 5.0], [-0.1, 0.0], [[0.0, 0.0, 0.0, 1.0]] * 2)
    stixels, _ = solve_column(col, ModelParams(w_geo=0.0), FOUR_LABELS)
    assert [s.sclass for s in stixels] == [S]


def _scan(seed, w=12, h=14):
    rng = np.random.default_rng(seed)
    return Scan.from_columns([random_column(rng, h, 4) for _ in range(w)], FOUR_LABELS)


def test_scan_equals_column_map():
    scan = _scan(1)
    params = ModelParams(mc_cost=3.0)
    sol = solve_scan(scan, params)
    for i, col in enumerate(scan.columns):
        stixels, e = solve_column(col, params, FOUR_LABELS)
        assert sol.world.columns[i].stixels == stixels.stixels
        assert sol.energies[i] == e


def test_identical_columns_give_identical_stixels():
    rng = np.random.default_rng(9)
    col = random_column(rng, 10, 4)
    world = solve_scan(Scan.from_columns([col, col], FOUR_LABELS), ModelParams()).world
    assert world.columns[0].stixels == world.columns[1].stixels


def test_empty_scan_and_zero_height():
    sol = solve_scan(Scan.from_columns([], FOUR_LABELS), ModelParams())
    assert len(sol.world) == 0 and sol.world.n_stixels == 0
    zero = Scan(np.zeros((2, 0)), np.zeros((2, 0)), np.zeros((2, 0)), np.zeros((2, 0, 4)),
                np.zeros((2, 0, 4)), np.zeros(2), FOUR_LABELS, FOUR_LABELS, FOUR_LABELS)
    with pytest.raises(ValueError, match="column 0"):
        solve_scan(zero, ModelParams())


@pytest.mark.parametrize("workers", [2, 3, 4, 7])
def test_parallel_equals_sequential(workers):
    scan = _scan(2, w=29)
    a = solve_scan(scan, ModelParams(), workers=1)
    b = solve_scan(scan, ModelParams(), workers=workers)
    assert a.world == b.world
    assert a.energies.tobytes() == b.energies.tobytes()


def test_candidate_cap_is_exact_when_not_binding():
    scan = _scan(4)
    exact = solve_scan(scan, ModelParams())
    capped = solve_scan(scan, ModelParams(), max_candidates=scan.height)
    assert exact.world == capped.world
    assert np.array_equal(exact.energies, capped.energies)


def test_capped_candidates_give_quadratic_work():
    def ops(h):
        rng = np.random.default_rng(h)
        col = random_column(rng, h, 4, p_invalid=0.0)
        return int(solve_scan(Scan.from_columns([col], FOUR_LABELS), ModelParams(), max_candidates=4).ops[0])

    r1, r2 = ops(64) / ops(32), ops(128) / ops(64)
    assert 3.5 < r1 < 4.5 and 3.5 < r2 < 4.5


def test_exact_candidates_give_cubic_candidate_work():
    def ops(h):
        rng = np.random.default_rng(h)
        col = random_column(rng, h, 4, p_invalid=0.0)
        return int(solve_scan(Scan.from_columns([col], FOUR_LABELS), ModelParams()).ops[0])

    assert 6.5 < ops(128) / ops(64) < 8.5
