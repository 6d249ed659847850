"""Exact column-wise MAP segmentation by dynamic programming.

For every column the solver minimises

    sum over stixels of (summed row energies) + mc_cost * (n_stixels - 1)

over all contiguous segmentations and label assignments. Row energies that do
not depend on the stixel distance are accumulated as prefix sums over rows
(one per label). The OBJECT distance term is handled with a pairwise matrix
``D[j, k] = E_dist(r_j - r_k)`` whose column prefix sums give the cost of
every candidate distance ``r_k`` over any row interval in O(1).

Ties between equal-energy segmentations are broken by fewer stixels, then by
the lowest first differing cut, then by class-set label order. The DP runs
from the top row down so that the first cut is decided last.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from typing import NamedTuple

import numba
import numpy as np

from .likelihood import StixelHypothesis, measurement_energy, resolve_class_maps, row_energy_table
from .model import (INFINITE, ClassSet, ModelParams, PolarDepth, Scan, ScanColumn, Stixel,
                    StixelColumn, StixelWorld, StructuralClass)
from .prior import complexity_energy

#: relative/absolute slack under which two energies count as tied
TIE_TOL = 1e-12

_GROUND, _OBJECT, _SKY = int(StructuralClass.GROUND), int(StructuralClass.OBJECT), int(StructuralClass.SKY)


@numba.njit(cache=True, nogil=True)
def _mixture(res, sigma, p_out, support):
    log_peak = math.log1p(-p_out) - math.log(sigma) - 0.5 * math.log(2.0 * math.pi)
    log_norm = log_peak - 0.5 * (res / sigma) ** 2
    if p_out <= 0.0:
        return log_peak - log_norm
    log_unif = math.log(p_out) - math.log(support)
    m0 = max(log_peak, log_unif)
    m1 = max(log_norm, log_unif)
    top = m0 + math.log(math.exp(log_peak - m0) + math.exp(log_unif - m0))
    bot = m1 + math.log(math.exp(log_norm - m1) + math.exp(log_unif - m1))
    return top - bot


@numba.njit(cache=True, nogil=True)
def _segment_table(table, forbidden, ranges, label_class, w_geo, sigma, p_out, support, max_cand,
                   cost, dist_idx):
    """Fill ``cost[b, t, l]`` and ``dist_idx[b, t]`` for all 0-based rows b <= t.

    Returns the number of label and candidate evaluations performed.
    """
    h, n_labels = table.shape
    prefix = np.zeros((h + 1, n_labels))
    nforb = np.zeros(h + 1, dtype=np.int64)
    nvalid = np.zeros(h + 1, dtype=np.int64)
    vidx = np.empty(h, dtype=np.int64)
    for j in range(h):
        for l in range(n_labels):
            prefix[j + 1, l] = prefix[j, l] + table[j, l]
        nforb[j + 1] = nforb[j] + (1 if forbidden[j] else 0)
        valid = not math.isnan(ranges[j])
        if valid:
            vidx[nvalid[j]] = j
        nvalid[j + 1] = nvalid[j] + (1 if valid else 0)

    has_object = False
    for l in range(n_labels):
        if label_class[l] == 1:
            has_object = True
    pdist = np.zeros((h + 1, h))
    if has_object:
        for j in range(h):
            for k in range(h):
                d = 0.0
                if not math.isnan(ranges[j]) and not math.isnan(ranges[k]):
                    d = _mixture(ranges[j] - ranges[k], sigma, p_out, support)
                pdist[j + 1, k] = pdist[j, k] + d

    ops = 0
    for b in range(h):
        for t in range(b, h):
            best_obj = 0.0
            best_k = -1
            if has_object:
                lo = nvalid[b]
                n = nvalid[t + 1] - lo
                m = n
                if max_cand > 0 and n > max_cand:
                    m = max_cand
                for i in range(m):
                    if m == n:
                        k = vidx[lo + i]
                    elif m == 1:
                        k = vidx[lo + (n - 1) // 2]
                    else:
                        k = vidx[lo + (i * (n - 1)) // (m - 1)]
                    c = pdist[t + 1, k] - pdist[b, k]
                    if best_k < 0 or c < best_obj:
                        best_obj = c
                        best_k = k
                ops += m
            dist_idx[b, t] = best_k
            sky_blocked = nforb[t + 1] - nforb[b] > 0
            for l in range(n_labels):
                c = prefix[t + 1, l] - prefix[b, l]
                lc = label_class[l]
                if lc == 2 and sky_blocked:
                    c = np.inf
                elif lc == 1:
                    c += w_geo * best_obj
                cost[b, t, l] = c
            ops += n_labels
    return ops


@numba.njit(cache=True, nogil=True)
def _tied(a, b):
    return abs(a - b) <= 1e-12 * (1.0 + max(abs(a), abs(b)))


@numba.njit(cache=True, nogil=True)
def _solve_one(table, forbidden, ranges, label_class, w_geo, sigma, p_out, support, mc_cost, max_cand,
               seg_top, seg_label, seg_dist):
    """DP over one column; writes the segmentation bottom-up, returns (n_segments, energy, ops)."""
    h, n_labels = table.shape
    cost = np.empty((h, h, n_labels))
    dist_idx = np.empty((h, h), dtype=np.int64)
    ops = _segment_table(table, forbidden, ranges, label_class, w_geo, sigma, p_out, support, max_cand,
                         cost, dist_idx)

    # best label per segment, lowest index on ties
    seg_best = np.empty((h, h))
    seg_arg = np.empty((h, h), dtype=np.int64)
    for b in range(h):
        for t in range(b, h):
            best = np.inf
            arg = -1
            for l in range(n_labels):
                c = cost[b, t, l]
                if arg < 0 or (c < best and not _tied(c, best)):
                    best = c
                    arg = l
            seg_best[b, t] = best
            seg_arg[b, t] = arg

    # suffix DP: energy[b] = best energy of rows b..h-1
    energy = np.zeros(h + 1)
    count = np.zeros(h + 1, dtype=np.int64)
    nxt = np.empty(h, dtype=np.int64)
    for b in range(h - 1, -1, -1):
        best = np.inf
        best_n = 0
        best_t = -1
        for t in range(b, h):
            c = seg_best[b, t] + energy[t + 1]
            if t + 1 < h:
                c += mc_cost
            n = 1 + count[t + 1]
            if best_t < 0:
                take = True
            elif _tied(c, best):
                take = n < best_n
            else:
                take = c < best
            if take:
                best = c
                best_n = n
                best_t = t
        energy[b] = best
        count[b] = best_n
        nxt[b] = best_t

    n_seg = 0
    b = 0
    while b < h:
        t = nxt[b]
        seg_top[n_seg] = t
        seg_label[n_seg] = seg_arg[b, t]
        seg_dist[n_seg] = dist_idx[b, t]
        n_seg += 1
        b = t + 1
    return n_seg, energy[0], ops


@numba.njit(cache=True, nogil=True)
def _solve_batch(table, forbidden, ranges, label_class, w_geo, sigma, p_out, support, mc_cost, max_cand,
                 seg_top, seg_label, seg_dist, n_seg, energies, ops):
    for i in range(table.shape[0]):
        n, e, o = _solve_one(table[i], forbidden[i], ranges[i], label_class, w_geo, sigma, p_out, support,
                             mc_cost, max_cand, seg_top[i], seg_label[i], seg_dist[i])
        n_seg[i] = n
        energies[i] = e
        ops[i] = o


class ScanSolution(NamedTuple):
    world: StixelWorld
    energies: np.ndarray
    ops: np.ndarray


def _ground_distance(ranges: np.ndarray, elevation: np.ndarray, b: int, t: int) -> float | None:
    for j in range(t, b - 1, -1):
        if np.isfinite(ranges[j]):
            return float(ranges[j] * math.cos(elevation[j]))
    return None


def _build_column(index, classes: ClassSet, ranges, elevation, tops, labels, dists) -> StixelColumn:
    stixels = []
    b = 0
    for t, l, k in zip(tops, labels, dists):
        name = classes.names[l]
        sclass = classes.structural[l]
        if sclass == StructuralClass.SKY:
            r = INFINITE
        elif sclass == StructuralClass.OBJECT:
            r = float(ranges[k]) if k >= 0 else None
        else:
            r = _ground_distance(ranges, elevation, b, t)
        stixels.append(Stixel(b + 1, int(t) + 1, r, name, sclass))
        b = int(t) + 1
    return StixelColumn(tuple(stixels), index)


def solve_scan(scan: Scan, params: ModelParams, workers: int = 1,
               max_candidates: int | None = None) -> ScanSolution:
    """Solve every column of ``scan``.

    ``workers > 1`` splits the columns over threads; the result is identical
    to the sequential run. ``max_candidates`` caps the OBJECT distance
    candidates per segment (evenly spaced over its valid rows); ``None``
    keeps every valid range and the solution exact.
    """
    w, h = scan.ranges.shape
    classes = scan.stixel_classes
    if w == 0:
        return ScanSolution(StixelWorld((), h, classes), np.zeros(0), np.zeros(0, dtype=np.int64))
    if h == 0:
        raise ValueError("column 0: cannot solve a column of height 0")
    params = resolve_class_maps(params, scan)
    table, forbidden = row_energy_table(scan, params)
    label_class = np.array([int(s) for s in classes.structural], dtype=np.int64)
    ranges = np.ascontiguousarray(scan.ranges)

    seg_top = np.zeros((w, h), dtype=np.int64)
    seg_label = np.zeros((w, h), dtype=np.int64)
    seg_dist = np.zeros((w, h), dtype=np.int64)
    n_seg = np.zeros(w, dtype=np.int64)
    energies = np.zeros(w)
    ops = np.zeros(w, dtype=np.int64)
    scalars = (params.w_geo, params.sigma_range_m, params.outlier_rate, params.outlier_range_max_m,
               params.mc_cost, int(max_candidates or 0))

    def run(sl: slice):
        _solve_batch(table[sl], forbidden[sl], ranges[sl], label_class, *scalars,
                     seg_top[sl], seg_label[sl], seg_dist[sl], n_seg[sl], energies[sl], ops[sl])

    if workers <= 1 or w == 1:
        run(slice(0, w))
    else:
        bounds = np.linspace(0, w, min(workers, w) + 1).astype(int)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:])]))

    columns = []
    for i in range(w):
        n = n_seg[i]
        columns.append(_build_column(i, classes, scan.ranges[i], scan.elevation[i],
                                     seg_top[i, :n], seg_label[i, :n], seg_dist[i, :n]))
    return ScanSolution(StixelWorld(tuple(columns), h, classes), energies, ops)


def _single_scan(column: ScanColumn, classes: ClassSet | None, lidar_classes: ClassSet | None,
                 cam_classes: ClassSet | None, params: ModelParams) -> Scan:
    classes = classes or ClassSet.default()
    lidar_classes = lidar_classes or classes
    cam_classes = cam_classes or classes
    return Scan.from_columns([column], lidar_classes, cam_classes, classes)


def solve_column(column: ScanColumn, params: ModelParams, classes: ClassSet | None = None, *,
                 lidar_classes: ClassSet | None = None, cam_classes: ClassSet | None = None,
                 max_candidates: int | None = None) -> tuple[StixelColumn, float]:
    if column.height == 0:
        raise ValueError("cannot solve a column of height 0")
    scan = _single_scan(column, classes, lidar_classes, cam_classes, params)
    sol = solve_scan(scan, params, max_candidates=max_candidates)
    return sol.world.columns[0], float(sol.energies[0])


# -- direct evaluation -------------------------------------------------------

def _depth(column: ScanColumn, j: int) -> PolarDepth:
    r = column.ranges[j]
    return PolarDepth(float(r) if np.isfinite(r) else None, float(column.azimuth[j]), float(column.elevation[j]))


def _sem(row: np.ndarray) -> np.ndarray | None:
    return None if np.isnan(row).any() else row


def rows_energy(column: ScanColumn, b: int, t: int, hyp: StixelHypothesis, params: ModelParams) -> float:
    """Sum of measurement energies over 1-based rows b..t, one row at a time."""
    total = 0.0
    for j in range(b - 1, t):
        prev = _depth(column, j - 1) if j > 0 else None
        e = measurement_energy(hyp, _depth(column, j), prev, _sem(column.lidar_probs[j]),
                               _sem(column.cam_probs[j]), params)
        if e == INFINITE:
            return INFINITE
        total += e
    return total


def segment_cost(column: ScanColumn, b: int, t: int, sclass: StructuralClass, label: int,
                 params: ModelParams) -> tuple[float, float | None]:
    """Energy of rows b..t (1-based, inclusive) as one stixel, with its distance.

    ``params`` must already carry the class maps needed for the column's
    semantic distributions (identity by index otherwise).
    """
    h = column.height
    if not 1 <= b <= t <= h:
        raise ValueError(f"rows {b}..{t} outside 1..{h}")
    sclass = StructuralClass(sclass)
    if sclass == StructuralClass.SKY:
        return rows_energy(column, b, t, StixelHypothesis(sclass, label, INFINITE), params), INFINITE
    if sclass == StructuralClass.GROUND:
        return (rows_energy(column, b, t, StixelHypothesis(sclass, label), params),
                _ground_distance(column.ranges, column.elevation, b - 1, t - 1))
    best, best_r = INFINITE, None
    candidates = [float(column.ranges[j]) for j in range(b - 1, t) if np.isfinite(column.ranges[j])]
    if not candidates:
        return rows_energy(column, b, t, StixelHypothesis(sclass, label, 1.0), params), None
    for r in candidates:
        e = rows_energy(column, b, t, StixelHypothesis(sclass, label, r), params)
        if best_r is None or e < best:
            best, best_r = e, r
    return best, best_r


def column_energy(column: ScanColumn, stixels: StixelColumn, params: ModelParams, classes: ClassSet) -> float:
    """Total energy of a given segmentation, recomputed row by row."""
    total = complexity_energy(len(stixels), params)
    for s in stixels:
        label = classes.index(s.label)
        r = s.distance if s.distance is not None else 1.0
        total += rows_energy(column, s.bottom, s.top, StixelHypothesis(s.sclass, label, r), params)
    return total
