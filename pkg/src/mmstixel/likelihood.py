"""Per-measurement data energies.

Scalar functions operate on one hypothesis and one measurement and are the
reference formulation. :func:`row_energy_table` evaluates the same terms for
a whole scan at once and is what the solver consumes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .model import (INFINITE, Domain, ModelParams, PolarDepth, Scan, StructuralClass,
                    identity_map)
from .projection import column_gradients, gradient

#: floor on class probabilities before taking the log
P_MIN = 1e-6
#: upper clamp on P_S + P_G in the object sensor term
P_BOTH_MAX = 1.0 - 1e-9
#: the object sensor energy at that clamp
OBJECT_SENSOR_MAX = -math.log1p(-P_BOTH_MAX)

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class StixelHypothesis:
    sclass: StructuralClass
    label: int
    distance: float | None = None


def _tanh_prob(x: float, scale: float, shift: float) -> float:
    return (1.0 + math.tanh(scale * (x - shift))) / 2.0


def _softplus(z: float) -> float:
    return max(z, 0.0) + math.log1p(math.exp(-abs(z)))


def _neg_log_tanh_prob(x: float, scale: float, shift: float) -> float:
    """-log((1 + tanh(scale (x - shift))) / 2), without underflow in the tails.

    (1 + tanh u) / 2 is the logistic function of 2u, whose negative log is
    softplus(-2u).
    """
    return _softplus(-2.0 * scale * (x - shift))


def object_probability(phi: float, params: ModelParams) -> float:
    return _tanh_prob(phi, params.grad_steep, params.grad_shift)


def ground_gradient_energy(hyp: StixelHypothesis, d_j: PolarDepth, d_prev: PolarDepth | None,
                           params: ModelParams) -> float:
    if hyp.sclass == StructuralClass.SKY or d_prev is None:
        return 0.0
    phi = gradient(d_prev, d_j)
    if phi is None:
        return 0.0
    if hyp.sclass == StructuralClass.GROUND:
        # 1 - P_ob(phi) is the same logistic with the argument negated
        return _softplus(2.0 * params.grad_steep * (phi - params.grad_shift))
    return _neg_log_tanh_prob(phi, params.grad_steep, params.grad_shift)


def sky_probability(alpha_v: float, params: ModelParams) -> float:
    return _tanh_prob(alpha_v, params.sens_scale, params.sens_shift)


def ground_probability(alpha_v: float, params: ModelParams) -> float:
    return sky_probability(-alpha_v, params)


def sensor_energy(hyp: StixelHypothesis, d_j: PolarDepth, params: ModelParams) -> float:
    if d_j.valid:
        return INFINITE if hyp.sclass == StructuralClass.SKY else 0.0
    av = d_j.elevation_rad
    if hyp.sclass == StructuralClass.SKY:
        return _neg_log_tanh_prob(av, params.sens_scale, params.sens_shift)
    if hyp.sclass == StructuralClass.GROUND:
        return _neg_log_tanh_prob(-av, params.sens_scale, params.sens_shift)
    return _object_sensor_energy(av, params.sens_scale, params.sens_shift)


def _object_sensor_energy(av: float, scale: float, shift: float) -> float:
    """-log(1 - P_S - P_G), with 1 - P_S - P_G capped below at 1 - P_BOTH_MAX.

    With x = 2 scale (av + shift) and y = 2 scale (av - shift) the two
    probabilities are logistic(-x) and logistic(y), so 1 - P_S - P_G =
    logistic(x) - logistic(y) = exp(y) expm1(x - y) / ((1 + e^x)(1 + e^y)).
    Evaluating its log term by term avoids the cancellation of 1 - P_S - P_G
    near the horizon edges, where one probability is close to 1.
    """
    gap = 4.0 * scale * shift
    if gap <= 0.0:
        return OBJECT_SENSOR_MAX
    x = 2.0 * scale * (av + shift)
    y = 2.0 * scale * (av - shift)
    return min(_softplus(x) + _softplus(-y) - math.log(math.expm1(gap)), OBJECT_SENSOR_MAX)


def _logaddexp(a: float, b: float) -> float:
    if a == -math.inf:
        return b
    if b == -math.inf:
        return a
    m = max(a, b)
    return m + math.log(math.exp(a - m) + math.exp(b - m))


def mixture_energy(residual: float, sigma: float, p_out: float, support: float) -> float:
    """Negative log of a normal + uniform outlier mixture, shifted to 0 at zero residual."""
    log_peak = math.log1p(-p_out) - math.log(sigma) - _HALF_LOG_2PI
    log_unif = math.log(p_out) - math.log(support) if p_out > 0 else -math.inf
    log_norm = log_peak - 0.5 * (residual / sigma) ** 2
    return _logaddexp(log_peak, log_unif) - _logaddexp(log_norm, log_unif)


def ground_height(d: PolarDepth, params: ModelParams) -> float:
    """Height of a return above the flat ground plane."""
    return d.range_m * math.sin(d.elevation_rad) + params.sensor_height_m


def distance_energy(hyp: StixelHypothesis, d_j: PolarDepth, params: ModelParams) -> float:
    if not d_j.valid or hyp.sclass == StructuralClass.SKY:
        return 0.0
    if hyp.sclass == StructuralClass.OBJECT:
        if hyp.distance is None:
            raise ValueError("an OBJECT hypothesis needs a distance")
        return mixture_energy(d_j.range_m - hyp.distance, params.sigma_range_m,
                              params.outlier_rate, params.outlier_range_max_m)
    return mixture_energy(ground_height(d_j, params), params.sigma_height_m,
                          params.outlier_rate, params.outlier_range_max_m)


def semantic_energy(domain: Domain, hyp: StixelHypothesis, sem: np.ndarray | None,
                    params: ModelParams) -> float:
    if sem is None:
        return 0.0
    cmap = params.class_map(domain)
    q = float(sem[hyp.label]) if cmap is None else float(np.dot(sem, cmap[:, hyp.label]))
    return -math.log(max(q, P_MIN))


def measurement_energy(hyp: StixelHypothesis, d_j: PolarDepth, d_prev: PolarDepth | None,
                       lidar_sem: np.ndarray | None, cam_sem: np.ndarray | None,
                       params: ModelParams) -> float:
    e = 0.0
    if params.w_geo > 0:
        geo = (distance_energy(hyp, d_j, params) + ground_gradient_energy(hyp, d_j, d_prev, params)
               + sensor_energy(hyp, d_j, params))
        if geo == INFINITE:
            return INFINITE
        e += params.w_geo * geo
    if params.w_sem_lidar > 0:
        e += params.w_sem_lidar * semantic_energy(Domain.LIDAR, hyp, lidar_sem, params)
    if params.w_sem_cam > 0:
        e += params.w_sem_cam * semantic_energy(Domain.CAMERA, hyp, cam_sem, params)
    return e


def resolve_class_maps(params: ModelParams, scan: Scan) -> ModelParams:
    """Fill missing class maps from the scan, else by matching label names."""
    updates = {}
    for attr, src in (("lidar_class_map", scan.lidar_classes), ("cam_class_map", scan.cam_classes)):
        m = getattr(params, attr)
        if m is None:
            m = getattr(scan, attr)
        if m is None:
            try:
                m = identity_map(src, scan.stixel_classes)
            except KeyError as exc:
                raise ValueError(f"{attr} is required: {exc}") from None
        if m.shape != (len(src), len(scan.stixel_classes)):
            raise ValueError(f"{attr} has shape {m.shape}, expected {(len(src), len(scan.stixel_classes))}")
        updates[attr] = m
    return replace(params, **updates)


# -- vectorised form ---------------------------------------------------------

def _neg_log_tanh_prob_arr(x, scale, shift):
    return np.logaddexp(0.0, -2.0 * scale * (x - shift))


def _object_sensor_energy_arr(av, scale, shift):
    gap = 4.0 * scale * shift
    if gap <= 0.0:
        return np.full(np.shape(av), OBJECT_SENSOR_MAX)
    x = 2.0 * scale * (av + shift)
    y = 2.0 * scale * (av - shift)
    e = np.logaddexp(0.0, x) + np.logaddexp(0.0, -y) - math.log(math.expm1(gap))
    return np.minimum(e, OBJECT_SENSOR_MAX)


def mixture_energy_array(residual: np.ndarray, sigma: float, p_out: float, support: float) -> np.ndarray:
    log_peak = math.log1p(-p_out) - math.log(sigma) - _HALF_LOG_2PI
    log_unif = math.log(p_out) - math.log(support) if p_out > 0 else -np.inf
    log_norm = log_peak - 0.5 * (residual / sigma) ** 2
    return np.logaddexp(log_peak, log_unif) - np.logaddexp(log_norm, log_unif)


def _semantic_table(probs: np.ndarray, cmap: np.ndarray) -> np.ndarray:
    present = ~np.isnan(probs).any(axis=-1)
    q = np.where(present[..., None], np.nan_to_num(probs) @ cmap, 1.0)
    return -np.log(np.maximum(q, P_MIN))


def row_energy_table(scan: Scan, params: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    """Per-row energies of every stixel label for a whole scan.

    Returns ``(table, sky_forbidden)``: ``table`` has shape (W, h, L) and
    holds every weighted term except the OBJECT distance term, which depends
    on the stixel distance and is handled by the solver. ``sky_forbidden``
    (W, h) marks rows where a SKY label is excluded by the hard constraint;
    the table holds only the finite part there.
    """
    params = resolve_class_maps(params, scan)
    classes = scan.stixel_classes
    sclass = np.array([int(s) for s in classes.structural])
    is_ground = sclass == StructuralClass.GROUND
    is_object = sclass == StructuralClass.OBJECT
    is_sky = sclass == StructuralClass.SKY

    ranges, elev = scan.ranges, scan.elevation
    valid = np.isfinite(ranges)
    w, h = ranges.shape
    table = np.zeros((w, h, len(classes)))

    if params.w_geo > 0:
        geo = np.zeros_like(table)
        # ground model on the slope to the row below
        phi = column_gradients(ranges, elev)
        has_phi = ~np.isnan(phi)
        phi0 = np.where(has_phi, phi, params.grad_shift)
        e_ground = np.where(has_phi, _neg_log_tanh_prob_arr(-phi0, params.grad_steep, -params.grad_shift), 0.0)
        e_object = np.where(has_phi, _neg_log_tanh_prob_arr(phi0, params.grad_steep, params.grad_shift), 0.0)
        geo[..., is_ground] += e_ground[..., None]
        geo[..., is_object] += e_object[..., None]

        # sensor term on invalid rows
        inv = ~valid
        e_sky = _neg_log_tanh_prob_arr(elev, params.sens_scale, params.sens_shift)
        e_gnd = _neg_log_tanh_prob_arr(-elev, params.sens_scale, params.sens_shift)
        geo[..., is_sky] += np.where(inv, e_sky, 0.0)[..., None]
        geo[..., is_ground] += np.where(inv, e_gnd, 0.0)[..., None]
        geo[..., is_object] += np.where(inv, _object_sensor_energy_arr(elev, params.sens_scale,
                                                                       params.sens_shift), 0.0)[..., None]

        # height above the ideal ground plane
        height = np.where(valid, np.nan_to_num(ranges) * np.sin(elev) + params.sensor_height_m, 0.0)
        e_height = np.where(valid, mixture_energy_array(height, params.sigma_height_m, params.outlier_rate,
                                                        params.outlier_range_max_m), 0.0)
        geo[..., is_ground] += e_height[..., None]
        table += params.w_geo * geo
        sky_forbidden = valid & is_sky.any()
    else:
        sky_forbidden = np.zeros((w, h), dtype=bool)

    if params.w_sem_lidar > 0:
        table += params.w_sem_lidar * _semantic_table(scan.lidar_probs, params.lidar_class_map)
    if params.w_sem_cam > 0:
        table += params.w_sem_cam * _semantic_table(scan.cam_probs, params.cam_class_map)
    return table, sky_forbidden
