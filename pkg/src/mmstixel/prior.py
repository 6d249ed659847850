"""Segmentation prior: a constant cost per cut and the contiguity constraints."""

from __future__ import annotations

from .model import ModelParams, StixelColumn


def complexity_energy(n_stixels: int, params: ModelParams) -> float:
    if n_stixels < 1:
        raise ValueError("a column holds at least one stixel")
    return params.mc_cost * (n_stixels - 1)


def consistency_check(column: StixelColumn, h: int) -> str | None:
    """``None`` if the stixels tile rows 1..h bottom to top without gaps, else the first violation."""
    stixels = column.stixels
    if not stixels:
        return "empty column"
    for i, s in enumerate(stixels):
        if s.top < s.bottom:
            return f"empty stixel at {i}"
    if stixels[0].bottom != 1:
        return "bottom not at row 1"
    for i in range(len(stixels) - 1):
        if stixels[i + 1].bottom != stixels[i].top + 1:
            return f"non-contiguous at {i}"
    if stixels[-1].top < h:
        return "top not reached"
    if stixels[-1].top > h:
        return "top exceeds column height"
    return None
