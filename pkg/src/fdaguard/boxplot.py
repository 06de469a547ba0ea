"""Functional boxplot: central region, fences, and magnitude-outlier flags.

The boxplot orders the curves center-outward by a depth notion, takes the
envelope of the deepest half as the central region, and inflates that
region by a factor to obtain detection fences. A curve is flagged when it
strictly exceeds a fence at one or more design points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import depth as depth_mod
from .core import DepthResult, FunctionalSample

__all__ = [
    "FunctionalBoxplot",
    "FLAG_SIDES",
    "central_region",
    "fences",
    "flag_outliers",
    "functional_boxplot",
]

FLAG_SIDES = ("two-sided", "upper")


@dataclass(frozen=True)
class FunctionalBoxplot:
    """All descriptive pieces of one functional boxplot."""

    depth_used: str
    depth: DepthResult
    median_curve: np.ndarray
    central_lower: np.ndarray
    central_upper: np.ndarray
    fence_lower: np.ndarray
    fence_upper: np.ndarray
    outlier_ids: tuple[str, ...]
    factor: float
    side: str


def central_region(
    sample: FunctionalSample, depth: DepthResult
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Envelope of the deepest half of the sample.

    Returns ``(lower, upper, median_curve)`` where the envelope spans the
    ``ceil(n / 2)`` deepest curves and the median curve is the single
    deepest one.
    """
    if sample.n < 2:
        raise ValueError("central region needs n >= 2")
    half = sample.n - sample.n // 2  # ceil(n / 2)
    chosen = depth.order[:half]
    block = sample.values[chosen]
    return block.min(axis=0), block.max(axis=0), sample.values[depth.order[0]].copy()


def fences(
    lower: np.ndarray, upper: np.ndarray, factor: float = 1.5
) -> tuple[np.ndarray, np.ndarray]:
    """Inflate the central region by `factor` times its vertical range."""
    if factor < 0:
        raise ValueError("fence factor must be nonnegative")
    height = upper - lower
    return lower - factor * height, upper + factor * height


def flag_outliers(
    sample: FunctionalSample,
    fence_lower: np.ndarray,
    fence_upper: np.ndarray,
    side: str = "two-sided",
) -> tuple[str, ...]:
    """Ids of curves strictly beyond a fence at one or more points.

    ``side="upper"`` checks only the upper fence (used for outlyingness
    curves, where only large values are anomalous). Touching a fence does
    not flag: degenerate zero-width regions must not flag everything.
    """
    if side not in FLAG_SIDES:
        raise ValueError(f"side must be one of {FLAG_SIDES}, got {side!r}")
    above = (sample.values > fence_upper[None, :]).any(axis=1)
    if side == "two-sided":
        below = (sample.values < fence_lower[None, :]).any(axis=1)
        flagged = above | below
    else:
        flagged = above
    return tuple(sample.ids[i] for i in np.nonzero(flagged)[0])


def functional_boxplot(
    sample: FunctionalSample,
    notion: str = "mbd",
    factor: float = 1.5,
    side: str = "two-sided",
) -> FunctionalBoxplot:
    """Build the functional boxplot for a sample under one depth notion.

    For the side-aware notions (``erld``, ``dq``) the depth is computed
    with the matching orientation: upper-only flagging ranks only large
    values as extreme.
    """
    depth_side = "upper" if side == "upper" else "two-sided"
    result = depth_mod.compute(sample, notion, side=depth_side)
    lower, upper, median_curve = central_region(sample, result)
    f_lo, f_up = fences(lower, upper, factor)
    ids = flag_outliers(sample, f_lo, f_up, side=side)
    return FunctionalBoxplot(
        depth_used=notion,
        depth=result,
        median_curve=median_curve,
        central_lower=lower,
        central_upper=upper,
        fence_lower=f_lo,
        fence_upper=f_up,
        outlier_ids=ids,
        factor=factor,
        side=side,
    )
