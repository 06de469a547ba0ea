"""Curve transformations that turn shape outlyingness into magnitude.

Each transformation maps a functional sample to a new one. Sequences are
applied cumulatively: every step acts on the previous step's output, so
e.g. ``normalize`` in the canonical ``t0, t1, t2`` sequence standardizes
the centered curves. Step kinds:

====  ==========================================================
t0    identity (raw curves; only allowed as the first step)
t1    center: subtract each curve's grid-weighted mean
t2    normalize: divide each centered curve by its L2 norm
d1    first-order divided differences (midpoint grid)
d2    second-order divided differences (one extra differencing
      when it directly follows ``d1``)
r     monotone registration toward the cross-sectional median
o     pointwise outlyingness of multivariate curves
====  ==========================================================
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import DesignGrid, FunctionalSample, MultivariateFunctionalSample, integrate

__all__ = [
    "TransformStep",
    "RegistrationMap",
    "STEP_KINDS",
    "parse_steps",
    "center",
    "normalize",
    "difference",
    "register",
    "outlyingness_curve",
    "apply_sequence",
    "stage_names",
]

STEP_KINDS = ("t0", "t1", "t2", "d1", "d2", "r", "o")


@dataclass(frozen=True)
class TransformStep:
    """One step of a transformation sequence.

    ``lambda_w`` tunes the registration penalty (``r`` only); ``n_directions``
    and ``seed`` control the projection set of the outlyingness transform
    (``o`` only).
    """

    kind: str
    lambda_w: float | None = None
    n_directions: int = 500
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in STEP_KINDS:
            raise ValueError(f"unknown transform step {self.kind!r}; expected one of {STEP_KINDS}")
        if self.lambda_w is not None and self.lambda_w < 0:
            raise ValueError("registration penalty must be nonnegative")
        if self.n_directions < 0:
            raise ValueError("direction count must be nonnegative")


def parse_steps(spec: str | Sequence[str | TransformStep]) -> list[TransformStep]:
    """Normalize a comma list like ``"t0,t1,t2"`` into transform steps."""
    if isinstance(spec, str):
        parts: Sequence[str | TransformStep] = [s.strip() for s in spec.split(",") if s.strip()]
    else:
        parts = spec
    steps = [p if isinstance(p, TransformStep) else TransformStep(str(p).lower()) for p in parts]
    if not steps:
        raise ValueError("transformation sequence must not be empty")
    return steps


@dataclass(frozen=True)
class RegistrationMap:
    """Strictly increasing piecewise-linear warp with fixed endpoints."""

    points: np.ndarray
    warped: np.ndarray

    def __post_init__(self) -> None:
        if np.any(np.diff(self.warped) <= 0):
            raise ValueError("warp must be strictly increasing")

    def __call__(self, t: np.ndarray) -> np.ndarray:
        return np.interp(t, self.points, self.warped)


# ---------------------------------------------------------------------------
# vertical transforms


def center(sample: FunctionalSample) -> FunctionalSample:
    """Shift every curve so its grid-weighted mean becomes zero."""
    means = sample.values @ sample.grid.weights / sample.grid.span
    return sample.with_values(sample.values - means[:, None])


def normalize(sample: FunctionalSample) -> FunctionalSample:
    """Divide every curve by its grid-weighted L2 norm.

    Intended for centered curves (the sequence validator enforces this);
    a zero-norm curve cannot be normalized and raises with its id.
    """
    sq_norms = (sample.values**2) @ sample.grid.weights
    zero = sq_norms <= 0.0
    if zero.any():
        bad = sample.ids[int(np.argmax(zero))]
        raise ValueError(f"constant curve cannot be normalized: id={bad!r}")
    return sample.with_values(sample.values / np.sqrt(sq_norms)[:, None])


def difference(sample: FunctionalSample, order: int = 1) -> FunctionalSample:
    """Divided differences of each curve, on the midpoint grid.

    Order 1 maps ``m`` points to ``m - 1`` slopes; order 2 applies the same
    operator twice. Scaling by the grid step keeps the output comparable
    across grid resolutions.
    """
    if order not in (1, 2):
        raise ValueError(f"difference order must be 1 or 2, got {order}")
    out = sample
    for _ in range(order):
        if out.m < 2:
            raise ValueError("too few design points to difference")
        pts = out.grid.points
        dv = np.diff(out.values, axis=1) / np.diff(pts)
        mid = (pts[:-1] + pts[1:]) / 2.0
        out = FunctionalSample(DesignGrid(mid), dv, out.ids)
    return out


# ---------------------------------------------------------------------------
# registration

_REFINE = 4  # subdivisions per grid interval for the warp search


def register(
    sample: FunctionalSample, penalty: float | None = None
) -> tuple[FunctionalSample, list[RegistrationMap]]:
    """Warp every curve toward the cross-sectional median template.

    Each warp is a strictly increasing piecewise-linear map with fixed
    endpoints, found by dynamic programming over monotone alignments of the
    design grid onto a refined grid. The objective is the grid-weighted
    squared error to the template plus ``penalty`` times the squared
    deviation of the warp from the identity; the default penalty is
    ``0.01 * (value range)^2``. Warped values are linearly interpolated
    from the original curve.
    """
    if sample.m < 3:
        raise ValueError("registration needs at least 3 design points")
    v = sample.values
    pts = sample.grid.points
    w = sample.grid.weights
    template = np.median(v, axis=0)
    value_range = float(v.max() - v.min())
    lam = 0.01 * value_range**2 if penalty is None else float(penalty)
    # infinitesimal identity bias so exact cost ties resolve to the identity
    lam_eff = lam + 1e-12 * (1.0 + value_range**2)

    m = sample.m
    refined = np.empty((m - 1) * _REFINE + 1)
    for j in range(m - 1):
        refined[j * _REFINE : (j + 1) * _REFINE] = np.linspace(
            pts[j], pts[j + 1], _REFINE, endpoint=False
        )
    refined[-1] = pts[-1]
    big = refined.size

    warped_values = np.empty_like(v)
    maps: list[RegistrationMap] = []
    penalty_grid = (refined[None, :] - pts[:, None]) ** 2  # (m, big)
    for i in range(sample.n):
        curve_ref = np.interp(refined, pts, v[i])
        data_cost = w[:, None] * (curve_ref[None, :] - template[:, None]) ** 2
        cost = data_cost + lam_eff * penalty_grid
        # DP over strictly increasing alignments; k must leave room for the
        # remaining design points and end at the last refined point
        dp = np.full(big, np.inf)
        dp[0] = cost[0, 0]
        back = np.zeros((m, big), dtype=np.int32)
        idx_range = np.arange(big)
        for j in range(1, m):
            prefix = np.minimum.accumulate(dp)
            # latest index attaining the running minimum (deterministic)
            arg = np.maximum.accumulate(np.where(dp == prefix, idx_range, -1)).astype(np.int32)
            new_dp = np.full(big, np.inf)
            lo = j  # strict increase forces index >= j
            hi = big - (m - 1 - j)
            ks = np.arange(lo, hi)
            new_dp[ks] = prefix[ks - 1] + cost[j, ks]
            back[j, ks] = arg[ks - 1]
            dp = new_dp
        # recover the alignment from the fixed right endpoint
        idx = np.empty(m, dtype=np.int32)
        idx[-1] = big - 1
        for j in range(m - 1, 0, -1):
            idx[j - 1] = back[j, idx[j]]
        warp = refined[idx]
        warped_values[i] = np.interp(warp, pts, v[i])
        maps.append(RegistrationMap(points=pts.copy(), warped=warp))
    return sample.with_values(warped_values), maps


# ---------------------------------------------------------------------------
# multivariate outlyingness curves


def _projected_sdo(proj: np.ndarray) -> np.ndarray:
    """Per-observation |x - median| / MAD along one projection, nan if MAD=0."""
    med = np.median(proj, axis=0)
    mad = np.median(np.abs(proj - med), axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.abs(proj - med) / mad
    out[:, mad == 0.0] = np.nan
    return out


def outlyingness_curve(
    msample: MultivariateFunctionalSample,
    n_directions: int = 500,
    seed: int = 0,
) -> FunctionalSample:
    """Pointwise projection outlyingness of multivariate curves.

    At every design point the Stahel-Donoho outlyingness of each
    ``d``-variate observation is approximated as the supremum of
    ``|u'x - median(u'x)| / MAD(u'x)`` over the ``d`` canonical axes plus
    ``n_directions`` seeded uniform unit directions. Directions with zero
    MAD at a point are skipped; if every direction degenerates there, the
    univariate sentinel rule applies (0 at the multivariate median, ``inf``
    otherwise).
    """
    if msample.n < 2:
        raise ValueError("outlyingness curve needs n >= 2")
    v = msample.values  # (n, m, d)
    n, m, d = v.shape
    if d == 1:
        dirs = np.ones((1, 1))
    else:
        rng = np.random.default_rng(seed)
        extra = rng.standard_normal((n_directions, d))
        extra /= np.linalg.norm(extra, axis=1, keepdims=True)
        dirs = np.vstack([np.eye(d), extra])

    best = np.full((n, m), np.nan)
    for u in dirs:
        proj = v @ u  # (n, m)
        cand = _projected_sdo(proj)
        best = np.where(np.isnan(best), cand, np.where(np.isnan(cand), best, np.maximum(best, cand)))
    degenerate = np.isnan(best)
    if degenerate.any():
        # all projections collapsed at these points: sentinel by coordinates
        cols = np.unique(np.nonzero(degenerate)[1])
        for j in cols:
            med = np.median(v[:, j, :], axis=0)
            at_median = np.all(v[:, j, :] == med, axis=1)
            best[:, j] = np.where(at_median, 0.0, np.inf)
    out = np.asarray(best)
    if not np.all(np.isfinite(out)):
        # FunctionalSample requires finite entries; cap sentinel curves at a
        # value dominating every finite one so downstream ordering holds
        finite_max = out[np.isfinite(out)].max(initial=0.0)
        out = np.where(np.isinf(out), finite_max + 1e6 * (1.0 + abs(finite_max)), out)
    return FunctionalSample(msample.grid, out, msample.ids)


# ---------------------------------------------------------------------------
# sequences


def _check_sequence(steps: list[TransformStep], multivariate: bool) -> None:
    for pos, step in enumerate(steps):
        if step.kind == "t0" and pos != 0:
            raise ValueError(f"identity step only allowed first (step {pos + 1})")
        if step.kind == "t2" and (pos == 0 or steps[pos - 1].kind != "t1"):
            raise ValueError(f"normalize requires centered input (step {pos + 1} is 't2')")
        if step.kind == "o" and pos != 0:
            raise ValueError(f"outlyingness transform only allowed first (step {pos + 1})")
    if multivariate and steps[0].kind != "o":
        raise ValueError(
            "multivariate input requires the outlyingness transform 'o' as the first step"
        )
    if not multivariate and steps[0].kind == "o":
        raise ValueError("outlyingness transform 'o' needs multivariate input")


def apply_sequence(
    sample: FunctionalSample | MultivariateFunctionalSample,
    steps: str | Sequence[str | TransformStep],
) -> list[FunctionalSample]:
    """Apply a transformation sequence cumulatively, returning every stage.

    The k-th output is the composition of the first k steps applied to the
    input; ``t0`` keeps the raw curves. A ``d2`` step directly after ``d1``
    applies one more differencing so that stage reaches the second-order
    divided differences; standalone ``d2`` differences twice.
    """
    steps = parse_steps(steps)
    multivariate = isinstance(sample, MultivariateFunctionalSample)
    _check_sequence(steps, multivariate)

    stages: list[FunctionalSample] = []
    current: FunctionalSample | MultivariateFunctionalSample = sample
    for pos, step in enumerate(steps):
        if step.kind == "t0":
            pass
        elif step.kind == "t1":
            current = center(current)
        elif step.kind == "t2":
            current = normalize(current)
        elif step.kind == "d1":
            current = difference(current, 1)
        elif step.kind == "d2":
            follows_d1 = pos > 0 and steps[pos - 1].kind == "d1"
            current = difference(current, 1 if follows_d1 else 2)
        elif step.kind == "r":
            current, _ = register(current, penalty=step.lambda_w)
        elif step.kind == "o":
            current = outlyingness_curve(
                current, n_directions=step.n_directions, seed=step.seed
            )
        if isinstance(current, MultivariateFunctionalSample):
            raise ValueError(
                f"step {pos + 1} ({step.kind!r}) leaves the sample multivariate; "
                "apply 'o' first"
            )
        stages.append(current)
    return stages


_STAGE_NAMES = {
    "t1": "amplitude",
    "t2": "pattern",
    "d1": "first-order",
    "d2": "second-order",
}


def stage_names(steps: str | Sequence[str | TransformStep]) -> list[str]:
    """Taxonomy label for each stage of a sequence.

    Stage 0 flags are magnitude outliers; later stages get the canonical
    name of their step kind, or a generic positional label for steps
    without one (registration, outlyingness).
    """
    steps = parse_steps(steps)
    names = []
    for pos, step in enumerate(steps):
        if pos == 0 and step.kind == "t0":
            names.append("magnitude")
        else:
            names.append(_STAGE_NAMES.get(step.kind, f"G{pos}-shape"))
    return names
