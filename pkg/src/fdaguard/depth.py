"""Depth and outlyingness notions for ordering functional samples.

Six notions are provided. ``mbd``, ``fd2`` and ``erld`` are rank-based;
``linf_depth``, ``rmd`` and ``dq`` are distance-based. All return a
:class:`~fdaguard.core.DepthResult` whose ``order`` sorts the curves from
the center outward; ``polarity`` records whether large values mean deep
(``mbd``, ``fd2``, ``linf_depth``, ``erld``) or extreme (``rmd``, ``dq``).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .core import (
    DepthResult,
    FunctionalSample,
    RankMatrix,
    depth_result,
    empirical_quantile,
    pointwise_ranks,
)

__all__ = [
    "OutlyingnessDecomposition",
    "MCDEstimate",
    "mbd",
    "fd2",
    "linf_depth",
    "sdo_pointwise",
    "directional_outlyingness",
    "mo_vo",
    "mcd",
    "rmd",
    "erld",
    "dq",
    "compute",
    "DEPTH_NOTIONS",
]

#: Tags accepted by :func:`compute`.
DEPTH_NOTIONS = ("mbd", "fd2", "linf", "rmd", "erld", "dq")


@dataclass(frozen=True)
class OutlyingnessDecomposition:
    """Magnitude (``mo``) and variation (``vo``) of the outlyingness curve.

    Curves whose outlyingness hits the infinite degenerate-scale sentinel
    carry ``inf`` in both components and are treated as maximally outlying
    downstream.
    """

    mo: np.ndarray
    vo: np.ndarray


@dataclass(frozen=True)
class MCDEstimate:
    """Location/scatter of the minimum covariance determinant subset."""

    location: np.ndarray
    scatter: np.ndarray
    support: np.ndarray

    @property
    def h(self) -> int:
        return len(self.support)


# ---------------------------------------------------------------------------
# integrated rank depth


def mbd(sample: FunctionalSample) -> DepthResult:
    """Modified band depth from tie-averaged pointwise ranks.

    The pointwise value ``2 (n r - r^2 + r - 1) / (n (n + 1))`` counts the
    two-curve bands covering the curve at that design point; integrating it
    over the grid and dividing by the interval length gives the depth.
    """
    if sample.n < 2:
        raise ValueError("degenerate sample: modified band depth needs n >= 2")
    n = sample.n
    r = pointwise_ranks(sample, side="lower").raw
    pointwise = 2.0 * (n * r - r * r + r - 1.0) / (n * (n + 1.0))
    values = pointwise @ sample.grid.weights / sample.grid.span
    return depth_result(values, "depth", sample.ids)


# ---------------------------------------------------------------------------
# second-order integrated depth


def _halfspace_depth_2d(queries: np.ndarray, cloud: np.ndarray) -> np.ndarray:
    """Exact bivariate halfspace depth of each query point in `cloud`.

    For every query the minimum over closed halfplanes through the point is
    found by an angular sweep: the count of cloud points in the halfplane
    only changes when the halfplane normal crosses a direction perpendicular
    to some query-to-point vector, so evaluating between consecutive
    critical directions is exact.
    """
    n = cloud.shape[0]
    out = np.empty(queries.shape[0])
    for q, point in enumerate(queries):
        delta = cloud - point
        nonzero = (delta[:, 0] != 0.0) | (delta[:, 1] != 0.0)
        rest = delta[nonzero]
        coincident = n - rest.shape[0]
        if rest.shape[0] == 0:
            out[q] = 1.0
            continue
        ang = np.arctan2(rest[:, 1], rest[:, 0])
        crit = np.sort(np.unique(np.concatenate([ang + np.pi / 2, ang - np.pi / 2])))
        gaps = np.empty_like(crit)
        gaps[:-1] = (crit[:-1] + crit[1:]) / 2.0
        gaps[-1] = crit[-1] + (crit[0] + 2.0 * np.pi - crit[-1]) / 2.0
        inside = np.cos(ang[None, :] - gaps[:, None]) >= 0.0
        out[q] = (coincident + inside.sum(axis=1).min()) / n
    return out


def fd2(sample: FunctionalSample) -> DepthResult:
    """Second-order integrated depth with exact bivariate halfspace depth.

    Averages, over all ordered design-point pairs ``(t_j, t_j')`` with
    ``j <= j'``, the halfspace depth of ``(X_i(t_j), X_i(t_j'))`` within the
    empirical cloud of all curves at that pair. Pair weights are the
    products of the grid weights, normalized to sum to one.
    """
    if sample.n < 3:
        raise ValueError("second-order integrated depth needs n >= 3")
    v = sample.values
    w = sample.grid.weights
    m = sample.m
    totals = np.zeros(sample.n)
    weight_sum = 0.0
    for j in range(m):
        for k in range(j, m):
            cloud = np.column_stack([v[:, j], v[:, k]])
            pair_w = w[j] * w[k]
            totals += pair_w * _halfspace_depth_2d(cloud, cloud)
            weight_sum += pair_w
    return depth_result(totals / weight_sum, "depth", sample.ids)


# ---------------------------------------------------------------------------
# sup-distance depth


def linf_depth(sample: FunctionalSample) -> DepthResult:
    """Depth from the average sup-distance to the sample curves.

    ``1 / (1 + mean_k sup_t |X_i(t) - X_k(t)|)``, averaging over all curves
    including the curve itself, which keeps the values in ``(0, 1]``.
    """
    v = sample.values
    n = v.shape[0]
    mean_dist = np.empty(n)
    # chunked pairwise sup distances keep memory at O(chunk * n * m)
    chunk = max(1, int(4e6 // max(v.size, 1)))
    for start in range(0, n, chunk):
        block = v[start : start + chunk]
        d = np.abs(block[:, None, :] - v[None, :, :]).max(axis=2)
        mean_dist[start : start + chunk] = d.mean(axis=1)
    return depth_result(1.0 / (1.0 + mean_dist), "depth", sample.ids)


# ---------------------------------------------------------------------------
# directional outlyingness and the robust magnitude/shape distance


def sdo_pointwise(values: np.ndarray, x: float) -> float:
    """Univariate Stahel-Donoho outlyingness ``|x - median| / MAD``.

    When the MAD degenerates to zero the value is 0 for ``x`` at the median
    and ``inf`` otherwise, so fully tied samples still induce an ordering.
    """
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        raise ValueError("pointwise outlyingness needs at least 2 values")
    med = float(np.median(values))
    mad = float(np.median(np.abs(values - med)))
    if mad == 0.0:
        return 0.0 if x == med else math.inf
    return abs(x - med) / mad


def directional_outlyingness(sample: FunctionalSample) -> np.ndarray:
    """Signed pointwise outlyingness ``(X_i(t) - median(t)) / MAD(t)``.

    The sign carries the direction of the deviation from the cross-sectional
    median (the univariate unit vector). Columns with zero MAD produce 0 for
    curves at the median and ``+-inf`` otherwise.
    """
    if sample.n < 2:
        raise ValueError("directional outlyingness needs n >= 2")
    v = sample.values
    med = np.median(v, axis=0)
    mad = np.median(np.abs(v - med), axis=0)
    dev = v - med
    out = np.empty_like(dev)
    ok = mad > 0.0
    out[:, ok] = dev[:, ok] / mad[ok]
    bad = ~ok
    if bad.any():
        with np.errstate(divide="ignore", invalid="ignore"):
            out[:, bad] = np.where(dev[:, bad] == 0.0, 0.0, np.inf * np.sign(dev[:, bad]))
    return out


def _decompose_outlyingness(o: np.ndarray, sample: FunctionalSample) -> OutlyingnessDecomposition:
    w = sample.grid.weights
    span = sample.grid.span
    finite = np.all(np.isfinite(o), axis=1)
    mo = np.full(sample.n, np.inf)
    vo = np.full(sample.n, np.inf)
    if finite.any():
        of = o[finite]
        mo_f = of @ w / span
        vo_f = ((of - mo_f[:, None]) ** 2) @ w / span
        mo[finite] = mo_f
        vo[finite] = vo_f
    return OutlyingnessDecomposition(mo=mo, vo=vo)


def mo_vo(sample: FunctionalSample) -> OutlyingnessDecomposition:
    """Mean and variance of the directional outlyingness curve.

    ``mo`` is the grid-weighted mean of the outlyingness curve and ``vo``
    its grid-weighted variance around ``mo``; together they separate level
    from shape outlyingness. Curves hit by the infinite sentinel get
    ``inf`` in both components.
    """
    return _decompose_outlyingness(directional_outlyingness(sample), sample)


def _subset_estimate(points: np.ndarray, idx: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    sub = points[idx]
    loc = sub.mean(axis=0)
    centered = sub - loc
    scatter = centered.T @ centered / (len(idx) - 1)
    sign, logdet = np.linalg.slogdet(scatter)
    det = sign * np.exp(logdet) if sign > 0 else -np.inf if sign < 0 else 0.0
    return loc, scatter, det


def _concentration_steps(points: np.ndarray, idx: np.ndarray, h: int, max_iter: int = 100):
    """Iterate take-h-closest steps until the subset stabilizes."""
    current = np.sort(idx)
    loc, scatter, det = _subset_estimate(points, current)
    for _ in range(max_iter):
        if det <= 0 or not np.isfinite(det):
            break
        try:
            sol = np.linalg.solve(scatter, (points - loc).T)
        except np.linalg.LinAlgError:
            break
        d2 = np.einsum("ij,ji->i", points - loc, sol)
        new = np.sort(np.argpartition(d2, h - 1)[:h])
        if np.array_equal(new, current):
            break
        current = new
        loc, scatter, det = _subset_estimate(points, current)
    return current, loc, scatter, det


def mcd(
    points: np.ndarray,
    h: int,
    *,
    method: str = "auto",
    n_starts: int = 500,
    seed: int = 0,
) -> MCDEstimate:
    """Minimum covariance determinant estimate over ``h``-point subsets.

    For ``n <= 12`` (or ``method="exhaustive"``) every subset is scored;
    otherwise seeded random elemental starts are refined by concentration
    steps until the subset stabilizes, keeping the subset with the smallest
    covariance determinant. No reweighting or consistency factor is applied:
    the scatter is used only through the ordering of Mahalanobis distances.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2:
        raise ValueError("points must be a 2-d array")
    n, p = points.shape
    if not (n > h >= p + 1):
        raise ValueError(f"need n > h >= p + 1, got n={n}, h={h}, p={p}")
    if method not in ("auto", "exhaustive", "iterative"):
        raise ValueError(f"unknown method {method!r}")
    exhaustive = method == "exhaustive" or (method == "auto" and n <= 12)

    best = None  # (det, support, loc, scatter)
    if exhaustive:
        for combo in itertools.combinations(range(n), h):
            idx = np.array(combo)
            loc, scatter, det = _subset_estimate(points, idx)
            if det > 0 and (best is None or det < best[0]):
                best = (det, idx, loc, scatter)
    else:
        rng = np.random.default_rng(seed)
        seen: set[bytes] = set()
        for _ in range(n_starts):
            start = rng.choice(n, size=p + 1, replace=False)
            _, _, det0 = _subset_estimate(points, start)
            grow = start
            while det0 <= 0 and len(grow) < n:
                extra = rng.choice(np.setdiff1d(np.arange(n), grow), size=1)
                grow = np.concatenate([grow, extra])
                _, _, det0 = _subset_estimate(points, grow)
            if det0 <= 0:
                continue
            loc0, scatter0, _ = _subset_estimate(points, grow)
            sol = np.linalg.solve(scatter0, (points - loc0).T)
            d2 = np.einsum("ij,ji->i", points - loc0, sol)
            idx = np.sort(np.argpartition(d2, h - 1)[:h])
            idx, loc, scatter, det = _concentration_steps(points, idx, h)
            key = idx.tobytes()
            if key in seen:
                continue
            seen.add(key)
            if det > 0 and (best is None or det < best[0]):
                best = (det, idx, loc, scatter)
    if best is None:
        raise ValueError("degenerate scatter: no h-subset has positive-definite covariance")
    _, support, location, scatter = best
    return MCDEstimate(location=location, scatter=scatter, support=support)


def rmd(sample: FunctionalSample) -> DepthResult:
    """Robust Mahalanobis distance of the ``(mo, vo)`` pairs.

    The covariance is the MCD estimate with ``h = floor((n + 3) / 2)``
    (the standard choice for two dimensions). Curves whose outlyingness
    carries the infinite sentinel are excluded from the fit and assigned
    infinite distance, ranking them strictly most outlying.
    """
    if sample.n < 6:
        raise ValueError("robust Mahalanobis distance needs n >= 6")
    dec = mo_vo(sample)
    z = np.column_stack([dec.mo, dec.vo])
    finite = np.all(np.isfinite(z), axis=1)
    values = np.full(sample.n, np.inf)
    zf = z[finite]
    n_f = zf.shape[0]
    h = (n_f + 3) // 2
    if not (n_f > h >= 3):
        raise ValueError("degenerate scatter: too few finite outlyingness pairs")
    est = mcd(zf, h)
    centered = zf - est.location
    try:
        sol = np.linalg.solve(est.scatter, centered.T)
    except np.linalg.LinAlgError as exc:
        raise ValueError("degenerate scatter") from exc
    values[finite] = np.einsum("ij,ji->i", centered, sol)
    return depth_result(values, "outlyingness", sample.ids)


# ---------------------------------------------------------------------------
# extreme rank length depth


def erld(sample: FunctionalSample | RankMatrix, side: str = "two-sided") -> DepthResult:
    """Extreme rank length depth: lexical order of sorted pointwise ranks.

    Each curve's sided ranks are sorted ascending; a curve precedes another
    when its sorted vector is lexicographically smaller. The depth is the
    fraction of curves strictly preceding, so small values are extreme and
    identical rank vectors share the same depth.
    """
    if isinstance(sample, RankMatrix):
        ranks = sample
        ids = tuple(f"r{i}" for i in range(ranks.n))
    else:
        if sample.n < 2:
            raise ValueError("extreme rank length depth needs n >= 2")
        ranks = pointwise_ranks(sample, side=side)
        ids = sample.ids
    ordered = np.sort(ranks.sided, axis=1)
    # unique(axis=0) returns rows lexicographically sorted, which matches the
    # precedence order on ascending-sorted rank vectors
    _, inverse, counts = np.unique(ordered, axis=0, return_inverse=True, return_counts=True)
    preceding = np.concatenate([[0], np.cumsum(counts)[:-1]])
    values = preceding[inverse] / ranks.n
    return depth_result(values, "depth", ids)


# ---------------------------------------------------------------------------
# directional quantile


def dq(
    sample: FunctionalSample,
    side: str = "two-sided",
    reference: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None,
) -> DepthResult:
    """Largest pointwise deviation scaled by the 2.5% tail quantile gap.

    At each design point the deviation from the pointwise mean is divided
    by the distance between the mean and the 97.5% quantile (deviations
    above the mean) or the 2.5% quantile (below), so that either tail
    scores positive. The two-sided value is the maximum of this ratio over
    the grid; one-sided variants keep only the requested branch. Points
    where the needed quantile gap vanishes are skipped.

    The mean and quantile curves are estimated from the sample unless the
    generating law is known, in which case `reference` supplies them
    directly as ``(mean, lower, upper)`` curves.
    """
    if sample.n < 3:
        raise ValueError("directional quantile needs n >= 3")
    if side not in ("lower", "upper", "two-sided"):
        raise ValueError(f"side must be 'lower', 'upper' or 'two-sided', got {side!r}")
    v = sample.values
    if reference is None:
        mean = v.mean(axis=0)
        upper = np.quantile(v, 0.975, axis=0)
        lower = np.quantile(v, 0.025, axis=0)
    else:
        mean, lower, upper = (np.asarray(c, dtype=float) for c in reference)
        if not mean.shape == lower.shape == upper.shape == (sample.m,):
            raise ValueError("reference curves must match the design grid")
    d_up = np.abs(upper - mean)
    d_lo = np.abs(lower - mean)

    if side == "upper":
        keep = d_up > 0.0
        scores = (v[:, keep] - mean[keep]) / d_up[keep]
    elif side == "lower":
        keep = d_lo > 0.0
        scores = (mean[keep] - v[:, keep]) / d_lo[keep]
    else:
        keep = (d_up > 0.0) & (d_lo > 0.0)
        dev = v[:, keep] - mean[keep]
        scores = np.where(dev >= 0.0, dev / d_up[keep], -dev / d_lo[keep])
    if not keep.any():
        raise ValueError("degenerate spread: quantiles equal the mean at every point")
    return depth_result(scores.max(axis=1), "outlyingness", sample.ids)


# ---------------------------------------------------------------------------
# dispatch


def compute(sample: FunctionalSample, notion: str, side: str = "two-sided") -> DepthResult:
    """Evaluate a depth notion by tag; `side` applies to ``erld``/``dq``."""
    if notion == "mbd":
        return mbd(sample)
    if notion == "fd2":
        return fd2(sample)
    if notion == "linf":
        return linf_depth(sample)
    if notion == "rmd":
        return rmd(sample)
    if notion == "erld":
        return erld(sample, side=side)
    if notion == "dq":
        return dq(sample, side=side)
    raise ValueError(f"unknown depth notion {notion!r}; expected one of {DEPTH_NOTIONS}")
