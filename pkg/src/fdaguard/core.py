"""Shared data structures for functional samples on a common design grid.

Curves are stored as rows of a matrix, one column per design point. All
integrals are trapezoidal sums against the grid weights, so every notion
built on top of this module is exact for piecewise-linear integrands.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

__all__ = [
    "DesignGrid",
    "FunctionalSample",
    "MultivariateFunctionalSample",
    "RankMatrix",
    "DepthResult",
    "RANK_SIDES",
    "pointwise_ranks",
    "empirical_quantile",
    "integrate",
    "depth_result",
    "extremeness_ranks",
    "default_ids",
]

#: Valid orientations for pointwise ranks: which tail counts as extreme.
RANK_SIDES = ("lower", "upper", "two-sided")


def _trapezoid_weights(points: np.ndarray) -> np.ndarray:
    w = np.empty_like(points)
    w[0] = (points[1] - points[0]) / 2.0
    w[-1] = (points[-1] - points[-2]) / 2.0
    if len(points) > 2:
        w[1:-1] = (points[2:] - points[:-2]) / 2.0
    return w


@dataclass(frozen=True)
class DesignGrid:
    """Ordered design points with trapezoidal quadrature weights.

    Parameters
    ----------
    points : array-like
        Strictly increasing abscissae ``t_1 < ... < t_m`` with ``m >= 2``.

    Attributes
    ----------
    weights : ndarray
        Trapezoidal weights; they always sum to the interval length
        ``t_m - t_1``.
    """

    points: np.ndarray
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1 or pts.size < 2:
            raise ValueError("grid needs at least 2 points")
        if not np.all(np.isfinite(pts)):
            raise ValueError("grid points must be finite")
        if not np.all(np.diff(pts) > 0):
            raise ValueError("grid points must be strictly increasing")
        pts.setflags(write=False)
        w = _trapezoid_weights(pts)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @classmethod
    def equidistant(cls, m: int, start: float = 0.0, stop: float = 1.0) -> "DesignGrid":
        """Grid of `m` equally spaced points on ``[start, stop]``."""
        return cls(np.linspace(start, stop, m))

    @property
    def m(self) -> int:
        return len(self.points)

    @property
    def span(self) -> float:
        """Length of the design interval."""
        return float(self.points[-1] - self.points[0])

    def __len__(self) -> int:
        return len(self.points)


def default_ids(n: int, prefix: str = "c") -> tuple[str, ...]:
    """Zero-padded curve labels, lexicographically ordered like 0..n-1."""
    width = len(str(max(n - 1, 0)))
    return tuple(f"{prefix}{i:0{width}d}" for i in range(n))


@dataclass(frozen=True)
class FunctionalSample:
    """``n`` univariate curves observed on a shared :class:`DesignGrid`.

    ``values`` has one row per curve and one column per design point; all
    entries must be finite and the ids unique.
    """

    grid: DesignGrid
    values: np.ndarray
    ids: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError("values must be a 2-d curve matrix")
        if v.shape[0] < 1:
            raise ValueError("sample needs at least one curve")
        if v.shape[1] != len(self.grid):
            raise ValueError(
                f"curve length {v.shape[1]} does not match grid size {len(self.grid)}"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("curve values must be finite")
        ids = tuple(self.ids) if self.ids else default_ids(v.shape[0])
        if len(ids) != v.shape[0]:
            raise ValueError("number of ids must match number of curves")
        if len(set(ids)) != len(ids):
            raise ValueError("curve ids must be unique")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "ids", ids)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]

    def with_values(self, values: np.ndarray, grid: DesignGrid | None = None) -> "FunctionalSample":
        """New sample carrying the same ids (and grid unless replaced)."""
        return FunctionalSample(grid if grid is not None else self.grid, values, self.ids)


@dataclass(frozen=True)
class MultivariateFunctionalSample:
    """``n`` curves with ``d``-dimensional responses on a shared grid.

    ``values`` has shape ``(n, m, d)``; every response dimension is observed
    on the same design points.
    """

    grid: DesignGrid
    values: np.ndarray
    ids: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 3:
            raise ValueError("values must be a 3-d array (curves, points, dimensions)")
        if v.shape[0] < 1 or v.shape[2] < 1:
            raise ValueError("sample needs at least one curve and one dimension")
        if v.shape[1] != len(self.grid):
            raise ValueError("curve length does not match grid size")
        if not np.all(np.isfinite(v)):
            raise ValueError("curve values must be finite")
        ids = tuple(self.ids) if self.ids else default_ids(v.shape[0])
        if len(ids) != v.shape[0]:
            raise ValueError("number of ids must match number of curves")
        if len(set(ids)) != len(ids):
            raise ValueError("curve ids must be unique")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "ids", ids)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]

    @property
    def d(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True)
class RankMatrix:
    """Tie-averaged pointwise ranks and their one- or two-sided version.

    ``raw[i, j]`` is the rank of curve ``i`` at design point ``j`` (smallest
    value gets rank 1, ties averaged). ``sided`` maps raw ranks according to
    ``side``:

    - ``"lower"``: small values are extreme, ``R = r``
    - ``"upper"``: large values are extreme, ``R = n + 1 - r``
    - ``"two-sided"``: ``R = min(r, n + 1 - r)``
    """

    raw: np.ndarray
    sided: np.ndarray
    side: str

    @property
    def n(self) -> int:
        return self.raw.shape[0]


@dataclass(frozen=True)
class DepthResult:
    """Per-curve depth or outlyingness values with the ordering they induce.

    ``polarity`` is ``"depth"`` when larger values mean deeper curves and
    ``"outlyingness"`` when larger values mean more extreme curves.
    ``order`` lists row indices from the deepest curve to the shallowest;
    ties are broken by ascending curve id so reports are reproducible.
    """

    values: np.ndarray
    polarity: str
    order: np.ndarray
    ids: tuple[str, ...]

    @property
    def n(self) -> int:
        return len(self.values)

    def deepest(self) -> int:
        """Row index of the deepest curve."""
        return int(self.order[0])


def depth_result(values: np.ndarray, polarity: str, ids: Sequence[str]) -> DepthResult:
    """Build a :class:`DepthResult`, ordering deepest-first with id tie-break."""
    if polarity not in ("depth", "outlyingness"):
        raise ValueError(f"unknown polarity {polarity!r}")
    values = np.asarray(values, dtype=float)
    ids = tuple(ids)
    if len(ids) != len(values):
        raise ValueError("ids and values length mismatch")
    # lexsort: last key is primary. id rank makes the tie-break total.
    id_rank = np.argsort(np.argsort(np.asarray(ids, dtype=object)))
    key = -values if polarity == "depth" else values
    # inf outlyingness sorts last (most extreme) as required by sentinel rules
    order = np.lexsort((id_rank, key))
    values.setflags(write=False)
    return DepthResult(values=values, polarity=polarity, order=order, ids=ids)


def extremeness_ranks(result: DepthResult) -> np.ndarray:
    """Tie-averaged ranks with 1 = most extreme curve under `result`."""
    key = result.values if result.polarity == "depth" else -result.values
    finite = np.isfinite(key)
    if np.all(finite):
        return rankdata(key, method="average")
    # infinite outlyingness ranks ahead of every finite value
    key = key.copy()
    lo = key[finite].min() if finite.any() else 0.0
    key[~finite] = lo - 1.0
    return rankdata(key, method="average")


def pointwise_ranks(sample: FunctionalSample, side: str = "two-sided") -> RankMatrix:
    """Tie-averaged ranks of the sample at each design point.

    The smallest value at a point gets raw rank 1; ties are averaged. The
    sided ranks orient the raw ranks so that small ``R`` means extreme in
    the requested direction.
    """
    if side not in RANK_SIDES:
        raise ValueError(f"side must be one of {RANK_SIDES}, got {side!r}")
    raw = rankdata(sample.values, method="average", axis=0)
    n = sample.n
    if side == "lower":
        sided = raw
    elif side == "upper":
        sided = n + 1.0 - raw
    else:
        sided = np.minimum(raw, n + 1.0 - raw)
    raw.setflags(write=False)
    return RankMatrix(raw=raw, sided=sided, side=side)


def empirical_quantile(values: np.ndarray, p: float) -> float:
    """Quantile by linear interpolation of the sorted values at ``p (n-1)``."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("empty sample")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability must lie in [0, 1], got {p}")
    return float(np.quantile(values, p))


def integrate(curve: np.ndarray, grid: DesignGrid) -> float:
    """Trapezoidal integral of a curve sampled on `grid`."""
    curve = np.asarray(curve, dtype=float)
    if curve.shape != (len(grid),):
        raise ValueError(
            f"curve length {curve.shape} does not match grid size {len(grid)}"
        )
    return float(curve @ grid.weights)
