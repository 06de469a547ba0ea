"""Sequential detection with taxonomy, joint ranking, and envelope testing.

``sequential_detect`` runs the functional boxplot on every stage of a
transformation sequence and labels each outlier with the first stage that
flags it, which partitions the flags into magnitude and typed shape
outliers. ``joint_rank`` merges the per-stage orderings into one ranking,
and ``global_envelope_test`` turns that ranking into an exact Monte Carlo
test with simultaneous acceptance bands per stage.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from . import depth as depth_mod
from .boxplot import FunctionalBoxplot, functional_boxplot
from .core import (
    DepthResult,
    DesignGrid,
    FunctionalSample,
    MultivariateFunctionalSample,
    depth_result,
    empirical_quantile,
    extremeness_ranks,
)
from .transform import TransformStep, apply_sequence, parse_steps, stage_names

__all__ = [
    "TaxonomyLabel",
    "StageRecord",
    "OutlierReport",
    "JointRankVector",
    "EnvelopeTestResult",
    "sequential_detect",
    "joint_rank",
    "global_envelope_test",
]


@dataclass(frozen=True)
class TaxonomyLabel:
    """Outlier class: the first stage that flagged the curve, by name."""

    stage: int
    name: str


@dataclass(frozen=True)
class Evidence:
    """Why a curve was flagged: stage, depth value, and worst exceedance."""

    stage: int
    depth_value: float
    exceedance: float
    location: float


@dataclass(frozen=True)
class StageRecord:
    """One transformation stage with its boxplot."""

    stage: int
    step: str
    name: str
    sample: FunctionalSample
    boxplot: FunctionalBoxplot


@dataclass(frozen=True)
class OutlierReport:
    """Result of sequential detection over a transformation sequence."""

    stages: tuple[StageRecord, ...]
    labels: dict[str, TaxonomyLabel]
    evidence: dict[str, Evidence]
    ids: tuple[str, ...]

    @property
    def outlier_ids(self) -> tuple[str, ...]:
        return tuple(i for i in self.ids if i in self.labels)

    def label_of(self, curve_id: str) -> TaxonomyLabel | None:
        return self.labels.get(curve_id)


@dataclass(frozen=True)
class JointRankVector:
    """Per-stage extremeness ranks of one curve (1 = most extreme)."""

    curve_id: str
    ranks: np.ndarray


@dataclass(frozen=True)
class EnvelopeStage:
    """Simultaneous acceptance band for one transformation stage."""

    stage: int
    step: str
    grid: DesignGrid
    lower: np.ndarray
    upper: np.ndarray
    observed: np.ndarray


@dataclass(frozen=True)
class EnvelopeTestResult:
    """Joint-ranking Monte Carlo test outcome."""

    measure: DepthResult
    observed_measure: float
    p_value: float
    alpha: float
    rejected: bool
    stages: tuple[EnvelopeStage, ...]
    n_retained: int


def _exceedance(
    curve: np.ndarray,
    grid: DesignGrid,
    fence_lower: np.ndarray,
    fence_upper: np.ndarray,
    side: str,
) -> tuple[float, float]:
    over = curve - fence_upper
    if side == "two-sided":
        over = np.maximum(over, fence_lower - curve)
    j = int(np.argmax(over))
    return float(over[j]), float(grid.points[j])


def sequential_detect(
    sample: FunctionalSample | MultivariateFunctionalSample,
    steps: str | Sequence[str | TransformStep],
    notion: str = "linf",
    factor: float = 1.5,
    side: str | Sequence[str] = "two-sided",
) -> OutlierReport:
    """Detect and classify outliers over a transformation sequence.

    A functional boxplot is built on each cumulative stage; a curve newly
    flagged at stage k (and at no earlier stage) gets that stage's taxonomy
    label, so every outlier carries exactly one label. ``side`` may be a
    single flagging mode or one per stage.
    """
    steps = parse_steps(steps)
    first_expected = "o" if isinstance(sample, MultivariateFunctionalSample) else "t0"
    if steps[0].kind != first_expected:
        raise ValueError(f"sequence must begin with {first_expected!r}, got {steps[0].kind!r}")
    if isinstance(side, str):
        sides = [side] * len(steps)
    else:
        sides = list(side)
        if len(sides) != len(steps):
            raise ValueError("need one flagging side per stage")

    try:
        stage_samples = apply_sequence(sample, steps)
    except ValueError as exc:
        raise ValueError(f"transformation sequence failed: {exc}") from exc
    names = stage_names(steps)

    records: list[StageRecord] = []
    labels: dict[str, TaxonomyLabel] = {}
    evidence: dict[str, Evidence] = {}
    for k, (step, stage_sample, name, stage_side) in enumerate(
        zip(steps, stage_samples, names, sides)
    ):
        try:
            fbp = functional_boxplot(stage_sample, notion, factor=factor, side=stage_side)
        except ValueError as exc:
            raise ValueError(f"stage {k} ({step.kind!r}): {exc}") from exc
        records.append(StageRecord(stage=k, step=step.kind, name=name, sample=stage_sample, boxplot=fbp))
        index = {cid: i for i, cid in enumerate(stage_sample.ids)}
        for cid in fbp.outlier_ids:
            if cid in labels:
                continue  # earlier stages win
            i = index[cid]
            exc_val, exc_loc = _exceedance(
                stage_sample.values[i],
                stage_sample.grid,
                fbp.fence_lower,
                fbp.fence_upper,
                stage_side,
            )
            labels[cid] = TaxonomyLabel(stage=k, name=name)
            evidence[cid] = Evidence(
                stage=k,
                depth_value=float(fbp.depth.values[i]),
                exceedance=exc_val,
                location=exc_loc,
            )
    return OutlierReport(
        stages=tuple(records), labels=labels, evidence=evidence, ids=stage_samples[0].ids
    )


# ---------------------------------------------------------------------------
# joint ranking


def _stage_rank_matrix(
    sample: FunctionalSample,
    steps: list[TransformStep],
    notion: str,
    references=None,
) -> tuple[np.ndarray, list[FunctionalSample]]:
    stages = apply_sequence(sample, steps)
    ranks = np.empty((sample.n, len(stages)))
    for k, stage_sample in enumerate(stages):
        ref = references[k] if references is not None else None
        if ref is not None and notion == "dq":
            result = depth_mod.dq(stage_sample, side="two-sided", reference=ref)
        else:
            result = depth_mod.compute(stage_sample, notion, side="two-sided")
        ranks[:, k] = extremeness_ranks(result)
    return ranks, stages


def _lower_dq_on_ranks(ranks: np.ndarray) -> np.ndarray:
    """One-sided (small = extreme) quantile measure on rank vectors.

    Rank columns without variation carry no ordering information and are
    dropped; with every column degenerate all curves tie at 0.
    """
    n, k = ranks.shape
    means = ranks.mean(axis=0)
    lows = np.array([empirical_quantile(ranks[:, j], 0.025) for j in range(k)])
    gap = means - lows
    keep = gap > 0.0
    if not keep.any():
        return np.zeros(n)
    scores = (means[keep] - ranks[:, keep]) / gap[keep]
    return scores.max(axis=1)


def _lower_erld_on_ranks(ranks: np.ndarray) -> np.ndarray:
    ordered = np.sort(ranks, axis=1)
    _, inverse, counts = np.unique(ordered, axis=0, return_inverse=True, return_counts=True)
    preceding = np.concatenate([[0], np.cumsum(counts)[:-1]])
    return preceding[inverse] / ranks.shape[0]


def joint_rank(
    sample: FunctionalSample | MultivariateFunctionalSample,
    steps: str | Sequence[str | TransformStep],
    notion: str = "dq",
    measure: str = "dq",
    stage_references=None,
) -> tuple[list[JointRankVector], DepthResult]:
    """Merge per-stage depth orderings into one joint ordering.

    Every stage of the sequence is ranked by the chosen depth notion
    (rank 1 = most extreme, ties averaged). The resulting rank vectors are
    then ordered by a one-sided notion in which small ranks are extreme:
    the directional quantile measure by default, or the extreme rank
    length order (``measure="erld"``). When the generating law is known,
    `stage_references` supplies per-stage ``(mean, lower, upper)`` curves
    for the quantile notion (entries may be ``None`` to estimate).
    """
    if measure not in ("dq", "erld"):
        raise ValueError(f"joint measure must be 'dq' or 'erld', got {measure!r}")
    steps = parse_steps(steps)
    if stage_references is not None and len(stage_references) != len(steps):
        raise ValueError("need one reference entry (or None) per stage")
    base = sample if isinstance(sample, FunctionalSample) else None
    ranks, stages = _stage_rank_matrix(sample, steps, notion, stage_references)
    ids = stages[0].ids
    if base is None:
        base = stages[0]
    if ranks.shape[0] < 3 and measure == "dq":
        raise ValueError("joint ranking with the quantile measure needs n >= 3")

    vectors = [JointRankVector(curve_id=cid, ranks=ranks[i]) for i, cid in enumerate(ids)]
    if ranks.shape[1] == 1:
        # single stage: the joint ordering is the stage ordering itself
        joint = depth_result(ranks[:, 0], "depth", ids)
        return vectors, joint
    if measure == "dq":
        joint = depth_result(_lower_dq_on_ranks(ranks), "outlyingness", ids)
    else:
        joint = depth_result(_lower_erld_on_ranks(ranks), "depth", ids)
    return vectors, joint


# ---------------------------------------------------------------------------
# global envelope test


def global_envelope_test(
    observed: np.ndarray | FunctionalSample,
    nulls: FunctionalSample,
    steps: str | Sequence[str | TransformStep] = "t0",
    notion: str = "dq",
    alpha: float = 0.05,
    measure: str = "dq",
) -> EnvelopeTestResult:
    """Exact Monte Carlo test of one curve against null replicates.

    The observed curve is pooled with the ``s`` null curves, the pool is
    jointly ranked over the transformation stages, and the p-value is the
    fraction of pooled curves at least as extreme as the observed one
    (ties included, so ``p >= 1/(s+1)``). The acceptance band per stage is
    the pointwise envelope of the ``ceil((1-alpha)(s+1))`` least extreme
    curves.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie strictly between 0 and 1")
    if isinstance(observed, FunctionalSample):
        if observed.n != 1:
            raise ValueError("observed sample must contain exactly one curve")
        if not np.array_equal(observed.grid.points, nulls.grid.points):
            raise ValueError("grid mismatch between observed and null curves")
        obs_values = observed.values[0]
    else:
        obs_values = np.asarray(observed, dtype=float)
        if obs_values.shape != (nulls.m,):
            raise ValueError("grid mismatch between observed and null curves")
    s = nulls.n
    if s + 1 < 1.0 / alpha:
        raise ValueError(f"need at least {int(np.ceil(1 / alpha)) - 1} null curves for alpha={alpha}")

    ids = ("observed",) + tuple(f"null-{cid}" for cid in nulls.ids)
    pooled = FunctionalSample(
        nulls.grid, np.vstack([obs_values[None, :], nulls.values]), ids
    )
    steps = parse_steps(steps)
    _, joint = joint_rank(pooled, steps, notion=notion, measure=measure)

    v = joint.values
    if joint.polarity == "outlyingness":
        count = int(np.sum(v >= v[0]))
    else:
        count = int(np.sum(v <= v[0]))
    p_value = count / (s + 1.0)

    n_retained = int(np.ceil((1.0 - alpha) * (s + 1)))
    retained = joint.order[:n_retained]
    stage_samples = apply_sequence(pooled, steps)
    bands = []
    for k, (step, stage_sample) in enumerate(zip(steps, stage_samples)):
        block = stage_sample.values[retained]
        bands.append(
            EnvelopeStage(
                stage=k,
                step=step.kind,
                grid=stage_sample.grid,
                lower=block.min(axis=0),
                upper=block.max(axis=0),
                observed=stage_sample.values[0].copy(),
            )
        )
    return EnvelopeTestResult(
        measure=joint,
        observed_measure=float(v[0]),
        p_value=p_value,
        alpha=alpha,
        rejected=p_value <= alpha,
        stages=tuple(bands),
        n_retained=n_retained,
    )
