"""Command-line front end: detection, envelope tests, simulation, studies.

Subcommands::

    fdaguard detect    <curves.csv ...>   flag and classify outliers
    fdaguard envelope  <observed.csv> <nulls.csv>   Monte Carlo envelope test
    fdaguard simulate                     draw a contaminated dataset
    fdaguard study                        run a Monte Carlo study
    fdaguard depth     <curves.csv>       dump per-curve depth values
    fdaguard transform <curves.csv ...>   dump transformed curves

Curve matrices travel as CSV with an optional header row
``id,t=<t_1>,...,t=<t_m>``; each data row is a curve id followed by its
values. Multivariate data is one file per response dimension with matching
ids and grid. Options may come from ``--config`` (flat ``key = value``
lines) and are overridden by command-line flags; the seed falls back to the
``FDAGUARD_SEED`` environment variable. Exit codes: 0 success, 2 bad input
or configuration, 1 internal error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import depth as depth_mod
from .core import DesignGrid, FunctionalSample, MultivariateFunctionalSample, extremeness_ranks
from .pipeline import global_envelope_test, sequential_detect
from .simgen import (
    STEP_SETS,
    DesignGrid as _Grid,  # noqa: F401  (re-export convenience)
    ModelSpec,
    detection_study,
    make_dataset,
    rank_study,
    transform_comparison_study,
)
from .transform import apply_sequence, parse_steps, stage_names

SCHEMA_VERSION = 1

_FLOAT_FMT = "%.17g"  # lossless double round-trip


class UsageError(ValueError):
    """Bad input file or configuration; maps to exit code 2."""


# ---------------------------------------------------------------------------
# curve matrix files


def write_curves(path: str | Path, sample: FunctionalSample) -> None:
    """Write a curve matrix CSV with grid header."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id"] + ["t=" + _FLOAT_FMT % t for t in sample.grid.points])
        for cid, row in zip(sample.ids, sample.values):
            writer.writerow([cid] + [_FLOAT_FMT % v for v in row])


def read_curves(path: str | Path) -> FunctionalSample:
    """Read a curve matrix CSV; without a header the grid is equidistant on [0, 1]."""
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            rows = [row for row in csv.reader(fh) if row]
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise UsageError(f"{path}: file is empty")
    grid = None
    start = 0
    if rows[0][0].strip().lower() == "id":
        header = rows[0]
        try:
            points = np.array([float(tok.strip().removeprefix("t=")) for tok in header[1:]])
        except ValueError as exc:
            raise UsageError(f"{path}: bad grid header: {exc}") from exc
        try:
            grid = DesignGrid(points)
        except ValueError as exc:
            raise UsageError(f"{path}: bad grid header: {exc}") from exc
        start = 1
    ids = []
    values = []
    width = None
    for r, row in enumerate(rows[start:], start=start + 1):
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise UsageError(f"{path}: row {r} has {len(row)} fields, expected {width}")
        ids.append(row[0].strip())
        try:
            values.append([float(tok) for tok in row[1:]])
        except ValueError:
            bad = next(i for i, tok in enumerate(row[1:], start=2) if not _is_float(tok))
            raise UsageError(f"{path}: row {r}, column {bad}: not a number") from None
    matrix = np.asarray(values, dtype=float)
    if matrix.ndim != 2 or matrix.shape[1] < 2:
        raise UsageError(f"{path}: need at least 2 design points per curve")
    if grid is None:
        grid = DesignGrid.equidistant(matrix.shape[1])
    try:
        return FunctionalSample(grid, matrix, tuple(ids))
    except ValueError as exc:
        raise UsageError(f"{path}: {exc}") from exc


def _is_float(tok: str) -> bool:
    try:
        float(tok)
        return True
    except ValueError:
        return False


def read_multivariate(paths: list[str]) -> FunctionalSample | MultivariateFunctionalSample:
    """One file gives a univariate sample; several give a multivariate one."""
    samples = [read_curves(p) for p in paths]
    if len(samples) == 1:
        return samples[0]
    first = samples[0]
    for p, s in zip(paths[1:], samples[1:]):
        if s.ids != first.ids:
            raise UsageError(f"{p}: curve ids differ from {paths[0]}")
        if not np.array_equal(s.grid.points, first.grid.points):
            raise UsageError(f"{p}: design grid differs from {paths[0]}")
    stacked = np.stack([s.values for s in samples], axis=2)
    return MultivariateFunctionalSample(first.grid, stacked, first.ids)


# ---------------------------------------------------------------------------
# configuration

_CONFIG_KEYS = {
    "depth": str,
    "steps": str,
    "factor": float,
    "side": str,
    "alpha": float,
    "seed": int,
    "k": int,
    "lambda_w": float,
    "replicates": int,
    "measure": str,
    "threads": int,
}


def read_config(path: str | Path) -> dict:
    """Parse a flat ``key = value`` (or ``key: value``) configuration file."""
    out: dict = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        for sep in ("=", ":"):
            if sep in line:
                key, _, value = line.partition(sep)
                break
        else:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key = key.strip().lower()
        value = value.strip()
        if key not in _CONFIG_KEYS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            out[key] = _CONFIG_KEYS[key](value)
        except ValueError as exc:
            raise UsageError(f"{path}:{lineno}: bad value for {key!r}: {exc}") from exc
    return out


def _resolve(args: argparse.Namespace, key: str, default):
    """Flag > config file > FDAGUARD_SEED (for seed) > default."""
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    config = getattr(args, "_config", {})
    if key in config:
        return config[key]
    if key == "seed":
        env = os.environ.get("FDAGUARD_SEED")
        if env is not None:
            try:
                return int(env)
            except ValueError as exc:
                raise UsageError(f"FDAGUARD_SEED must be an integer, got {env!r}") from exc
    return default


def _validate_depth(notion: str) -> str:
    if notion not in depth_mod.DEPTH_NOTIONS:
        raise UsageError(
            f"unknown depth notion {notion!r}; expected one of {depth_mod.DEPTH_NOTIONS}"
        )
    return notion


# ---------------------------------------------------------------------------
# subcommands


def _steps_with_params(steps_spec: str, args: argparse.Namespace) -> list:
    steps = parse_steps(steps_spec)
    k = _resolve(args, "k", 500)
    lam = _resolve(args, "lambda_w", None)
    seed = _resolve(args, "seed", 0) or 0
    out = []
    for st in steps:
        if st.kind == "o":
            out.append(type(st)(kind="o", n_directions=k, seed=int(seed)))
        elif st.kind == "r":
            out.append(type(st)(kind="r", lambda_w=lam))
        else:
            out.append(st)
    return out


def cmd_detect(args: argparse.Namespace) -> int:
    sample = read_multivariate(args.input)
    notion = _validate_depth(_resolve(args, "depth", "linf"))
    default_steps = "o" if isinstance(sample, MultivariateFunctionalSample) else "t0,t1,t2"
    steps = _steps_with_params(_resolve(args, "steps", default_steps), args)
    factor = _resolve(args, "factor", 1.5)
    side = _resolve(args, "side", "two-sided")
    try:
        report = sequential_detect(sample, steps, notion=notion, factor=factor, side=side)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc

    stage_payload = []
    for rec in report.stages:
        fbp = rec.boxplot
        stage_payload.append(
            {
                "stage": rec.stage,
                "step": rec.step,
                "name": rec.name,
                "depth": fbp.depth_used,
                "factor": fbp.factor,
                "side": fbp.side,
                "grid": rec.sample.grid.points.tolist(),
                "median": fbp.median_curve.tolist(),
                "central_lower": fbp.central_lower.tolist(),
                "central_upper": fbp.central_upper.tolist(),
                "fence_lower": fbp.fence_lower.tolist(),
                "fence_upper": fbp.fence_upper.tolist(),
                "outlier_ids": list(fbp.outlier_ids),
            }
        )
    stage0 = report.stages[0]
    curve_payload = []
    for i, cid in enumerate(report.ids):
        label = report.labels.get(cid)
        ev = report.evidence.get(cid)
        curve_payload.append(
            {
                "id": cid,
                "label": label.name if label else "clean",
                "stage": label.stage if label else None,
                "depth_value": ev.depth_value if ev else float(stage0.boxplot.depth.values[i]),
                "exceedance": ev.exceedance if ev else None,
                "location": ev.location if ev else None,
            }
        )
    payload = {
        "schema_version": SCHEMA_VERSION,
        "depth": notion,
        "steps": [st.kind for st in steps],
        "factor": factor,
        "side": side,
        "n_curves": len(report.ids),
        "outlier_ids": list(report.outlier_ids),
        "stages": stage_payload,
        "curves": curve_payload,
    }
    _write_json(args.out, payload)
    if args.plot_csv:
        _write_plot_csv(args.plot_csv, report)
    return 0


def _write_plot_csv(path: str, report) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["curve_id", "stage", "t", "value", "role"])
        for rec in report.stages:
            pts = rec.sample.grid.points
            for cid, row in zip(rec.sample.ids, rec.sample.values):
                for t, v in zip(pts, row):
                    writer.writerow([cid, rec.stage, _FLOAT_FMT % t, _FLOAT_FMT % v, "curve"])
            fbp = rec.boxplot
            for role, curve in (
                ("median", fbp.median_curve),
                ("central_lo", fbp.central_lower),
                ("central_hi", fbp.central_upper),
                ("fence_lo", fbp.fence_lower),
                ("fence_hi", fbp.fence_upper),
            ):
                for t, v in zip(pts, curve):
                    writer.writerow(["", rec.stage, _FLOAT_FMT % t, _FLOAT_FMT % v, role])


def cmd_envelope(args: argparse.Namespace) -> int:
    observed = read_curves(args.observed)
    nulls = read_curves(args.nulls)
    if observed.n != 1:
        raise UsageError(f"{args.observed}: expected exactly one observed curve, got {observed.n}")
    if not np.array_equal(observed.grid.points, nulls.grid.points):
        raise UsageError("grid mismatch between observed and null curves")
    notion = _validate_depth(_resolve(args, "depth", "dq"))
    steps = _steps_with_params(_resolve(args, "steps", "t0"), args)
    alpha = _resolve(args, "alpha", 0.05)
    measure = _resolve(args, "measure", "dq")
    try:
        result = global_envelope_test(
            observed, nulls, steps, notion=notion, alpha=alpha, measure=measure
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    payload = {
        "schema_version": SCHEMA_VERSION,
        "p_value": result.p_value,
        "alpha": result.alpha,
        "rejected": result.rejected,
        "measure": measure,
        "depth": notion,
        "measure_of_observed": result.observed_measure,
        "n_null": nulls.n,
        "n_retained": result.n_retained,
        "stages": [
            {
                "stage": st.stage,
                "step": st.step,
                "grid": st.grid.points.tolist(),
                "envelope_lower": st.lower.tolist(),
                "envelope_upper": st.upper.tolist(),
                "observed": st.observed.tolist(),
            }
            for st in result.stages
        ],
    }
    _write_json(args.out, payload)
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    seed = _resolve(args, "seed", 0)
    grid = DesignGrid.equidistant(args.m)
    try:
        spec = ModelSpec(
            model=args.model, n_clean=args.n_clean, n_outlier=args.n_outlier,
            grid=grid, seed=int(seed),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    sample, truth = make_dataset(spec)
    out = Path(args.out)
    write_curves(out, sample)
    sidecar = out.with_suffix(".truth.json")
    _write_json(
        str(sidecar),
        {
            "schema_version": SCHEMA_VERSION,
            "model": spec.model,
            "seed": spec.seed,
            "n_clean": spec.n_clean,
            "n_outlier": spec.n_outlier,
            "outlier_ids": sorted(truth),
        },
    )
    return 0


def cmd_study(args: argparse.Namespace) -> int:
    replicates = _resolve(args, "replicates", 500)
    if replicates < 1:
        raise UsageError("replicates must be at least 1")
    seed = int(_resolve(args, "seed", 2024))
    threads = _resolve(args, "threads", 1)
    models = tuple(int(m) for m in args.models.split(",")) if args.models else (1, 2, 3, 4, 5, 6)
    out = Path(args.out)

    if args.kind == "rank":
        methods = args.methods.split(",") if args.methods else ["linf", "dq", "linf_b", "dq_b"]
        res = rank_study(methods=methods, models=models, replicates=replicates,
                         seed=seed, threads=threads)
        table = [["method"] + [f"model{m}" for m in models]]
        for mth in methods:
            table.append([mth] + [_FLOAT_FMT % res[mth][m] for m in models])
        payload = {"study": "rank", "results": {k: dict(v) for k, v in res.items()}}
    elif args.kind == "detection":
        methods = args.methods.split(",") if args.methods else ["linf_c", "dq_c"]
        res = detection_study(methods=methods, models=models, replicates=replicates,
                              seed=seed, threads=threads)
        table = [["method"] + sum([[f"model{m}_pc", f"model{m}_pf", f"model{m}_ri"] for m in models], [])]
        for mth in methods:
            row = [mth]
            for m in models:
                met = res[mth][m]
                row += [_FLOAT_FMT % met.pc, _FLOAT_FMT % met.pf, _FLOAT_FMT % met.rand]
            table.append(row)
        payload = {
            "study": "detection",
            "results": {
                mth: {m: {"pc": met.pc, "pf": met.pf, "rand_index": met.rand}
                      for m, met in per.items()}
                for mth, per in res.items()
            },
        }
    elif args.kind == "transform":
        notions = args.methods.split(",") if args.methods else ["linf", "dq"]
        res = transform_comparison_study(notions=notions, models=models,
                                         replicates=replicates, seed=seed, threads=threads)
        table = [["steps", "depth"] + [f"model{m}" for m in models]]
        for (set_name, notion), vals in res.items():
            table.append([set_name, notion] + [_FLOAT_FMT % vals[m] for m in models])
        payload = {
            "study": "transform",
            "results": {f"{set_name}|{notion}": dict(vals) for (set_name, notion), vals in res.items()},
        }
    else:  # pragma: no cover - argparse restricts choices
        raise UsageError(f"unknown study kind {args.kind!r}")

    payload.update({"schema_version": SCHEMA_VERSION, "replicates": replicates,
                    "seed": seed, "models": list(models)})
    _write_json(str(out), payload)
    with open(out.with_suffix(".csv"), "w", newline="") as fh:
        csv.writer(fh).writerows(table)
    return 0


def cmd_depth(args: argparse.Namespace) -> int:
    sample = read_curves(args.input)
    notion = _validate_depth(_resolve(args, "depth", "mbd"))
    side = _resolve(args, "side", "two-sided")
    try:
        result = depth_mod.compute(sample, notion, side=side)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    ranks = extremeness_ranks(result)
    rows = [["id", "value", "extremeness_rank"]]
    for i, cid in enumerate(sample.ids):
        rows.append([cid, _FLOAT_FMT % result.values[i], _FLOAT_FMT % ranks[i]])
    _write_rows(args.out, rows)
    return 0


def cmd_transform(args: argparse.Namespace) -> int:
    sample = read_multivariate(args.input)
    default_steps = "o" if isinstance(sample, MultivariateFunctionalSample) else "t0,t1,t2"
    steps = _steps_with_params(_resolve(args, "steps", default_steps), args)
    try:
        stages = apply_sequence(sample, steps)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    names = stage_names(steps)
    prefix = Path(args.out)
    for k, (step, stage_sample, name) in enumerate(zip(steps, stages, names)):
        path = prefix.parent / f"{prefix.name}_stage{k}_{step.kind}.csv"
        write_curves(path, stage_sample)
        print(f"stage {k} ({step.kind}, {name}) -> {path}")
    return 0


# ---------------------------------------------------------------------------
# wiring


def _write_json(path: str | None, payload: dict) -> None:
    text = json.dumps(payload, indent=2)
    if path is None or path == "-":
        print(text)
    else:
        Path(path).write_text(text + "\n")


def _write_rows(path: str | None, rows: list) -> None:
    if path is None or path == "-":
        csv.writer(sys.stdout).writerows(rows)
    else:
        with open(path, "w", newline="") as fh:
            csv.writer(fh).writerows(rows)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fdaguard",
        description="Functional outlier detection via sequential curve transformations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="flat key=value configuration file")
        p.add_argument("--seed", type=int, help="random seed (fallback: FDAGUARD_SEED)")

    p = sub.add_parser("detect", help="detect and classify outliers")
    p.add_argument("input", nargs="+", help="curve CSV (several files = multivariate)")
    p.add_argument("--depth", help="depth notion (default linf)")
    p.add_argument("--steps", help="comma list of transform steps (default t0,t1,t2)")
    p.add_argument("--factor", type=float, help="fence inflation factor (default 1.5)")
    p.add_argument("--side", choices=["two-sided", "upper"], help="flagging side")
    p.add_argument("--k", type=int, help="projection count for the outlyingness transform")
    p.add_argument("--lambda-w", dest="lambda_w", type=float, help="registration penalty")
    p.add_argument("--out", help="report JSON path (default stdout)")
    p.add_argument("--plot-csv", help="long-format plot data CSV path")
    common(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("envelope", help="global envelope Monte Carlo test")
    p.add_argument("observed", help="CSV with the single observed curve")
    p.add_argument("nulls", help="CSV with the null replicates")
    p.add_argument("--steps", help="transform steps (default t0)")
    p.add_argument("--depth", help="depth notion for per-stage ranking (default dq)")
    p.add_argument("--measure", choices=["dq", "erld"], help="joint measure (default dq)")
    p.add_argument("--alpha", type=float, help="significance level (default 0.05)")
    p.add_argument("--k", type=int, help="projection count for the outlyingness transform")
    p.add_argument("--lambda-w", dest="lambda_w", type=float, help="registration penalty")
    p.add_argument("--out", help="result JSON path (default stdout)")
    common(p)
    p.set_defaults(func=cmd_envelope)

    p = sub.add_parser("simulate", help="draw a contaminated dataset")
    p.add_argument("--model", type=int, required=True, help="model id 0-6")
    p.add_argument("--n-clean", type=int, default=49)
    p.add_argument("--n-outlier", type=int, default=1)
    p.add_argument("--m", type=int, default=30, help="number of design points")
    p.add_argument("--out", required=True, help="dataset CSV path (truth sidecar alongside)")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("study", help="run a Monte Carlo study")
    p.add_argument("kind", choices=["rank", "detection", "transform"])
    p.add_argument("--models", help="comma list of model ids (default 1-6)")
    p.add_argument("--methods", help="comma list of methods/depth notions")
    p.add_argument("--replicates", type=int, help="replicates per model (default 500)")
    p.add_argument("--threads", type=int, help="worker processes (default 1)")
    p.add_argument("--out", required=True, help="metrics JSON path (.csv table alongside)")
    common(p)
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("depth", help="dump per-curve depth values")
    p.add_argument("input", help="curve CSV")
    p.add_argument("--depth", help="depth notion (default mbd)")
    p.add_argument("--side", choices=["lower", "upper", "two-sided"], help="rank side")
    p.add_argument("--out", help="output CSV (default stdout)")
    common(p)
    p.set_defaults(func=cmd_depth)

    p = sub.add_parser("transform", help="dump transformed curves per stage")
    p.add_argument("input", nargs="+", help="curve CSV (several files = multivariate)")
    p.add_argument("--steps", help="comma list of transform steps")
    p.add_argument("--k", type=int, help="projection count for the outlyingness transform")
    p.add_argument("--lambda-w", dest="lambda_w", type=float, help="registration penalty")
    p.add_argument("--out", required=True, help="output path prefix")
    common(p)
    p.set_defaults(func=cmd_transform)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args._config = read_config(args.config) if args.config else {}
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
