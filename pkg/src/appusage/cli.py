"""Command-line front end.

Every subcommand resolves its flags into a :class:`RunConfig`, runs from that
config alone and writes it next to its outputs, so ``appusage replay
<config.json>`` reproduces a run byte for byte.

Exit codes: 0 success, 1 data error (bad input file, failed validation,
degenerate data), 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import enum
import json
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .cluster import DEFAULT_FEATURES, DEFAULT_MIN_PTS, cluster_students, largest_cluster_ids
from .errors import AppUsageError
from .featurize import FeatureMatrix, feature_matrix
from .ingest import DEFAULT_SPAN_DAYS, parse_cohort, validate, write_categories, write_events, write_roster
from .predict import PipelineConfig, SelectionSpec, run_pipeline
from .sessionizer import (
    GAP_THRESHOLD_MS,
    MICRO_MAX_MS,
    REVIEW_MAX_MS,
    SESSION_CSV_COLUMNS,
    SessionParams,
    session_rows,
    sessionize,
)
from .stats import ALPHA, Z_THRESHOLD, assoc_report, compare_by_cgpa, compare_by_usage
from .synth import SynthConfig, gen_cohort

COMMANDS = ("validate", "sessions", "features", "assoc", "compare", "cluster", "predict", "synth", "report")
ESTIMATORS = ("knn", "lasso", "enet", "baseline")


@dataclass
class RunConfig:
    """Every tunable of a run; serialised verbatim beside the outputs."""

    command: str
    events: str | None = None
    categories: str | None = None
    cgpa: str | None = None
    matrix: str | None = None
    format: str | None = None
    tz_offset: int | None = None
    span_days: int = DEFAULT_SPAN_DAYS
    gap_ms: int = GAP_THRESHOLD_MS
    micro_ms: int = MICRO_MAX_MS
    review_ms: int = REVIEW_MAX_MS
    alpha: float = ALPHA
    z_thresh: float = Z_THRESHOLD
    high_cgpa: float = 3.5
    low_cgpa: float = 3.0
    compare_mode: str = "cgpa"
    largest_cluster: bool = False
    cluster_features: list = field(default_factory=lambda: list(DEFAULT_FEATURES))
    eps: str = "auto"
    min_pts: int = DEFAULT_MIN_PTS
    k: int | None = None
    selection: str = "corr"
    core_only: bool = False
    leakage: str = "strict"
    train_frac: float = 0.7
    folds: int = 5
    estimators: list = field(default_factory=lambda: ["knn", "lasso", "enet"])
    seed: int = 0
    threads: int = 1
    synth: dict | None = None
    out: str | None = None
    masks: str | None = None
    out_dir: str | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**d)

    @property
    def session_params(self) -> SessionParams:
        return SessionParams(self.gap_ms, self.micro_ms, self.review_ms)

    def config_path(self) -> Path:
        if self.out_dir is not None:
            return Path(self.out_dir) / "config.json"
        if self.out is not None:
            return Path(self.out).with_suffix(".config.json")
        return Path(f"{self.command}.config.json")


class UsageError(Exception):
    pass


# ------------------------------------------------------------------ output

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return _jsonable(asdict(obj))
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def _dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _write_json(obj, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(_dumps(obj), encoding="utf-8")


def _write_csv(path, header, rows) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _num(v):
    return "" if v is None else repr(float(v))


# ------------------------------------------------------------------ loading

def _load_cohort(cfg: RunConfig):
    missing = [f"--{n}" for n in ("events", "categories", "cgpa") if getattr(cfg, n) is None]
    if missing:
        raise UsageError(f"{cfg.command} needs {', '.join(missing)}")
    return parse_cohort(cfg.events, cfg.categories, cfg.cgpa, format=cfg.format,
                        tz_offset_minutes=cfg.tz_offset, span_days=cfg.span_days)


def _load_matrix(cfg: RunConfig) -> FeatureMatrix:
    if cfg.matrix is not None:
        return FeatureMatrix.from_csv(cfg.matrix)
    return feature_matrix(_load_cohort(cfg), cfg.session_params, cfg.threads)


def _out_dir(cfg: RunConfig) -> Path:
    d = Path(cfg.out_dir or ".")
    d.mkdir(parents=True, exist_ok=True)
    return d


# ------------------------------------------------------------------ commands

def _run_validate(cfg: RunConfig) -> int:
    report = validate(_load_cohort(cfg), cfg.span_days)
    text = _dumps(report.to_dict())
    if cfg.out is None:
        sys.stdout.write(text)
    else:
        Path(cfg.out).write_text(text, encoding="utf-8")
    return 0 if report.ok else 1


def _run_sessions(cfg: RunConfig) -> int:
    if cfg.out is None:
        raise UsageError("sessions needs --out")
    cohort = _load_cohort(cfg)
    rows = []
    for sid in cohort.analyzable_ids:
        log = cohort.logs[sid]
        _, sessions, _ = sessionize(log, cohort.categories, cfg.session_params)
        rows.extend(session_rows(sid, sessions, log.tz_offset_minutes))
    _write_csv(cfg.out, SESSION_CSV_COLUMNS, rows)
    return 0


def _run_features(cfg: RunConfig) -> int:
    if cfg.out is None:
        raise UsageError("features needs --out")
    matrix = feature_matrix(_load_cohort(cfg), cfg.session_params, cfg.threads)
    matrix.to_csv(cfg.out, cfg.masks)
    return 0


def _assoc_outputs(matrix, cfg: RunConfig, out: Path) -> dict:
    report = assoc_report(matrix, alpha=cfg.alpha, z_threshold=cfg.z_thresh)
    report.to_csv(out / "assoc.csv")
    tables = {}
    for fam in report.families:
        path = out / f"assoc_{fam}.csv"
        report.write_wide(path, fam)
        tables[fam] = str(path)
    summary = report.summary()
    summary["tables"] = tables
    _write_json(summary, out / "assoc_summary.json")
    return summary


def _run_assoc(cfg: RunConfig) -> int:
    _assoc_outputs(_load_matrix(cfg), cfg, _out_dir(cfg))
    return 0


def _cluster_run(matrix, cfg: RunConfig):
    eps = cfg.eps if cfg.eps == "auto" else float(cfg.eps)
    return cluster_students(matrix, cfg.cluster_features, eps, cfg.min_pts, cfg.k)


def _cluster_outputs(matrix, cfg: RunConfig, out: Path) -> dict:
    run = _cluster_run(matrix, cfg)
    a = run.assignment
    _write_csv(out / "clusters.csv", ["student_id", "label"], sorted(a.labels.items()))
    _write_csv(out / "kdist.csv", ["rank", "kdist"], [(i, repr(float(v))) for i, v in enumerate(run.curve)])
    sizes = a.cluster_sizes
    summary = {"eps": a.eps, "min_pts": a.min_pts, "features": list(run.features),
               "cluster_sizes": {str(k): v for k, v in sizes.items()}, "n_noise": len(a.noise),
               "largest_cluster": largest_cluster_ids(a) if sizes else []}
    _write_json(summary, out / "cluster_summary.json")
    return summary


def _run_cluster(cfg: RunConfig) -> int:
    _cluster_outputs(_load_matrix(cfg), cfg, _out_dir(cfg))
    return 0


def _compare_outputs(matrix, cfg: RunConfig, out: Path) -> dict:
    if cfg.compare_mode == "cgpa":
        report = compare_by_cgpa(matrix, cfg.high_cgpa, cfg.low_cgpa, cfg.alpha)
    else:
        if cfg.largest_cluster:
            matrix = matrix.subset(largest_cluster_ids(_cluster_run(matrix, cfg).assignment))
        report = compare_by_usage(matrix, cfg.alpha)
    name = f"compare_{cfg.compare_mode}"
    report.to_csv(out / f"{name}.csv")
    summary = report.summary()
    summary["n_students"] = len(matrix.student_ids)
    _write_json(summary, out / f"{name}_summary.json")
    return summary


def _run_compare(cfg: RunConfig) -> int:
    _compare_outputs(_load_matrix(cfg), cfg, _out_dir(cfg))
    return 0


def _pipeline_config(cfg: RunConfig) -> PipelineConfig:
    sel = SelectionSpec(cfg.selection, cfg.alpha, cfg.core_only, cfg.leakage)
    return PipelineConfig(sel, cfg.train_frac, cfg.folds, cfg.seed, tuple(cfg.estimators))


def _predict_outputs(matrix, cfg: RunConfig, out: Path) -> dict:
    result = run_pipeline(matrix, _pipeline_config(cfg))
    rep = result.report
    _write_csv(out / "predictions.csv", ["student_id", "actual", "predicted"],
               [(sid, repr(a), repr(p)) for sid, (a, p) in rep.per_student.items()])
    table = result.table_rows()
    _write_csv(out / "models.csv", list(table[0]),
               [[v if isinstance(v, (str, int)) or v is None else repr(float(v)) for v in row.values()]
                for row in table])
    d = result.to_dict()
    _write_json(d, out / "report.json")
    return d


def _run_predict(cfg: RunConfig) -> int:
    _predict_outputs(_load_matrix(cfg), cfg, _out_dir(cfg))
    return 0


def _run_synth(cfg: RunConfig) -> int:
    scfg = SynthConfig.from_dict(cfg.synth or {})
    cohort, truth = gen_cohort(scfg)
    out = _out_dir(cfg)
    write_events([cohort.logs[s] for s in cohort.analyzable_ids], out / "events.jsonl")
    write_categories(cohort.categories, out / "categories.csv")
    write_roster(cohort.students, out / "cgpa.csv")
    _write_json(truth.to_dict(), out / "truth.json")
    return 0


def _run_report(cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    cohort = _load_cohort(cfg)
    validation = validate(cohort, cfg.span_days).to_dict()
    matrix = feature_matrix(cohort, cfg.session_params, cfg.threads)
    features_path = out / "features.csv"
    matrix.to_csv(features_path, out / "masks.csv")
    bundle = {"validation": validation, "features_path": str(features_path),
              "assoc": _assoc_outputs(matrix, cfg, out)}
    bundle["clusters"] = _cluster_outputs(matrix, cfg, out)
    bundle["compare_cgpa"] = _compare_outputs(matrix, dataclasses.replace(cfg, compare_mode="cgpa"), out)
    bundle["compare_usage"] = _compare_outputs(
        matrix, dataclasses.replace(cfg, compare_mode="usage", largest_cluster=True), out)
    bundle["prediction"] = _predict_outputs(matrix, cfg, out)
    _write_json(bundle, out / "report.json")
    return 0


RUNNERS = {
    "validate": _run_validate,
    "sessions": _run_sessions,
    "features": _run_features,
    "assoc": _run_assoc,
    "compare": _run_compare,
    "cluster": _run_cluster,
    "predict": _run_predict,
    "synth": _run_synth,
    "report": _run_report,
}


def execute(cfg: RunConfig) -> int:
    """Run a resolved config: outputs first, then the config itself."""
    code = RUNNERS[cfg.command](cfg)
    _write_json(asdict(cfg), cfg.config_path())
    return code


# ------------------------------------------------------------------ parsing

def _add_inputs(p, matrix=False):
    g = p.add_argument_group("inputs")
    g.add_argument("--events", help="events file (.jsonl or .csv)")
    g.add_argument("--categories", help="package,category CSV")
    g.add_argument("--cgpa", help="student_id,cgpa CSV")
    g.add_argument("--format", choices=("jsonl", "csv"), help="event file format (default: from suffix)")
    g.add_argument("--tz-offset", type=int, help="local time offset in minutes, overrides the file")
    g.add_argument("--span-days", type=int, default=DEFAULT_SPAN_DAYS)
    if matrix:
        g.add_argument("--matrix", help="features CSV from the features subcommand (instead of raw inputs)")
    s = p.add_argument_group("sessions")
    s.add_argument("--gap-ms", type=int, default=GAP_THRESHOLD_MS)
    s.add_argument("--micro-ms", type=int, default=MICRO_MAX_MS)
    s.add_argument("--review-ms", type=int, default=REVIEW_MAX_MS)
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1)


def _add_stats(p):
    p.add_argument("--alpha", type=float, default=ALPHA)
    p.add_argument("--z-thresh", type=float, default=Z_THRESHOLD)


def _add_cluster(p):
    p.add_argument("--features", dest="cluster_features", default=",".join(DEFAULT_FEATURES),
                   help="comma-separated feature names to cluster on")
    p.add_argument("--eps", default="auto", help="'auto' or a positive number")
    p.add_argument("--min-pts", type=int, default=DEFAULT_MIN_PTS)
    p.add_argument("--k", type=int, help="k of the k-distance curve (default: min-pts)")


def _add_predict(p):
    p.add_argument("--selection", choices=("corr", "lasso", "enet"), default="corr")
    p.add_argument("--core-only", action="store_true", help="select among duration/launches/n_apps only")
    p.add_argument("--leakage", choices=("strict", "paper"), default="strict")
    p.add_argument("--train-frac", type=float, default=0.7)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--estimators", default="knn,lasso,enet")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="appusage", description="App-usage analytics against academic outcome.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check input files and report violations")
    _add_inputs(p)
    p.add_argument("--out", help="JSON report path (default: stdout)")

    p = sub.add_parser("sessions", help="per-student session table")
    _add_inputs(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("features", help="feature matrix CSV")
    _add_inputs(p)
    p.add_argument("--out", required=True)
    p.add_argument("--masks", help="optional usage-mask CSV path")

    p = sub.add_parser("assoc", help="feature/CGPA correlation tables")
    _add_inputs(p, matrix=True)
    _add_stats(p)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("compare", help="high/low group comparisons")
    _add_inputs(p, matrix=True)
    _add_stats(p)
    p.add_argument("--mode", dest="compare_mode", choices=("cgpa", "usage"), default="cgpa",
                   help="cgpa: usage of high vs low CGPA holders; usage: CGPA of high vs low users")
    p.add_argument("--high-cgpa", type=float, default=3.5)
    p.add_argument("--low-cgpa", type=float, default=3.0)
    p.add_argument("--largest-cluster", action="store_true", help="usage mode: restrict to the largest cluster")
    _add_cluster(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("cluster", help="DBSCAN on overall usage")
    _add_inputs(p, matrix=True)
    _add_cluster(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("predict", help="CGPA prediction pipeline")
    _add_inputs(p, matrix=True)
    _add_predict(p)
    p.add_argument("--alpha", type=float, default=ALPHA, help="selection significance level")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("synth", help="generate a synthetic cohort")
    p.add_argument("--config", dest="synth_config", help="synth.json with SynthConfig fields")
    p.add_argument("--seed", type=int, help="overrides the config's seed")
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("report", help="features, associations, clusters and prediction in one bundle")
    _add_inputs(p)
    _add_stats(p)
    p.add_argument("--high-cgpa", type=float, default=3.5)
    p.add_argument("--low-cgpa", type=float, default=3.0)
    _add_cluster(p)
    _add_predict(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("replay", help="re-run from a resolved config.json")
    p.add_argument("config")
    return parser


def resolve(args: argparse.Namespace) -> RunConfig:
    """Turn parsed flags into a fully populated, validated RunConfig."""
    values = {k: v for k, v in vars(args).items() if v is not None}
    cmd = values.pop("command")
    synth_path = values.pop("synth_config", None)
    if cmd == "synth":
        synth = {}
        if synth_path is not None:
            try:
                synth = json.loads(Path(synth_path).read_text(encoding="utf-8"))
            except FileNotFoundError as exc:
                raise AppUsageError(f"{synth_path}: no such file") from exc
            except json.JSONDecodeError as exc:
                raise AppUsageError(f"{synth_path}: line {exc.lineno}: {exc.msg}") from exc
        if "seed" in values:
            synth["seed"] = values.pop("seed")
        try:
            values["synth"] = SynthConfig.from_dict(synth).to_dict()
        except (TypeError, ValueError) as exc:
            raise AppUsageError(f"{synth_path}: {exc}") from exc
    if isinstance(values.get("cluster_features"), str):
        values["cluster_features"] = [f for f in values["cluster_features"].split(",") if f]
    if isinstance(values.get("estimators"), str):
        values["estimators"] = [e for e in values["estimators"].split(",") if e]
    cfg = RunConfig(cmd, **values)
    check(cfg)
    return cfg


def check(cfg: RunConfig) -> None:
    if cfg.command not in RUNNERS:
        raise UsageError(f"unknown command {cfg.command!r}")
    if cfg.eps != "auto":
        try:
            if float(cfg.eps) <= 0:
                raise ValueError
        except ValueError:
            raise UsageError("--eps must be 'auto' or a positive number") from None
    bad = [e for e in cfg.estimators if e not in ESTIMATORS]
    if bad:
        raise UsageError(f"unknown estimators: {', '.join(bad)}")
    if not 0.0 < cfg.alpha <= 1.0:
        raise UsageError("--alpha must lie in (0, 1]")
    if not 0.0 < cfg.train_frac < 1.0:
        raise UsageError("--train-frac must lie in (0, 1)")
    if cfg.folds < 2:
        raise UsageError("--folds must be at least 2")
    if cfg.min_pts < 1:
        raise UsageError("--min-pts must be at least 1")
    if cfg.threads < 1:
        raise UsageError("--threads must be at least 1")
    if not cfg.micro_ms <= cfg.review_ms:
        raise UsageError("--micro-ms must not exceed --review-ms")
    if cfg.gap_ms < 0:
        raise UsageError("--gap-ms must be non-negative")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "replay":
            try:
                cfg = RunConfig.from_dict(json.loads(Path(args.config).read_text(encoding="utf-8")))
            except FileNotFoundError:
                print(f"appusage: {args.config}: no such file", file=sys.stderr)
                return 1
            except (json.JSONDecodeError, TypeError, ValueError) as exc:
                print(f"appusage: {args.config}: not a run config ({exc})", file=sys.stderr)
                return 1
            check(cfg)
        else:
            cfg = resolve(args)
        return execute(cfg)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"appusage: error: {exc}", file=sys.stderr)
        return 2
    except (AppUsageError, OSError) as exc:
        print(f"appusage: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
