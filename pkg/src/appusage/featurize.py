"""Per-student feature grid.

For every category and for the phone as a whole, five usage metrics are
computed in each of the five periods (four day parts plus the whole day):
total duration, launches, distinct apps, duration per app and duration per
launch.  The phone scope adds four session counts (all, micro, review,
engage) per period.  With the default 27-category taxonomy this gives
``27*5*5 + 9*5 = 720`` features.

Feature names follow ``<scope>.<metric>.<period>``, e.g.
``Video Players & Editors.duration.evening`` or ``phone.micro.whole``.
Ordering is scope (taxonomy order, then ``phone``), metric, period.
"""
from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .errors import NoAnalyzableStudents
from .ingest import CategoryMap, Cohort, EventLog
from .periods import ALL_PERIODS, DAY_PARTS, PeriodBin, assign_period, period_durations, period_of
from .periods import split_interval_by_period  # noqa: F401  (re-export)
from .sessionizer import Session, SessionKind, SessionParams, UsageInterval, sessionize

PHONE = "phone"
USAGE_METRICS = ("duration", "launches", "n_apps", "dur_per_app", "dur_per_launch")
SESSION_METRICS = ("sessions", "micro", "review", "engage")
CORE_METRICS = ("duration", "launches", "n_apps")
PERIOD_LABELS = tuple(p.label for p in ALL_PERIODS)

__all__ = [
    "CategoryPeriodStats", "FeatureVector", "FeatureMatrix", "assign_period", "split_interval_by_period",
    "category_stats", "feature_vector", "featurize_log", "feature_matrix", "feature_names",
    "parse_feature_name", "n_features", "derive_mask", "PHONE", "USAGE_METRICS", "SESSION_METRICS",
    "CORE_METRICS", "DAY_PARTS",
]


@lru_cache(maxsize=32)
def feature_names(category_set: tuple[str, ...]) -> tuple[str, ...]:
    if PHONE in category_set:
        raise ValueError(f"category name {PHONE!r} is reserved")
    names = [f"{c}.{m}.{p}" for c in category_set for m in USAGE_METRICS for p in PERIOD_LABELS]
    names += [f"{PHONE}.{m}.{p}" for m in USAGE_METRICS + SESSION_METRICS for p in PERIOD_LABELS]
    return tuple(names)


@lru_cache(maxsize=32)
def _name_index(names: tuple[str, ...]) -> dict[str, int]:
    return {n: i for i, n in enumerate(names)}


def n_features(n_categories: int) -> int:
    return n_categories * len(USAGE_METRICS) * len(ALL_PERIODS) + (
        len(USAGE_METRICS) + len(SESSION_METRICS)) * len(ALL_PERIODS)


def parse_feature_name(name: str) -> tuple[str, str, str]:
    """Split a feature name into (scope, metric, period); validates the parts."""
    try:
        scope, metric, period = name.rsplit(".", 2)
    except ValueError:
        raise ValueError(f"malformed feature name {name!r}") from None
    metrics = USAGE_METRICS + SESSION_METRICS if scope == PHONE else USAGE_METRICS
    if metric not in metrics or period not in PERIOD_LABELS or not scope:
        raise ValueError(f"malformed feature name {name!r}")
    return scope, metric, period


@dataclass(frozen=True)
class CategoryPeriodStats:
    duration_ms: int
    launches: int
    n_apps: int
    dur_per_app: float
    dur_per_launch: float

    @property
    def active(self) -> bool:
        return self.duration_ms > 0


@dataclass(frozen=True, eq=False)
class FeatureVector:
    student_id: str
    names: tuple[str, ...]
    values: np.ndarray
    usage_mask: np.ndarray

    def __len__(self):
        return len(self.names)

    def __getitem__(self, name: str) -> float:
        return float(self.values[_name_index(self.names)[name]])

    def masked(self, name: str) -> bool:
        return bool(self.usage_mask[_name_index(self.names)[name]])

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, self.values.tolist()))


def _intervals_to_arrays(intervals: Sequence[UsageInterval], cat_index: dict[str, int]):
    n = len(intervals)
    start = np.fromiter((iv.start for iv in intervals), dtype=np.int64, count=n)
    end = np.fromiter((iv.end for iv in intervals), dtype=np.int64, count=n)
    cats = np.fromiter((cat_index[iv.category] for iv in intervals), dtype=np.int64, count=n)
    pkg_codes: dict[str, int] = {}
    pkgs = np.fromiter((pkg_codes.setdefault(iv.package, len(pkg_codes)) for iv in intervals),
                       dtype=np.int64, count=n)
    return start, end, cats, pkgs, max(len(pkg_codes), 1)


def _usage_grid(start, end, cats, pkgs, n_pkgs, n_scopes, tz_offset_minutes):
    """Durations, launches and distinct apps per (scope, period).

    Scope ``n_scopes - 1`` is the phone; ``cats`` must index the others.
    Returns three int64 arrays of shape (n_scopes, 5).
    """
    n_cat = n_scopes - 1
    dur = np.zeros((n_scopes, 5), dtype=np.int64)
    launches = np.zeros((n_scopes, 5), dtype=np.int64)
    apps = np.zeros((n_scopes, 5), dtype=np.int64)
    if len(start) == 0:
        return dur, launches, apps
    pieces = period_durations(start, end, tz_offset_minutes)
    for part in range(4):
        # bincount sums in float64; exact for totals below 2**53 ms
        dur[:n_cat, part] = np.rint(np.bincount(cats, weights=pieces[:, part], minlength=n_cat))
    dur[:n_cat, 4] = dur[:n_cat, :4].sum(axis=1)
    dur[n_cat] = dur[:n_cat].sum(axis=0)

    sp = period_of(start, tz_offset_minutes)
    launches[:n_cat, :4] = np.bincount(cats * 4 + sp, minlength=n_cat * 4).reshape(n_cat, 4)
    launches[:n_cat, 4] = launches[:n_cat, :4].sum(axis=1)
    launches[n_cat] = launches[:n_cat].sum(axis=0)

    key = np.unique((cats * 4 + sp) * n_pkgs + pkgs)
    apps[:n_cat, :4] = np.bincount(key // n_pkgs, minlength=n_cat * 4).reshape(n_cat, 4)
    key = np.unique(cats * n_pkgs + pkgs)
    apps[:n_cat, 4] = np.bincount(key // n_pkgs, minlength=n_cat)
    key = np.unique(sp * n_pkgs + pkgs)
    apps[n_cat, :4] = np.bincount(key // n_pkgs, minlength=4)
    apps[n_cat, 4] = len(np.unique(pkgs))
    return dur, launches, apps


def _ratio(num, den):
    out = np.zeros(num.shape, dtype=np.float64)
    np.divide(num, den, out=out, where=den > 0)
    return out


def _session_grid(sessions: Sequence[Session], tz_offset_minutes: int) -> np.ndarray:
    grid = np.zeros((4, 5), dtype=np.int64)  # rows: total, micro, review, engage
    if not sessions:
        return grid
    starts = np.fromiter((s.start for s in sessions), dtype=np.int64, count=len(sessions))
    code = {SessionKind.MICRO: 1, SessionKind.REVIEW: 2, SessionKind.ENGAGE: 3}
    kinds = np.fromiter((code[s.kind] for s in sessions), dtype=np.int64, count=len(sessions))
    sp = period_of(starts, tz_offset_minutes)
    grid[1:, :4] = np.bincount((kinds - 1) * 4 + sp, minlength=12).reshape(3, 4)
    grid[1:, 4] = grid[1:, :4].sum(axis=1)
    grid[0] = grid[1:].sum(axis=0)
    return grid


def feature_vector(student_id: str, intervals: Sequence[UsageInterval], sessions: Sequence[Session],
                   categories: CategoryMap, tz_offset_minutes: int) -> FeatureVector:
    """Assemble the full feature grid from sessionizer output."""
    cat_set = categories.category_set
    names = feature_names(cat_set)
    n_scopes = len(cat_set) + 1
    cat_index = {c: i for i, c in enumerate(cat_set)}
    start, end, cats, pkgs, n_pkgs = _intervals_to_arrays(intervals, cat_index)
    dur, launches, apps = _usage_grid(start, end, cats, pkgs, n_pkgs, n_scopes, tz_offset_minutes)
    usage = np.stack([dur, launches, apps, _ratio(dur, apps), _ratio(dur, launches)], axis=1)
    sess = _session_grid(sessions, tz_offset_minutes)
    values = np.concatenate([usage.reshape(-1).astype(np.float64), sess.reshape(-1).astype(np.float64)])
    active = dur > 0
    mask = np.concatenate([np.repeat(active[:, None, :], len(USAGE_METRICS), axis=1).reshape(-1),
                           np.repeat((sess[0] > 0)[None, :], len(SESSION_METRICS), axis=0).reshape(-1)])
    return FeatureVector(student_id, names, values, mask)


def featurize_log(log: EventLog, categories: CategoryMap, params: SessionParams = SessionParams()):
    """Sessionize and featurize one log; returns (FeatureVector, sessions, PairingStats)."""
    intervals, sessions, stats = sessionize(log, categories, params)
    vec = feature_vector(log.student_id, intervals, sessions, categories, log.tz_offset_minutes)
    return vec, sessions, stats


def category_stats(intervals: Iterable[UsageInterval], category: str, period: PeriodBin,
                   tz_offset_minutes: int) -> CategoryPeriodStats:
    """Usage statistics of one category in one period (``category=None`` for the phone)."""
    period = PeriodBin(period)
    duration = launches = 0
    apps = set()
    for iv in intervals:
        if category is not None and iv.category != category:
            continue
        if period == PeriodBin.WHOLE_DAY:
            piece = iv.end - iv.start
            started = True
        else:
            piece = dict(split_interval_by_period(iv, tz_offset_minutes)).get(period, 0)
            started = period_of(iv.start, tz_offset_minutes) == period
        duration += piece
        if started:
            launches += 1
            apps.add(iv.package)
    n_apps = len(apps)
    return CategoryPeriodStats(duration, launches, n_apps,
                               duration / n_apps if n_apps else 0.0,
                               duration / launches if launches else 0.0)


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """Cohort feature table: one row per analyzable student."""

    student_ids: tuple[str, ...]
    names: tuple[str, ...]
    values: np.ndarray
    mask: np.ndarray
    outcome: np.ndarray

    @property
    def shape(self):
        return self.values.shape

    def index(self, name: str) -> int:
        return _name_index(self.names)[name]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.index(name)]

    def column_mask(self, name: str) -> np.ndarray:
        return self.mask[:, self.index(name)]

    @property
    def rows(self) -> list[FeatureVector]:
        return [FeatureVector(sid, self.names, self.values[i], self.mask[i])
                for i, sid in enumerate(self.student_ids)]

    @property
    def outcome_map(self) -> dict[str, float]:
        return dict(zip(self.student_ids, self.outcome.tolist()))

    def take(self, idx) -> "FeatureMatrix":
        idx = np.asarray(idx, dtype=np.int64)
        return FeatureMatrix(tuple(self.student_ids[i] for i in idx), self.names, self.values[idx],
                             self.mask[idx], self.outcome[idx])

    def subset(self, ids: Iterable[str]) -> "FeatureMatrix":
        keep = set(ids)
        return self.take([i for i, sid in enumerate(self.student_ids) if sid in keep])

    def select(self, names: Sequence[str]) -> "FeatureMatrix":
        cols = [self.index(n) for n in names]
        return FeatureMatrix(self.student_ids, tuple(names), self.values[:, cols], self.mask[:, cols],
                             self.outcome)

    def to_csv(self, path, masks_path=None) -> None:
        _write_grid(path, self.student_ids, self.outcome, self.names, self.values, _fmt_value)
        if masks_path is not None:
            _write_grid(masks_path, self.student_ids, self.outcome, self.names, self.mask,
                        lambda v: "1" if v else "0")

    @classmethod
    def from_csv(cls, path) -> "FeatureMatrix":
        """Read a features CSV; usage masks are recomputed from the values."""
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header[:2] != ["student_id", "cgpa"]:
                raise ValueError(f"{path}: header must start with student_id,cgpa")
            names = tuple(header[2:])
            ids, outcome, rows = [], [], []
            for row in reader:
                ids.append(row[0])
                outcome.append(float(row[1]))
                rows.append([float(v) for v in row[2:]])
        values = np.array(rows, dtype=np.float64).reshape(len(ids), len(names))
        return cls(tuple(ids), names, values, derive_mask(names, values), np.array(outcome))


def derive_mask(names: Sequence[str], values: np.ndarray) -> np.ndarray:
    """Usage mask implied by the values: the scope was active in the period."""
    idx = _name_index(tuple(names))
    mask = np.zeros(values.shape, dtype=bool)
    for j, name in enumerate(names):
        scope, metric, period = parse_feature_name(name)
        ref = f"{scope}.{'sessions' if metric in SESSION_METRICS else 'duration'}.{period}"
        mask[:, j] = values[:, idx[ref]] > 0 if ref in idx else values[:, j] != 0
    return mask


def _fmt_value(v) -> str:
    v = float(v)
    return str(int(v)) if v.is_integer() else repr(v)


def _write_grid(path, ids, outcome, names, grid, fmt):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["student_id", "cgpa", *names])
        for i, sid in enumerate(ids):
            writer.writerow([sid, repr(float(outcome[i])), *(fmt(v) for v in grid[i])])


def feature_matrix(cohort: Cohort, params: SessionParams = SessionParams(), threads: int = 1) -> FeatureMatrix:
    """Featurize every analyzable student of a cohort, in roster order."""
    ids = cohort.analyzable_ids
    if not ids:
        raise NoAnalyzableStudents("cohort has no student with an event log")
    cats = cohort.categories

    def one(sid):
        return featurize_log(cohort.logs[sid], cats, params)[0]

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(one, ids))
    else:
        rows = [one(sid) for sid in ids]
    cgpa = cohort.cgpa
    return FeatureMatrix(ids, feature_names(cats.category_set), np.vstack([r.values for r in rows]),
                         np.vstack([r.usage_mask for r in rows]), np.array([cgpa[s] for s in ids]))

