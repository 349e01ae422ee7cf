"""Event-log, category-taxonomy and CGPA-roster ingest.

Input files
-----------
events.jsonl / events.csv
    One row per foreground/background event with the columns ``student_id``,
    ``t`` (epoch milliseconds, UTC), ``package``, ``app`` (nullable) and
    ``kind`` (``"fg"`` or ``"bg"``).  Two optional columns are understood:
    ``tz_offset_minutes`` (local-time offset used for diurnal binning) and
    ``window_end`` (epoch ms at which the observation window closes).
categories.csv
    ``package,category``.
cgpa.csv
    ``student_id,cgpa``.
"""
from __future__ import annotations

import csv
import json
import logging
import warnings
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping

from .errors import (
    CgpaOutOfRange,
    DuplicatePackage,
    DuplicateStudent,
    EmptyFile,
    MalformedRow,
    UnknownKind,
)

log = logging.getLogger(__name__)

MS_PER_MINUTE = 60_000
MS_PER_DAY = 86_400_000
DEFAULT_SPAN_DAYS = 7
DEFAULT_TZ_OFFSET_MINUTES = 360  # Asia/Dhaka
UNKNOWN_CATEGORY = "Unknown"

# Play-Store style taxonomy, 26 named categories plus the fallback.
DEFAULT_CATEGORIES = (
    "Art & Design",
    "Auto & Vehicles",
    "Books & Reference",
    "Browser & Search",
    "Business",
    "Communication",
    "Education",
    "Entertainment",
    "Finance",
    "Food & Drink",
    "Games",
    "Health & Fitness",
    "Lifestyle",
    "Medical",
    "Music & Audio",
    "News & Magazines",
    "Personalization",
    "Photography",
    "Productivity",
    "Shopping",
    "Social Media",
    "Sports",
    "Tools",
    "Travel & Local",
    UNKNOWN_CATEGORY,
    "Video Players & Editors",
    "Weather",
)

EVENT_COLUMNS = ("student_id", "t", "package", "app", "kind")


class EventKind(str, Enum):
    FOREGROUND = "fg"
    BACKGROUND = "bg"


@dataclass(frozen=True, slots=True)
class UsageEvent:
    timestamp: int
    package: str
    kind: EventKind
    app_name: str | None = None


@dataclass(frozen=True)
class EventLog:
    student_id: str
    window_start: int
    window_end: int
    tz_offset_minutes: int
    events: tuple[UsageEvent, ...]

    @classmethod
    def from_events(cls, student_id, events: Iterable[UsageEvent], *, window_end=None,
                    span_days=DEFAULT_SPAN_DAYS, tz_offset_minutes=DEFAULT_TZ_OFFSET_MINUTES,
                    truncate=True):
        """Build a log, sorting events stably by timestamp.

        The window closes at ``window_end`` (default: the last event) and spans
        ``span_days``.  Events older than the window are dropped with a warning
        when ``truncate`` is set.
        """
        ordered = sorted(events, key=lambda e: e.timestamp)
        if window_end is None:
            window_end = ordered[-1].timestamp if ordered else 0
        window_start = window_end - span_days * MS_PER_DAY
        if truncate and ordered and ordered[0].timestamp < window_start:
            kept = [e for e in ordered if e.timestamp >= window_start]
            warnings.warn(
                f"student {student_id}: {len(ordered) - len(kept)} events older than the "
                f"{span_days}-day window were dropped",
                stacklevel=2,
            )
            ordered = kept
        return cls(student_id, window_start, window_end, int(tz_offset_minutes), tuple(ordered))

    @property
    def span_ms(self):
        return self.window_end - self.window_start

    def __len__(self):
        return len(self.events)


@dataclass(frozen=True)
class CategoryMap:
    entries: Mapping[str, str]
    category_set: tuple[str, ...] = DEFAULT_CATEGORIES

    def __post_init__(self):
        object.__setattr__(self, "entries", MappingProxyType(dict(self.entries)))
        cats = tuple(self.category_set)
        if UNKNOWN_CATEGORY not in cats:
            cats = cats + (UNKNOWN_CATEGORY,)
        extra = [c for c in dict.fromkeys(self.entries.values()) if c not in cats]
        object.__setattr__(self, "category_set", cats + tuple(extra))

    def __eq__(self, other):
        if not isinstance(other, CategoryMap):
            return NotImplemented
        return dict(self.entries) == dict(other.entries) and self.category_set == other.category_set

    def __hash__(self):
        return hash(self.category_set)

    def lookup(self, package: str) -> str:
        return self.entries.get(package, UNKNOWN_CATEGORY)

    def index(self, category: str) -> int:
        return self.category_set.index(category)

    @classmethod
    def default(cls) -> "CategoryMap":
        """The shipped taxonomy with a small map of well-known packages."""
        text = resources.files("appusage.data").joinpath("categories.csv").read_text("utf-8")
        return _categories_from_rows(csv.DictReader(text.splitlines()), "<default>")


@dataclass(frozen=True, slots=True)
class StudentRecord:
    student_id: str
    cgpa: float

    def __post_init__(self):
        if not 0.0 <= self.cgpa <= 4.0:
            raise CgpaOutOfRange(self.student_id, self.cgpa)


@dataclass(frozen=True)
class Cohort:
    """Roster, event logs and taxonomy joined together.

    Students without a log stay on the roster and are listed in ``skipped``;
    logs without a roster entry are listed in ``orphan_logs`` and excluded.
    """

    students: tuple[StudentRecord, ...]
    logs: Mapping[str, EventLog]
    categories: CategoryMap
    skipped: tuple[str, ...] = ()
    orphan_logs: tuple[str, ...] = ()

    @classmethod
    def build(cls, students: Iterable[StudentRecord], logs: Iterable[EventLog],
              categories: CategoryMap | None = None) -> "Cohort":
        students = tuple(sorted(students, key=lambda s: s.student_id))
        seen = set()
        for s in students:
            if s.student_id in seen:
                raise DuplicateStudent(s.student_id)
            seen.add(s.student_id)
        by_id = {}
        orphans = []
        for lg in sorted(logs, key=lambda lg: lg.student_id):
            if lg.student_id in seen:
                by_id[lg.student_id] = lg
            else:
                orphans.append(lg.student_id)
        skipped = tuple(s.student_id for s in students if s.student_id not in by_id)
        return cls(students, MappingProxyType(by_id), categories or CategoryMap.default(),
                   skipped, tuple(orphans))

    @property
    def analyzable_ids(self) -> tuple[str, ...]:
        return tuple(s.student_id for s in self.students if s.student_id in self.logs)

    @property
    def cgpa(self) -> dict[str, float]:
        return {s.student_id: s.cgpa for s in self.students}

    def subset(self, ids: Iterable[str]) -> "Cohort":
        keep = set(ids)
        return Cohort.build(
            [s for s in self.students if s.student_id in keep],
            [lg for sid, lg in self.logs.items() if sid in keep],
            self.categories,
        )

    def __eq__(self, other):
        if not isinstance(other, Cohort):
            return NotImplemented
        return (self.students == other.students and dict(self.logs) == dict(other.logs)
                and self.categories == other.categories and self.skipped == other.skipped
                and self.orphan_logs == other.orphan_logs)

    __hash__ = None


# --------------------------------------------------------------------- parsing

def _read_rows(path: Path, fmt: str):
    """Yield (line_number, dict) pairs from a JSONL or CSV file."""
    with open(path, newline="", encoding="utf-8") as fh:
        if fmt == "jsonl":
            for lineno, raw in enumerate(fh, start=1):
                if not raw.strip():
                    continue
                try:
                    row = json.loads(raw)
                except json.JSONDecodeError as exc:
                    raise MalformedRow(f"invalid JSON ({exc.msg})", path=path, line=lineno) from None
                if not isinstance(row, dict):
                    raise MalformedRow("expected a JSON object", path=path, line=lineno)
                yield lineno, row
        elif fmt == "csv":
            reader = csv.DictReader(fh)
            missing = [c for c in EVENT_COLUMNS if c not in (reader.fieldnames or ())]
            if reader.fieldnames and missing:
                raise MalformedRow(f"missing columns {missing}", path=path, line=1)
            for row in reader:
                yield reader.line_num, row
        else:
            raise ValueError(f"unsupported event format {fmt!r}")


def _as_int(value, name, path, lineno):
    if isinstance(value, bool):
        raise MalformedRow(f"{name} must be an integer", path=path, line=lineno)
    if isinstance(value, int):
        return value
    if isinstance(value, str):
        try:
            return int(value.strip())
        except ValueError:
            pass
    raise MalformedRow(f"{name} must be an integer, got {value!r}", path=path, line=lineno)


def infer_format(path) -> str:
    suffix = Path(path).suffix.lower()
    if suffix in (".jsonl", ".json", ".ndjson"):
        return "jsonl"
    if suffix == ".csv":
        return "csv"
    raise ValueError(f"cannot infer event format from {path!r}; pass format='jsonl' or 'csv'")


def parse_events(path, format: str | None = None, *, tz_offset_minutes: int | None = None,
                 span_days: int = DEFAULT_SPAN_DAYS, window_end: int | None = None) -> list[EventLog]:
    """Parse an event file into one :class:`EventLog` per student.

    ``tz_offset_minutes`` and ``window_end`` override any per-row values.
    Logs are returned ordered by student id; events within a log are sorted by
    timestamp with input order kept for ties.
    """
    path = Path(path)
    fmt = format or infer_format(path)
    events: dict[str, list[UsageEvent]] = {}
    tz: dict[str, int] = {}
    ends: dict[str, int] = {}
    n_rows = 0
    for lineno, row in _read_rows(path, fmt):
        n_rows += 1
        sid = row.get("student_id")
        if sid is None or str(sid) == "":
            raise MalformedRow("missing student_id", path=path, line=lineno)
        sid = str(sid)
        t = _as_int(row.get("t"), "t", path, lineno)
        pkg = row.get("package")
        if not isinstance(pkg, str) or not pkg:
            raise MalformedRow("package must be a non-empty string", path=path, line=lineno)
        kind_raw = row.get("kind")
        try:
            kind = EventKind(kind_raw)
        except ValueError:
            raise UnknownKind(kind_raw, path=path, line=lineno) from None
        app = row.get("app")
        if app == "" or app is None:
            app = None
        elif not isinstance(app, str):
            raise MalformedRow("app must be a string or null", path=path, line=lineno)
        for key, store in (("tz_offset_minutes", tz), ("window_end", ends)):
            raw = row.get(key)
            if raw not in (None, ""):
                val = _as_int(raw, key, path, lineno)
                if store.setdefault(sid, val) != val:
                    raise MalformedRow(f"inconsistent {key} for student {sid}", path=path, line=lineno)
        events.setdefault(sid, []).append(UsageEvent(t, pkg, kind, app))
    if n_rows == 0:
        raise EmptyFile("no event rows", path=path)
    logs = []
    for sid in sorted(events):
        offset = tz_offset_minutes if tz_offset_minutes is not None else tz.get(sid, DEFAULT_TZ_OFFSET_MINUTES)
        end = window_end if window_end is not None else ends.get(sid)
        logs.append(EventLog.from_events(sid, events[sid], window_end=end, span_days=span_days,
                                         tz_offset_minutes=offset))
    return logs


def write_events(logs: Iterable[EventLog], path, format: str | None = None) -> None:
    """Write logs in the ingest format, including window and tz fields."""
    path = Path(path)
    fmt = format or infer_format(path)
    columns = EVENT_COLUMNS + ("tz_offset_minutes", "window_end")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if fmt == "csv":
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(columns)
        for lg in logs:
            for e in lg.events:
                values = (lg.student_id, e.timestamp, e.package, e.app_name, e.kind.value,
                          lg.tz_offset_minutes, lg.window_end)
                if fmt == "csv":
                    writer.writerow(["" if v is None else v for v in values])
                else:
                    fh.write(json.dumps(dict(zip(columns, values)), ensure_ascii=False) + "\n")


def _categories_from_rows(rows, path) -> CategoryMap:
    entries: dict[str, str] = {}
    for lineno, row in enumerate(rows, start=2):
        pkg = (row.get("package") or "").strip()
        cat = (row.get("category") or "").strip()
        if not pkg or not cat:
            raise MalformedRow("package and category must be non-empty", path=path, line=lineno)
        prev = entries.get(pkg)
        if prev is not None and prev != cat:
            raise DuplicatePackage(pkg, prev, cat, path=path, line=lineno)
        entries[pkg] = cat
    return CategoryMap(entries, DEFAULT_CATEGORIES)


def parse_categories(path) -> CategoryMap:
    """Read a ``package,category`` map.

    Categories outside the default taxonomy are appended to it in order of
    first appearance, so the feature grid grows with the data.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise EmptyFile("no header", path=path)
        if [f.strip() for f in reader.fieldnames[:2]] != ["package", "category"]:
            raise MalformedRow("header must be 'package,category'", path=path, line=1)
        return _categories_from_rows(reader, path)


def write_categories(categories: CategoryMap, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["package", "category"])
        for pkg, cat in sorted(categories.entries.items()):
            writer.writerow([pkg, cat])


def parse_roster(path) -> list[StudentRecord]:
    records = []
    seen = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise EmptyFile("empty CGPA file", path=path)
        if [f.strip() for f in reader.fieldnames[:2]] != ["student_id", "cgpa"]:
            raise MalformedRow("header must be 'student_id,cgpa'", path=path, line=1)
        for row in reader:
            lineno = reader.line_num
            sid = (row.get("student_id") or "").strip()
            if not sid:
                raise MalformedRow("missing student_id", path=path, line=lineno)
            try:
                cgpa = float(row.get("cgpa"))
            except (TypeError, ValueError):
                raise MalformedRow(f"cgpa must be a number, got {row.get('cgpa')!r}",
                                   path=path, line=lineno) from None
            if not 0.0 <= cgpa <= 4.0:
                raise CgpaOutOfRange(sid, cgpa, path=path, line=lineno)
            if sid in seen:
                raise DuplicateStudent(sid, path=path, line=lineno)
            seen.add(sid)
            records.append(StudentRecord(sid, cgpa))
    if not records:
        raise EmptyFile("no CGPA rows", path=path)
    return records


def write_roster(students: Iterable[StudentRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["student_id", "cgpa"])
        for s in students:
            writer.writerow([s.student_id, repr(s.cgpa)])


def parse_cohort(events_path, categories_path, cgpa_path, *, format=None, tz_offset_minutes=None,
                 span_days=DEFAULT_SPAN_DAYS, window_end=None) -> Cohort:
    categories = parse_categories(categories_path) if categories_path else CategoryMap.default()
    students = parse_roster(cgpa_path)
    logs = parse_events(events_path, format, tz_offset_minutes=tz_offset_minutes,
                        span_days=span_days, window_end=window_end)
    cohort = Cohort.build(students, logs, categories)
    if cohort.skipped:
        log.info("%d students have no events: %s", len(cohort.skipped), ", ".join(cohort.skipped))
    if cohort.orphan_logs:
        log.warning("%d logs have no CGPA row and are excluded", len(cohort.orphan_logs))
    return cohort


# ------------------------------------------------------------------ validation

@dataclass(frozen=True)
class StudentValidation:
    student_id: str
    n_events: int
    n_foreground: int
    n_background: int
    n_intervals: int
    unmatched_foreground: int
    unmatched_background: int
    zero_length: int
    first_event: int | None
    last_event: int | None
    window_start: int
    window_end: int
    coverage: float


@dataclass(frozen=True)
class Violation:
    student_id: str
    kind: str
    detail: str
    event_index: int | None = None
    timestamp: int | None = None


@dataclass(frozen=True)
class ValidationReport:
    n_students: int
    n_logs: int
    n_events: int
    per_student: tuple[StudentValidation, ...]
    violations: tuple[Violation, ...]
    unknown_category_packages: int
    skipped: tuple[str, ...] = ()
    orphan_logs: tuple[str, ...] = ()
    extra: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        from dataclasses import asdict
        return {
            "ok": self.ok,
            "n_students": self.n_students,
            "n_logs": self.n_logs,
            "n_events": self.n_events,
            "unknown_category_packages": self.unknown_category_packages,
            "skipped": list(self.skipped),
            "orphan_logs": list(self.orphan_logs),
            "violations": [asdict(v) for v in self.violations],
            "per_student": [asdict(s) for s in self.per_student],
        }


def validate(cohort: Cohort, span_days: int = DEFAULT_SPAN_DAYS) -> ValidationReport:
    """Report-only consistency check of a cohort; never mutates it."""
    from .sessionizer import pair_intervals

    span = span_days * MS_PER_DAY
    rows = []
    violations = []
    unknown = set()
    total = 0
    for sid, lg in cohort.logs.items():
        total += len(lg.events)
        if lg.window_end - lg.window_start != span:
            violations.append(Violation(sid, "window_span",
                                        f"window spans {lg.window_end - lg.window_start} ms, expected {span}"))
        prev = None
        for i, e in enumerate(lg.events):
            if not (lg.window_start <= e.timestamp <= lg.window_end):
                violations.append(Violation(sid, "outside_window",
                                            f"event at {e.timestamp} outside [{lg.window_start}, {lg.window_end}]",
                                            i, e.timestamp))
            if prev is not None and e.timestamp < prev:
                violations.append(Violation(sid, "unsorted", f"timestamp {e.timestamp} after {prev}", i, e.timestamp))
            if not e.package:
                violations.append(Violation(sid, "empty_package", "empty package name", i, e.timestamp))
            elif e.package not in cohort.categories.entries:
                unknown.add(e.package)
            prev = e.timestamp
        intervals, stats = pair_intervals(lg, cohort.categories)
        n_fg = sum(1 for e in lg.events if e.kind is EventKind.FOREGROUND)
        first = lg.events[0].timestamp if lg.events else None
        last = lg.events[-1].timestamp if lg.events else None
        coverage = (last - first) / lg.span_ms if lg.events and lg.span_ms > 0 else 0.0
        rows.append(StudentValidation(sid, len(lg.events), n_fg, len(lg.events) - n_fg, len(intervals),
                                      stats.unmatched_foreground, stats.unmatched_background,
                                      stats.zero_length, first, last, lg.window_start, lg.window_end,
                                      coverage))
    for sid in cohort.orphan_logs:
        violations.append(Violation(sid, "orphan_log", "log has no CGPA roster entry"))
    return ValidationReport(len(cohort.students), len(cohort.logs), total, tuple(rows), tuple(violations),
                            len(unknown), cohort.skipped, cohort.orphan_logs)
