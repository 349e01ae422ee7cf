"""Usage intervals and sessions.

A usage interval is one foreground event paired with the next background
event of the same package.  Intervals of all apps are merged into one
session while the idle gap between the end of the session so far and the
next launch stays within the gap threshold (45 s by default).  Sessions are
then classed by the total time spent in them.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from enum import Enum
from typing import Iterable, NamedTuple, Sequence

from .ingest import UNKNOWN_CATEGORY, CategoryMap, EventKind, EventLog
from .periods import PeriodBin, period_of

GAP_THRESHOLD_MS = 45_000
MICRO_MAX_MS = 15_000
REVIEW_MAX_MS = 60_000


@dataclass(frozen=True, slots=True)
class UsageInterval:
    package: str
    category: str
    start: int
    end: int

    @property
    def duration(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class PairingStats:
    unmatched_foreground: int = 0
    unmatched_background: int = 0
    zero_length: int = 0
    clamped: int = 0


class SessionKind(str, Enum):
    MICRO = "micro"
    REVIEW = "review"
    ENGAGE = "engage"


@dataclass(frozen=True)
class Session:
    intervals: tuple[UsageInterval, ...]
    start: int
    end: int
    spent_ms: int
    kind: SessionKind


@dataclass(frozen=True)
class SessionParams:
    gap_ms: int = GAP_THRESHOLD_MS
    micro_ms: int = MICRO_MAX_MS
    review_ms: int = REVIEW_MAX_MS


class SessionCounts(NamedTuple):
    total: int
    micro: int
    review: int
    engage: int


def pair_intervals(log: EventLog, categories: CategoryMap | None = None):
    """Pair foreground and background events per package.

    Each foreground event takes the earliest later background event of the
    same package (first in, first out).  Foregrounds still open at the end are
    closed at ``window_end``; backgrounds with nothing open are dropped;
    zero-length pairs are dropped.  All three are counted in the returned
    :class:`PairingStats`.  Interval bounds are clamped to the log window.

    Returns
    -------
    (list of UsageInterval sorted by start, PairingStats)
    """
    lookup = categories.lookup if categories is not None else (lambda _pkg: UNKNOWN_CATEGORY)
    lo, hi = log.window_start, log.window_end
    open_fg: dict[str, deque] = {}
    cats: dict[str, str] = {}
    pairs = []
    unmatched_bg = 0
    fg = EventKind.FOREGROUND
    for e in log.events:
        pkg = e.package
        if e.kind is fg:
            q = open_fg.get(pkg)
            if q is None:
                q = open_fg[pkg] = deque()
            q.append(e.timestamp)
        else:
            q = open_fg.get(pkg)
            if q:
                pairs.append((q.popleft(), e.timestamp, pkg))
            else:
                unmatched_bg += 1
    unmatched_fg = 0
    for pkg, q in open_fg.items():
        unmatched_fg += len(q)
        pairs.extend((t, hi, pkg) for t in q)

    intervals = []
    zero = clamped = 0
    for start, end, pkg in pairs:
        if start < lo or end > hi:
            clamped += 1
            start = max(start, lo)
            end = min(end, hi)
        if end <= start:
            zero += 1
            continue
        cat = cats.get(pkg)
        if cat is None:
            cat = cats[pkg] = lookup(pkg)
        intervals.append(UsageInterval(pkg, cat, start, end))
    intervals.sort(key=lambda iv: (iv.start, iv.end))
    return intervals, PairingStats(unmatched_fg, unmatched_bg, zero, clamped)


def classify_session(spent_ms: int, micro_ms: int = MICRO_MAX_MS,
                     review_ms: int = REVIEW_MAX_MS) -> SessionKind:
    if spent_ms < 0:
        raise ValueError("spent time must be non-negative")
    if spent_ms <= micro_ms:
        return SessionKind.MICRO
    if spent_ms <= review_ms:
        return SessionKind.REVIEW
    return SessionKind.ENGAGE


def build_sessions(intervals: Iterable[UsageInterval], gap_threshold_ms: int = GAP_THRESHOLD_MS, *,
                   micro_ms: int = MICRO_MAX_MS, review_ms: int = REVIEW_MAX_MS) -> list[Session]:
    """Merge one student's intervals into sessions.

    A new session starts when the next interval begins more than
    ``gap_threshold_ms`` after the latest end seen in the current session.
    Overlapping or touching intervals always share a session.  Spent time is
    the sum of interval durations, not the session span.
    """
    ordered = sorted(intervals, key=lambda iv: (iv.start, iv.end))
    sessions = []
    members: list[UsageInterval] = []
    end = spent = 0

    def flush():
        sessions.append(Session(tuple(members), members[0].start, end, spent,
                                classify_session(spent, micro_ms, review_ms)))

    for iv in ordered:
        if members and iv.start - end > gap_threshold_ms:
            flush()
            members = []
            spent = 0
        if not members:
            end = iv.end
        elif iv.end > end:
            end = iv.end
        members.append(iv)
        spent += iv.end - iv.start
    if members:
        flush()
    return sessions


def session_counts(sessions: Sequence[Session], period: PeriodBin = PeriodBin.WHOLE_DAY,
                   tz_offset_minutes: int = 0) -> SessionCounts:
    """Count sessions by kind, attributing each to the period of its start."""
    counts = {SessionKind.MICRO: 0, SessionKind.REVIEW: 0, SessionKind.ENGAGE: 0}
    whole = period == PeriodBin.WHOLE_DAY
    for s in sessions:
        if whole or period_of(s.start, tz_offset_minutes) == period:
            counts[s.kind] += 1
    micro, review, engage = counts[SessionKind.MICRO], counts[SessionKind.REVIEW], counts[SessionKind.ENGAGE]
    return SessionCounts(micro + review + engage, micro, review, engage)


def sessionize(log: EventLog, categories: CategoryMap | None = None,
               params: SessionParams = SessionParams()):
    """Pair and merge in one call; returns (intervals, sessions, stats)."""
    intervals, stats = pair_intervals(log, categories)
    sessions = build_sessions(intervals, params.gap_ms, micro_ms=params.micro_ms,
                              review_ms=params.review_ms)
    return intervals, sessions, stats


SESSION_CSV_COLUMNS = ("student_id", "session_index", "start_iso", "end_iso", "spent_ms", "kind",
                       "n_intervals")


def iso_local(ms: int, tz_offset_minutes: int) -> str:
    tz = timezone(timedelta(minutes=tz_offset_minutes))
    return (_EPOCH + timedelta(milliseconds=ms)).astimezone(tz).isoformat(timespec="milliseconds")


_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)


def session_rows(student_id: str, sessions: Sequence[Session], tz_offset_minutes: int):
    for i, s in enumerate(sessions):
        yield (student_id, i, iso_local(s.start, tz_offset_minutes), iso_local(s.end, tz_offset_minutes),
               s.spent_ms, s.kind.value, len(s.intervals))
