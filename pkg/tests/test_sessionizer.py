import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from appusage.ingest import EventKind, EventLog, UsageEvent
from appusage.periods import PeriodBin
from appusage.sessionizer import (
    GAP_THRESHOLD_MS,
    SessionKind,
    UsageInterval,
    build_sessions,
    classify_session,
    pair_intervals,
    session_counts,
)

import oracles

FG, BG = EventKind.FOREGROUND, EventKind.BACKGROUND


def make_log(rows, window_end=None, span_days=7):
    events = [UsageEvent(t, pkg, EventKind(kind)) for t, pkg, kind in rows]
    if window_end is None:
        window_end = max(t for t, _, _ in rows) if rows else 0
    return EventLog.from_events("s1", events, window_end=window_end, span_days=span_days, tz_offset_minutes=0)


def iv(start_s, end_s, pkg="a"):
    return UsageInterval(pkg, "Unknown", int(start_s * 1000), int(end_s * 1000))


# ------------------------------------------------------------ pairing

def test_single_pair():
    ivs, stats = pair_intervals(make_log([(0, "A", "fg"), (10_000, "A", "bg")]))
    assert [(i.package, i.start, i.end) for i in ivs] == [("A", 0, 10_000)]
    assert ivs[0].duration == 10_000
    assert stats.unmatched_foreground == stats.unmatched_background == 0


def test_per_package_pairing_allows_overlap():
    log = make_log([(0, "A", "fg"), (5000, "B", "fg"), (10_000, "A", "bg"), (12_000, "B", "bg")])
    ivs, _ = pair_intervals(log)
    assert [(i.package, i.start, i.end) for i in ivs] == [("A", 0, 10_000), ("B", 5000, 12_000)]


def test_dangling_events():
    log = make_log([(3000, "A", "bg"), (5000, "A", "fg")], window_end=20_000)
    ivs, stats = pair_intervals(log)
    assert stats.unmatched_background == 1
    assert stats.unmatched_foreground == 1
    assert [(i.package, i.start, i.end) for i in ivs] == [("A", 5000, 20_000)]


def test_zero_length_counted_and_dropped():
    ivs, stats = pair_intervals(make_log([(1000, "A", "fg"), (1000, "A", "bg"), (2000, "B", "fg"),
                                          (3000, "B", "bg")]))
    assert stats.zero_length == 1
    assert [(i.package, i.start, i.end) for i in ivs] == [("B", 2000, 3000)]


def random_rows(rng, n_events, n_pkgs=3, horizon=600_000):
    ts = np.sort(rng.integers(0, horizon, n_events))
    return [(int(t), f"p{rng.integers(n_pkgs)}", "fg" if rng.random() < 0.5 else "bg") for t in ts]


def test_pairing_matches_oracle_on_random_logs():
    rng = np.random.default_rng(7)
    for _ in range(500):
        rows = random_rows(rng, int(rng.integers(0, 51)))
        end = 600_000
        log = make_log(rows, window_end=end)
        ivs, stats = pair_intervals(log)
        expect, (ufg, ubg, zero) = oracles.pair_events(rows, log.window_start, end)
        assert [(i.package, i.start, i.end) for i in ivs] == expect
        assert (stats.unmatched_foreground, stats.unmatched_background, stats.zero_length) == (ufg, ubg, zero)


# ------------------------------------------------------------ sessions

def test_gap_within_threshold_merges():
    s = build_sessions([iv(0, 10), iv(40, 70)])
    assert len(s) == 1
    assert s[0].spent_ms == 40_000


def test_gap_beyond_threshold_splits():
    assert len(build_sessions([iv(0, 10), iv(60, 70)])) == 2


def test_empty_interval_list():
    assert build_sessions([]) == []


def test_gap_boundary_is_inclusive():
    assert len(build_sessions([iv(0, 10), iv(55, 60)])) == 1          # exactly 45 s
    assert len(build_sessions([iv(0, 10), iv(55.001, 60)])) == 2      # 45.001 s


def test_gap_measured_from_latest_end():
    # the short second interval ends before the first; the gap counts from 100 s
    s = build_sessions([iv(0, 100), iv(10, 20), iv(140, 150)])
    assert len(s) == 1
    assert s[0].spent_ms == 100_000 + 10_000 + 10_000


@pytest.mark.parametrize("ms, kind", [
    (0, SessionKind.MICRO), (15_000, SessionKind.MICRO), (15_001, SessionKind.REVIEW),
    (60_000, SessionKind.REVIEW), (60_001, SessionKind.ENGAGE), (10**9, SessionKind.ENGAGE),
])
def test_classification_thresholds(ms, kind):
    assert classify_session(ms) is kind


def test_classification_rejects_negative():
    with pytest.raises(ValueError):
        classify_session(-1)


@given(st.integers(min_value=0, max_value=10**7))
def test_classification_partitions(ms):
    kinds = [ms <= 15_000, 15_000 < ms <= 60_000, ms > 60_000]
    assert sum(kinds) == 1
    assert classify_session(ms) is [SessionKind.MICRO, SessionKind.REVIEW, SessionKind.ENGAGE][kinds.index(True)]


def test_sessions_match_oracle_on_random_logs():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        rows = random_rows(rng, int(rng.integers(0, 51)))
        log = make_log(rows, window_end=600_000)
        ivs, _ = pair_intervals(log)
        got = [(s.start, s.end, s.spent_ms, s.kind.value, len(s.intervals)) for s in build_sessions(ivs)]
        assert got == oracles.sessions([(i.start, i.end) for i in ivs])


def test_session_counts_by_start_period():
    two_am = 2 * 3_600_000
    ivs = [UsageInterval("a", "Unknown", two_am, two_am + 5000),
           UsageInterval("a", "Unknown", two_am + 600_000, two_am + 700_000)]
    sessions = build_sessions(ivs)
    night = session_counts(sessions, PeriodBin.NIGHT, 0)
    assert tuple(night) == (2, 1, 0, 1)
    assert tuple(session_counts(sessions, PeriodBin.MORNING, 0)) == (0, 0, 0, 0)
    assert tuple(session_counts([], PeriodBin.WHOLE_DAY)) == (0, 0, 0, 0)


interval_lists = st.lists(
    st.tuples(st.integers(0, 2_000_000), st.integers(1, 200_000)).map(lambda t: (t[0], t[0] + t[1])),
    max_size=40)


@given(interval_lists, st.integers(0, 200_000), st.integers(0, 200_000))
@settings(max_examples=200)
def test_session_properties(pairs, g1, g2):
    ivs = [UsageInterval("a", "Unknown", s, e) for s, e in pairs]
    lo, hi = sorted((g1, g2))
    s_lo = build_sessions(ivs, lo)
    s_hi = build_sessions(ivs, hi)
    # conservation and monotone merge
    assert sum(s.spent_ms for s in s_lo) == sum(e - s for s, e in pairs)
    assert len(s_hi) <= len(s_lo)
    for s in s_lo:
        assert s.kind is classify_session(s.spent_ms)
        members = s.intervals
        for k in range(1, len(members)):
            assert members[k].start - max(m.end for m in members[:k]) <= lo
    counts = session_counts(s_lo)
    assert counts.total == counts.micro + counts.review + counts.engage == len(s_lo)


def test_default_gap_constant():
    assert GAP_THRESHOLD_MS == 45_000
