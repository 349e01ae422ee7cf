import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from appusage.periods import PeriodBin, assign_period, period_durations, period_of, split_interval_by_period

import oracles

H = 3_600_000
M = 60_000


@pytest.mark.parametrize("local, expect", [
    (7 * H + 30 * M, PeriodBin.MORNING),
    (18 * H + 30 * M, PeriodBin.EVENING),
    (6 * H, PeriodBin.MORNING),
    (6 * H - 1, PeriodBin.NIGHT),
    (0, PeriodBin.NIGHT),
    (12 * H, PeriodBin.AFTERNOON),
    (24 * H - 1, PeriodBin.EVENING),
])
def test_assign_period(local, expect):
    assert assign_period(local) is expect


def test_labels_round_trip():
    for p in PeriodBin:
        assert PeriodBin.from_label(p.label) is p


def test_split_across_morning_boundary():
    got = split_interval_by_period((5 * H + 59 * M, 6 * H + 2 * M), 0)
    assert got == [(PeriodBin.NIGHT, 60_000), (PeriodBin.MORNING, 120_000)]


def test_split_across_midnight():
    got = split_interval_by_period((23 * H + 59 * M, 24 * H + 2 * M), 0)
    assert got == [(PeriodBin.EVENING, 60_000), (PeriodBin.NIGHT, 120_000)]


def test_split_inside_one_period():
    assert split_interval_by_period((13 * H, 14 * H), 0) == [(PeriodBin.AFTERNOON, H)]


def test_timezone_shifts_local_time():
    # 01:00 UTC is 07:00 at +360 minutes
    assert period_of(1 * H, 360) == PeriodBin.MORNING
    assert period_of(1 * H, 0) == PeriodBin.NIGHT


@given(st.integers(0, 3 * 1440), st.integers(1, 3 * 1440))
def test_split_matches_minute_oracle(start_min, length):
    got = dict(split_interval_by_period((start_min * M, (start_min + length) * M), 0))
    assert {int(k): v for k, v in got.items()} == oracles.period_pieces_by_minute(start_min, start_min + length)


@given(st.integers(-10**12, 10**12), st.integers(1, 10 * 86_400_000), st.integers(-720, 840))
def test_split_matches_walk_oracle(start, length, tz):
    got = dict(split_interval_by_period((start, start + length), tz))
    assert {int(k): v for k, v in got.items()} == oracles.period_pieces_by_ms(start, start + length, tz)
    assert sum(got.values()) == length


def test_vectorized_durations_agree():
    rng = np.random.default_rng(3)
    start = rng.integers(0, 10**10, 200)
    end = start + rng.integers(1, 3 * 86_400_000, 200)
    grid = period_durations(start, end, 360)
    for s, e, row in zip(start, end, grid):
        expect = oracles.period_pieces_by_ms(int(s), int(e), 360)
        assert row.tolist() == [expect.get(p, 0) for p in range(4)]
