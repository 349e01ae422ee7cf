"""Diurnal periods: four six-hour bins of the local day plus the whole day.

Bins are half-open, ``[00:00, 06:00)`` is night, ``[06:00, 12:00)`` morning,
``[12:00, 18:00)`` afternoon and ``[18:00, 24:00)`` evening.
"""
from __future__ import annotations

from enum import IntEnum

import numpy as np

MS_PER_DAY = 86_400_000
PERIOD_MS = MS_PER_DAY // 4


class PeriodBin(IntEnum):
    NIGHT = 0
    MORNING = 1
    AFTERNOON = 2
    EVENING = 3
    WHOLE_DAY = 4

    @property
    def label(self) -> str:
        return _LABELS[self]

    @classmethod
    def from_label(cls, label: str) -> "PeriodBin":
        return _BY_LABEL[label]


_LABELS = {
    PeriodBin.NIGHT: "night",
    PeriodBin.MORNING: "morning",
    PeriodBin.AFTERNOON: "afternoon",
    PeriodBin.EVENING: "evening",
    PeriodBin.WHOLE_DAY: "whole",
}
_BY_LABEL = {v: k for k, v in _LABELS.items()}

DAY_PARTS = (PeriodBin.NIGHT, PeriodBin.MORNING, PeriodBin.AFTERNOON, PeriodBin.EVENING)
ALL_PERIODS = DAY_PARTS + (PeriodBin.WHOLE_DAY,)


def to_local(ms, tz_offset_minutes: int):
    return ms + tz_offset_minutes * 60_000


def assign_period(local_ms_of_day: int) -> PeriodBin:
    if not 0 <= local_ms_of_day < MS_PER_DAY:
        raise ValueError(f"ms of day out of range: {local_ms_of_day}")
    return PeriodBin(local_ms_of_day // PERIOD_MS)


def period_of(ms, tz_offset_minutes: int):
    """Day-part index (0..3) of UTC instants; works on scalars and arrays."""
    return (to_local(ms, tz_offset_minutes) % MS_PER_DAY) // PERIOD_MS


def _cumulative(local_ms, part: int):
    # Milliseconds spent in ``part`` between local epoch 0 and ``local_ms``.
    days, rem = np.divmod(local_ms, MS_PER_DAY)
    return days * PERIOD_MS + np.clip(rem - part * PERIOD_MS, 0, PERIOD_MS)


def period_durations(start, end, tz_offset_minutes: int) -> np.ndarray:
    """Split ``[start, end)`` intervals over the four day parts.

    Returns an int64 array of shape ``(len(start), 4)`` whose rows sum to
    ``end - start``.  Intervals may span several days.
    """
    s = to_local(np.asarray(start, dtype=np.int64), tz_offset_minutes)
    e = to_local(np.asarray(end, dtype=np.int64), tz_offset_minutes)
    out = np.empty(s.shape + (4,), dtype=np.int64)
    for part in range(4):
        out[..., part] = _cumulative(e, part) - _cumulative(s, part)
    return out


def split_interval_by_period(interval, tz_offset_minutes: int) -> list[tuple[PeriodBin, int]]:
    """Apportion one interval to the day parts it overlaps.

    ``interval`` is anything with ``start``/``end`` attributes or a
    ``(start, end)`` pair.  Pieces are listed in the order the interval first
    enters each part, zero pieces omitted.
    """
    if hasattr(interval, "start"):
        start, end = interval.start, interval.end
    else:
        start, end = interval
    durations = period_durations(np.array([start]), np.array([end]), tz_offset_minutes)[0]
    first = int(period_of(start, tz_offset_minutes))
    pieces = []
    for k in range(4):
        part = (first + k) % 4
        if durations[part]:
            pieces.append((PeriodBin(part), int(durations[part])))
    return pieces
