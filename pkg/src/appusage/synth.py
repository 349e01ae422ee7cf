"""Seeded synthetic cohorts with planted ground truth.

The generator decides every student's usage totals first and then lays out
events that realise them, so featurising the output gives the planted numbers
back exactly.  Planted features are tied to CGPA either through a Gaussian
copula with a target Spearman correlation (``outcome="copula"``) or by making
CGPA a linear function of the feature values plus noise (``outcome="linear"``).
All other usage is independent background noise.

Intervals never overlap and never cross a six-hour day-part boundary, so each
interval belongs to exactly one period of one day.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.special import ndtr

from .errors import InfeasibleTotal
from .featurize import CORE_METRICS, PHONE, parse_feature_name
from .ingest import (
    DEFAULT_CATEGORIES,
    DEFAULT_TZ_OFFSET_MINUTES,
    MS_PER_DAY,
    CategoryMap,
    Cohort,
    EventKind,
    EventLog,
    StudentRecord,
    UsageEvent,
)
from .periods import DAY_PARTS, PeriodBin

SLOT_MS = MS_PER_DAY // 4
LOCAL_EPOCH = 1_672_531_200_000  # 2023-01-01 00:00 local
APPS_PER_CATEGORY = 12
MIN_INTERVAL_MS = 1_000

# copula mode: uniform score -> integer total, [lo, hi]
COPULA_RANGES = {"duration": (120_000, 5_400_000), "launches": (1, 30), "n_apps": (1, 8)}
# linear mode: center and spread of the planted value, hard floor and ceiling
LINEAR_SHAPE = {"duration": (1_800_000, 480_000, 60_000, 10_000_000),
                "launches": (20, 5, 1, 60),
                "n_apps": (6, 1.5, 1, APPS_PER_CATEGORY)}


@dataclass(frozen=True)
class PlantedEffect:
    feature: str
    target_spearman: float = 0.0
    coefficient: float = 0.0


@dataclass(frozen=True)
class SynthConfig:
    """Generator settings.

    ``planted_effects`` name category-level ``duration``, ``launches`` or
    ``n_apps`` features.  In copula mode ``target_spearman`` sets the strength;
    in linear mode CGPA = ``intercept`` + sum of ``coefficient`` times the
    feature's standardised value + N(0, ``noise_sd``), clipped to [0, 4].
    """

    n_students: int = 120
    categories: tuple[str, ...] = DEFAULT_CATEGORIES
    planted_effects: tuple[PlantedEffect, ...] = ()
    noise_sd: float = 0.2
    days: int = 7
    seed: int = 0
    rank_noise: bool = True
    outcome: str = "copula"
    intercept: float = 3.0
    usage_prob: float = 0.35
    tz_offset_minutes: int = DEFAULT_TZ_OFFSET_MINUTES

    def __post_init__(self):
        object.__setattr__(self, "categories", tuple(self.categories))
        effects = tuple(e if isinstance(e, PlantedEffect) else PlantedEffect(**e) for e in self.planted_effects)
        object.__setattr__(self, "planted_effects", effects)
        if self.n_students < 1:
            raise ValueError("n_students must be positive")
        if self.days < 1:
            raise ValueError("days must be positive")
        if self.outcome not in ("copula", "linear"):
            raise ValueError(f"unknown outcome mode {self.outcome!r}")
        seen = set()
        for e in effects:
            scope, metric, _ = parse_feature_name(e.feature)
            if scope == PHONE or scope not in self.categories:
                raise ValueError(f"{e.feature}: planted scope must be a category of the taxonomy")
            if metric not in CORE_METRICS:
                raise ValueError(f"{e.feature}: only {', '.join(CORE_METRICS)} can be planted")
            if not -1.0 < e.target_spearman < 1.0:
                raise ValueError(f"{e.feature}: target_spearman must lie in (-1, 1)")
            if e.feature in seen:
                raise ValueError(f"{e.feature} planted twice")
            seen.add(e.feature)

    @classmethod
    def from_dict(cls, d: Mapping) -> "SynthConfig":
        d = dict(d)
        if d.get("categories") is None:
            d.pop("categories", None)
        d["planted_effects"] = tuple(PlantedEffect(**e) for e in d.get("planted_effects", ()))
        return cls(**d)

    def to_dict(self) -> dict:
        return {
            "n_students": self.n_students,
            "categories": list(self.categories),
            "planted_effects": [vars(e).copy() for e in self.planted_effects],
            "noise_sd": self.noise_sd,
            "days": self.days,
            "seed": self.seed,
            "rank_noise": self.rank_noise,
            "outcome": self.outcome,
            "intercept": self.intercept,
            "usage_prob": self.usage_prob,
            "tz_offset_minutes": self.tz_offset_minutes,
        }


@dataclass(frozen=True)
class CellTotals:
    duration: int
    launches: int
    n_apps: int


@dataclass(frozen=True)
class StudentProfile:
    """Usage totals per (category, period label) cell.

    A cell with period ``"whole"`` spreads over all four day parts; a category
    may not have both a whole-day cell and day-part cells.
    """

    student_id: str
    cells: Mapping[tuple[str, str], CellTotals] = field(default_factory=dict)
    days: int = 7
    tz_offset_minutes: int = DEFAULT_TZ_OFFSET_MINUTES


@dataclass(frozen=True)
class GroundTruth:
    cgpa: Mapping[str, float]
    planted: Mapping[str, Mapping[str, int]]
    effects: tuple[PlantedEffect, ...]

    def to_dict(self) -> dict:
        return {"cgpa": dict(self.cgpa),
                "planted": {f: dict(v) for f, v in self.planted.items()},
                "effects": [vars(e).copy() for e in self.effects]}


def synth_categories(category_set: Sequence[str]) -> CategoryMap:
    """Category map with a fixed pool of package names per category."""
    entries = {}
    for i, cat in enumerate(category_set):
        for j in range(APPS_PER_CATEGORY):
            entries[package_name(i, j)] = cat
    return CategoryMap(entries, tuple(category_set))


def package_name(cat_index: int, app_index: int) -> str:
    return f"synth.c{cat_index:02d}.app{app_index:02d}"


def _composition(rng, total: int, parts: int) -> np.ndarray:
    """Random split of ``total`` into ``parts`` non-negative integers."""
    if parts == 1:
        return np.array([total], dtype=np.int64)
    cuts = np.sort(rng.integers(0, total + 1, size=parts - 1))
    return np.diff(np.concatenate([[0], cuts, [total]])).astype(np.int64)


def _split_duration(rng, total: int, parts: int, cap: int) -> np.ndarray:
    if total < parts:
        raise InfeasibleTotal(f"duration {total} ms cannot cover {parts} intervals")
    if total > parts * cap:
        raise InfeasibleTotal(f"duration {total} ms exceeds {parts} intervals of at most {cap} ms")
    if parts == 1:
        return np.array([total], dtype=np.int64)
    d = _composition(rng, total - parts, parts) + 1
    if d.max() <= cap:
        return d
    excess = int(np.maximum(d - cap, 0).sum())
    d = np.minimum(d, cap)
    i = 0
    while excess:
        room = cap - d[i]
        take = min(room, excess)
        d[i] += take
        excess -= take
        i += 1
    return d


def gen_event_log(profile: StudentProfile, seed=0, categories: Sequence[str] = DEFAULT_CATEGORIES) -> EventLog:
    """Events realising ``profile`` exactly.

    Every cell's intervals go into random days of its day part(s); each
    six-hour slot is then filled with its intervals in random order separated
    by random positive gaps.
    """
    rng = np.random.default_rng(seed)
    days = profile.days
    cat_index = {c: i for i, c in enumerate(categories)}
    by_category: dict[str, set[str]] = {}
    for cat, period in profile.cells:
        if cat not in cat_index:
            raise ValueError(f"unknown category {cat!r}")
        PeriodBin.from_label(period)
        by_category.setdefault(cat, set()).add(period)
    for cat, periods in by_category.items():
        if "whole" in periods and len(periods) > 1:
            raise ValueError(f"{cat}: whole-day cell overlaps day-part cells")

    n_slots = days * len(DAY_PARTS)
    durs, codes, slots, cands = [], [], [], []
    for (cat, period), tot in sorted(profile.cells.items()):
        if tot.launches == 0:
            if tot.duration or tot.n_apps:
                raise InfeasibleTotal(f"{cat}/{period}: usage without launches")
            continue
        if not 1 <= tot.n_apps <= min(tot.launches, APPS_PER_CATEGORY):
            raise InfeasibleTotal(f"{cat}/{period}: {tot.n_apps} apps for {tot.launches} launches")
        durs.append(_split_duration(rng, tot.duration, tot.launches, SLOT_MS - 2))
        apps = np.concatenate([np.arange(tot.n_apps), rng.integers(0, tot.n_apps, tot.launches - tot.n_apps)])
        rng.shuffle(apps)
        pkg_offset = int(rng.integers(0, APPS_PER_CATEGORY))
        codes.append(cat_index[cat] * APPS_PER_CATEGORY + (apps + pkg_offset) % APPS_PER_CATEGORY)
        parts = np.arange(len(DAY_PARTS)) if period == "whole" else np.array([int(PeriodBin.from_label(period))])
        cand = (np.arange(days)[None, :] * len(DAY_PARTS) + parts[:, None]).reshape(-1)
        slots.append(cand[rng.integers(0, len(cand), tot.launches)])
        cands.append(cand)
    if not durs:
        dur = code = slot = np.zeros(0, dtype=np.int64)
    else:
        dur, code, slot = (np.concatenate(a).astype(np.int64) for a in (durs, codes, slots))
    # each interval reserves its duration plus one gap; one more gap closes the slot
    if np.any(np.bincount(slot, weights=dur + 1, minlength=n_slots) > SLOT_MS - 1):
        slot = _first_fit(dur, slot, durs, cands, n_slots)

    n = len(dur)
    order = np.lexsort((rng.random(n), slot))
    slot, dur, code = slot[order], dur[order], code[order]
    counts = np.bincount(slot, minlength=n_slots)
    load = np.zeros(n_slots, dtype=np.int64)
    np.add.at(load, slot, dur)
    first = np.concatenate([[0], np.cumsum(counts)[:-1]])
    rank = np.arange(n) - first[slot]
    free = SLOT_MS - load - counts - 1
    cuts = rng.integers(0, free[slot] + 1) if n else np.zeros(0, dtype=np.int64)
    cuts = cuts[np.lexsort((cuts, slot))]
    cum = np.cumsum(dur) - dur
    before = cum - cum[first[slot]] if n else cum

    tz = profile.tz_offset_minutes
    window_start = LOCAL_EPOCH - tz * 60_000
    start = window_start + slot * SLOT_MS + cuts + rank + 1 + before
    end = start + dur
    names = {c: package_name(c // APPS_PER_CATEGORY, c % APPS_PER_CATEGORY) for c in np.unique(code).tolist()}
    events = []
    fg, bg = EventKind.FOREGROUND, EventKind.BACKGROUND
    for s, e, c in zip(start.tolist(), end.tolist(), code.tolist()):
        pkg = names[c]
        app = pkg.rsplit(".", 1)[-1]
        events.append(UsageEvent(s, pkg, fg, app))
        events.append(UsageEvent(e, pkg, bg, app))
    return EventLog.from_events(profile.student_id, events, window_end=window_start + days * MS_PER_DAY,
                                span_days=days, tz_offset_minutes=tz)


def _first_fit(dur, slot, durs, cands, n_slots):
    """Move intervals out of overfull slots, cell by cell, into the next slot with room."""
    remaining = np.full(n_slots, SLOT_MS - 1, dtype=np.int64)
    out = slot.copy()
    i = 0
    for cell_durs, cand in zip(durs, cands):
        pos = {int(s): k for k, s in enumerate(cand)}
        for d in cell_durs.tolist():
            k0 = pos[int(slot[i])]
            for k in range(len(cand)):
                s = int(cand[(k0 + k) % len(cand)])
                if remaining[s] >= d + 1:
                    remaining[s] -= d + 1
                    out[i] = s
                    break
            else:
                raise InfeasibleTotal(f"{sum(cell_durs.tolist())} ms does not fit the period")
            i += 1
    return out


# ------------------------------------------------------------------ cohorts

def _spearman_to_pearson(rho_s: float) -> float:
    # Gaussian copula: rank correlation rho_s corresponds to 2 sin(pi rho_s / 6)
    return 2.0 * math.sin(math.pi * rho_s / 6.0)


def _copula_value(metric: str, h: float) -> int:
    lo, hi = COPULA_RANGES[metric]
    return min(hi, lo + int(float(ndtr(h)) * (hi - lo + 1)))


def _linear_value(metric: str, h: float) -> int:
    center, spread, lo, hi = LINEAR_SHAPE[metric]
    return int(min(hi, max(lo, round(center + spread * h))))


def _random_cell(rng) -> CellTotals:
    launches = 1 + int(rng.poisson(2.0))
    apps = min(APPS_PER_CATEGORY, 1 + int(rng.binomial(launches - 1, 0.3)))
    per = np.minimum(np.maximum(MIN_INTERVAL_MS, np.exp(rng.normal(math.log(30_000), 1.0, launches))), 3_600_000)
    return CellTotals(int(per.astype(np.int64).sum()), launches, apps)


def _fill_cell(rng, planted: Mapping[str, int]) -> CellTotals:
    """Complete a cell from its planted metrics, drawing the rest at random."""
    apps = planted.get("n_apps")
    launches = planted.get("launches")
    duration = planted.get("duration")
    if launches is None:
        launches = (apps or 1) + int(rng.poisson(3.0))
        if duration is not None:
            launches = max(1, min(launches, duration // MIN_INTERVAL_MS))
    if apps is None:
        apps = min(APPS_PER_CATEGORY, launches, 1 + int(rng.binomial(launches - 1, 0.3)))
    apps = min(apps, launches)
    if duration is None:
        per = np.exp(rng.normal(math.log(60_000), 0.8, launches))
        duration = int(np.maximum(MIN_INTERVAL_MS, per).astype(np.int64).sum())
    return CellTotals(int(duration), int(launches), int(apps))


def student_ids(n: int) -> list[str]:
    width = max(3, len(str(n - 1)))
    return [f"s{i:0{width}d}" for i in range(n)]


def gen_cohort(config: SynthConfig) -> tuple[Cohort, GroundTruth]:
    """Generate a cohort and the ground truth it was built from."""
    cats = config.categories
    effects = config.planted_effects
    planted_cells: dict[tuple[str, str], list[tuple[int, str]]] = {}
    for k, e in enumerate(effects):
        scope, metric, period = parse_feature_name(e.feature)
        planted_cells.setdefault((scope, period), []).append((k, metric))
    planted_cats = {c for c, _ in planted_cells}
    for cat in planted_cats:
        periods = {p for c, p in planted_cells if c == cat}
        if "whole" in periods and len(periods) > 1:
            raise ValueError(f"{cat}: cannot plant whole-day and day-part features together")
    free_cats = [c for c in cats if c not in planted_cats]

    ids = student_ids(config.n_students)
    students, logs = [], []
    planted: dict[str, dict[str, int]] = {e.feature: {} for e in effects}
    cgpa_of: dict[str, float] = {}
    for i, sid in enumerate(ids):
        lat = np.random.default_rng([config.seed, 1, i])
        g = float(lat.standard_normal())
        noise = lat.standard_normal(len(effects))
        extra = float(lat.standard_normal())
        values: list[int] = []
        if config.outcome == "copula":
            for k, e in enumerate(effects):
                r = _spearman_to_pearson(e.target_spearman)
                h = r * g + math.sqrt(1.0 - r * r) * noise[k] if config.rank_noise else (g if r >= 0 else -g)
                values.append(_copula_value(parse_feature_name(e.feature)[1], h))
        else:
            values = [_linear_value(parse_feature_name(e.feature)[1], float(noise[k]))
                      for k, e in enumerate(effects)]

        prof_rng = np.random.default_rng([config.seed, 2, i])
        cells: dict[tuple[str, str], CellTotals] = {}
        for (cat, period), members in sorted(planted_cells.items()):
            cell = _fill_cell(prof_rng, {m: values[k] for k, m in members})
            cells[(cat, period)] = cell
            for k, m in members:
                values[k] = getattr(cell, m)
        for cat in free_cats:
            if prof_rng.random() >= config.usage_prob:
                continue
            n_parts = int(prof_rng.integers(1, 4))
            for p in sorted(prof_rng.choice(len(DAY_PARTS), n_parts, replace=False).tolist()):
                cells[(cat, PeriodBin(p).label)] = _random_cell(prof_rng)

        if config.outcome == "copula":
            cgpa = 4.0 * float(ndtr(0.9 + 0.6 * g))
        else:
            cgpa = config.intercept + config.noise_sd * extra
            for k, e in enumerate(effects):
                center, spread, _, _ = LINEAR_SHAPE[parse_feature_name(e.feature)[1]]
                cgpa += e.coefficient * (values[k] - center) / spread
            cgpa = min(4.0, max(0.0, cgpa))
        for k, e in enumerate(effects):
            planted[e.feature][sid] = values[k]
        cgpa_of[sid] = cgpa
        students.append(StudentRecord(sid, cgpa))
        profile = StudentProfile(sid, cells, config.days, config.tz_offset_minutes)
        logs.append(gen_event_log(profile, [config.seed, 3, i], cats))

    cohort = Cohort.build(students, logs, synth_categories(cats))
    return cohort, GroundTruth(cgpa_of, planted, effects)
