import json
import warnings

import numpy as np
import pytest

from appusage.errors import (
    CgpaOutOfRange,
    DuplicatePackage,
    DuplicateStudent,
    EmptyFile,
    MalformedRow,
    UnknownKind,
)
from appusage.ingest import (
    DEFAULT_CATEGORIES,
    MS_PER_DAY,
    CategoryMap,
    Cohort,
    EventKind,
    EventLog,
    StudentRecord,
    UsageEvent,
    parse_categories,
    parse_cohort,
    parse_events,
    parse_roster,
    validate,
    write_events,
)
from appusage.synth import SynthConfig, gen_cohort


def write_jsonl(path, rows):
    path.write_text("".join(json.dumps(r) + "\n" for r in rows))
    return path


def ev(sid, t, pkg, kind, app=None):
    return {"student_id": sid, "t": t, "package": pkg, "app": app, "kind": kind}


def test_minimal_file(tmp_path):
    p = write_jsonl(tmp_path / "e.jsonl", [ev("s1", 0, "a", "fg"), ev("s1", 10_000, "a", "bg")])
    logs = parse_events(p)
    assert len(logs) == 1
    assert [e.timestamp for e in logs[0].events] == [0, 10_000]
    assert logs[0].window_end == 10_000
    assert logs[0].window_end - logs[0].window_start == 7 * MS_PER_DAY


def test_unknown_kind_names_line(tmp_path):
    p = write_jsonl(tmp_path / "e.jsonl", [ev("s1", 0, "a", "fg"), ev("s1", 5, "a", "xx")])
    with pytest.raises(UnknownKind) as err:
        parse_events(p)
    assert err.value.line == 2
    assert str(err.value).startswith(f"{p}:2:")


@pytest.mark.parametrize("bad", [
    {"student_id": "s1", "t": "soon", "package": "a", "kind": "fg"},
    {"student_id": "s1", "t": 1, "package": "", "kind": "fg"},
    {"t": 1, "package": "a", "kind": "fg"},
])
def test_malformed_rows(tmp_path, bad):
    p = write_jsonl(tmp_path / "e.jsonl", [ev("s1", 0, "a", "fg"), bad])
    with pytest.raises(MalformedRow) as err:
        parse_events(p)
    assert err.value.line == 2


def test_invalid_json_line(tmp_path):
    p = tmp_path / "e.jsonl"
    p.write_text(json.dumps(ev("s1", 0, "a", "fg")) + "\n{not json\n")
    with pytest.raises(MalformedRow):
        parse_events(p)


def test_empty_file(tmp_path):
    p = tmp_path / "e.jsonl"
    p.write_text("")
    with pytest.raises(EmptyFile):
        parse_events(p)


def test_shuffled_rows_group_and_sort(tmp_path):
    rng = np.random.default_rng(0)
    rows = []
    for i in range(1000):
        rows.append(ev(f"s{i % 3}", int(rng.integers(0, 5 * MS_PER_DAY)), f"p{i % 7}", "fg" if i % 2 else "bg"))
    rng.shuffle(rows)
    logs = parse_events(write_jsonl(tmp_path / "e.jsonl", rows))
    assert [lg.student_id for lg in logs] == ["s0", "s1", "s2"]
    for lg in logs:
        ts = [e.timestamp for e in lg.events]
        assert ts == sorted(ts)
        # independent sort-and-group oracle, stable on ties
        expect = sorted((r for r in rows if r["student_id"] == lg.student_id), key=lambda r: r["t"])
        assert [(e.timestamp, e.package, e.kind.value) for e in lg.events] == \
            [(r["t"], r["package"], r["kind"]) for r in expect]
    assert sum(len(lg) for lg in logs) == 1000


def test_parsing_is_order_insensitive(tmp_path):
    rng = np.random.default_rng(1)
    ts = rng.choice(10**8, size=200, replace=False)
    rows = [ev(f"s{i % 4}", int(t), "p", "fg" if i % 2 else "bg") for i, t in enumerate(ts)]
    a = parse_events(write_jsonl(tmp_path / "a.jsonl", rows))
    rng.shuffle(rows)
    b = parse_events(write_jsonl(tmp_path / "b.jsonl", rows))
    assert a == b


@pytest.mark.parametrize("suffix", [".jsonl", ".csv"])
def test_round_trip(tmp_path, suffix):
    cohort, _ = gen_cohort(SynthConfig(n_students=5, seed=3))
    logs = [cohort.logs[s] for s in cohort.analyzable_ids]
    path = tmp_path / f"events{suffix}"
    write_events(logs, path)
    assert parse_events(path) == logs


def test_csv_events(tmp_path):
    p = tmp_path / "e.csv"
    p.write_text("student_id,t,package,app,kind\ns1,0,a,,fg\ns1,500,a,App,bg\n")
    (lg,) = parse_events(p)
    assert lg.events[0].app_name is None and lg.events[1].app_name == "App"


def test_tz_override(tmp_path):
    p = write_jsonl(tmp_path / "e.jsonl", [{**ev("s1", 0, "a", "fg"), "tz_offset_minutes": 120}])
    assert parse_events(p)[0].tz_offset_minutes == 120
    assert parse_events(p, tz_offset_minutes=-60)[0].tz_offset_minutes == -60
    q = write_jsonl(tmp_path / "f.jsonl", [ev("s1", 0, "a", "fg")])
    assert parse_events(q)[0].tz_offset_minutes == 360


def test_long_logs_are_truncated_with_warning():
    events = [UsageEvent(0, "a", EventKind.FOREGROUND), UsageEvent(10 * MS_PER_DAY, "a", EventKind.BACKGROUND)]
    with pytest.warns(UserWarning):
        lg = EventLog.from_events("s", events)
    assert len(lg) == 1


# ------------------------------------------------------------ categories

def test_category_lookup(tmp_path):
    p = tmp_path / "c.csv"
    p.write_text("package,category\ncom.google.android.youtube,Video Players & Editors\n")
    cats = parse_categories(p)
    assert cats.lookup("com.google.android.youtube") == "Video Players & Editors"
    assert cats.lookup("com.x.y") == "Unknown"
    assert cats.category_set == DEFAULT_CATEGORIES


def test_duplicate_package(tmp_path):
    p = tmp_path / "c.csv"
    p.write_text("package,category\na,Games\na,Social Media\n")
    with pytest.raises(DuplicatePackage):
        parse_categories(p)


def test_extra_category_extends_taxonomy(tmp_path):
    p = tmp_path / "c.csv"
    p.write_text("package,category\na,Robotics\n")
    cats = parse_categories(p)
    assert cats.category_set == DEFAULT_CATEGORIES + ("Robotics",)


def test_default_map_ships_youtube():
    cats = CategoryMap.default()
    assert cats.lookup("com.google.android.youtube") == "Video Players & Editors"
    assert len(cats.category_set) == 27


# ------------------------------------------------------------ roster and cohort

def test_roster_errors(tmp_path):
    p = tmp_path / "g.csv"
    p.write_text("student_id,cgpa\ns1,4.7\n")
    with pytest.raises(CgpaOutOfRange):
        parse_roster(p)
    p.write_text("student_id,cgpa\n")
    with pytest.raises(EmptyFile):
        parse_roster(p)
    p.write_text("student_id,cgpa\ns1,3.0\ns1,3.1\n")
    with pytest.raises(DuplicateStudent):
        parse_roster(p)
    with pytest.raises(CgpaOutOfRange):
        StudentRecord("s", -0.1)


def test_cohort_with_missing_logs(tmp_path):
    roster = tmp_path / "g.csv"
    roster.write_text("student_id,cgpa\n" + "".join(f"s{i:03d},3.0\n" for i in range(124)))
    rows = []
    for i in range(121):
        rows += [ev(f"s{i:03d}", 0, "a", "fg"), ev(f"s{i:03d}", 1000, "a", "bg")]
    rows += [ev("ghost", 0, "a", "fg")]
    cats = tmp_path / "c.csv"
    cats.write_text("package,category\na,Games\n")
    cohort = parse_cohort(write_jsonl(tmp_path / "e.jsonl", rows), cats, roster)
    assert len(cohort.students) == 124
    assert len(cohort.analyzable_ids) == 121
    assert cohort.skipped == ("s121", "s122", "s123")
    assert cohort.orphan_logs == ("ghost",)


def test_validate_clean_and_dirty():
    cohort, _ = gen_cohort(SynthConfig(n_students=6, seed=9))
    report = validate(cohort)
    assert report.ok
    assert report.n_events == sum(len(lg) for lg in cohort.logs.values())
    sid = cohort.analyzable_ids[0]
    lg = cohort.logs[sid]
    late = UsageEvent(lg.window_end + 1, "x", EventKind.BACKGROUND)
    bad = EventLog(sid, lg.window_start, lg.window_end, lg.tz_offset_minutes, lg.events + (late,))
    dirty = Cohort.build(cohort.students, [bad] + [cohort.logs[s] for s in cohort.analyzable_ids[1:]],
                         cohort.categories)
    report = validate(dirty)
    assert not report.ok
    (v,) = report.violations
    assert v.student_id == sid and v.kind == "outside_window"
    assert v.timestamp == lg.window_end + 1 and v.event_index == len(lg.events)


def test_validate_does_not_mutate():
    cohort, _ = gen_cohort(SynthConfig(n_students=4, seed=1))
    before = {s: cohort.logs[s] for s in cohort.analyzable_ids}
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        validate(cohort)
    assert {s: cohort.logs[s] for s in cohort.analyzable_ids} == before
