import csv
import hashlib
import json
import shutil

import pytest

from appusage.cli import main


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def tree(d):
    return {p.relative_to(d).as_posix(): digest(p) for p in sorted(d.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def cohort_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "synth.json").write_text(json.dumps({
        "n_students": 40, "seed": 1,
        "planted_effects": [{"feature": "Games.duration.whole", "target_spearman": 0.5}]}))
    assert main(["synth", "--config", str(d / "synth.json"), "--out-dir", str(d / "syn")]) == 0
    return d


def inputs(d):
    s = d / "syn"
    return ["--events", str(s / "events.jsonl"), "--categories", str(s / "categories.csv"),
            "--cgpa", str(s / "cgpa.csv"), "--threads", "1"]


def test_synth_outputs(cohort_dir):
    names = {p.name for p in (cohort_dir / "syn").iterdir()}
    assert {"events.jsonl", "categories.csv", "cgpa.csv", "truth.json", "config.json"} <= names
    truth = json.loads((cohort_dir / "syn" / "truth.json").read_text())
    assert "Games.duration.whole" in truth["planted"]


def test_synth_seed_override(tmp_path, cohort_dir):
    assert main(["synth", "--config", str(cohort_dir / "synth.json"), "--seed", "2", "--out-dir", str(tmp_path)]) == 0
    assert digest(tmp_path / "events.jsonl") != digest(cohort_dir / "syn" / "events.jsonl")


def test_validate_clean(cohort_dir, tmp_path):
    out = tmp_path / "v.json"
    assert main(["validate", *inputs(cohort_dir), "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["ok"] and rep["n_students"] == 40


def test_validate_reports_violations(cohort_dir, tmp_path):
    rows = (cohort_dir / "syn" / "events.jsonl").read_text().splitlines()
    first = json.loads(rows[0])
    rows.append(json.dumps({**first, "t": first["t"] + 30 * 86_400_000}))
    (tmp_path / "e.jsonl").write_text("\n".join(rows) + "\n")
    args = inputs(cohort_dir)
    args[1] = str(tmp_path / "e.jsonl")
    assert main(["validate", *args, "--span-days", "60", "--out", str(tmp_path / "v.json")]) == 1


def test_features_csv(cohort_dir, tmp_path):
    out = tmp_path / "f.csv"
    assert main(["features", *inputs(cohort_dir), "--out", str(out), "--masks", str(tmp_path / "m.csv")]) == 0
    with out.open() as fh:
        rows = list(csv.reader(fh))
    assert len(rows[0]) == 720 + 2 and rows[0][:2] == ["student_id", "cgpa"]
    assert len(rows) == 41
    assert (tmp_path / "f.config.json").exists()


def test_sessions(cohort_dir, tmp_path):
    out = tmp_path / "s.csv"
    assert main(["sessions", *inputs(cohort_dir), "--out", str(out)]) == 0
    assert out.read_text().count("\n") > 40


@pytest.fixture(scope="module")
def matrix(cohort_dir):
    out = cohort_dir / "features.csv"
    assert main(["features", *inputs(cohort_dir), "--out", str(out)]) == 0
    return out


def test_assoc(matrix, tmp_path):
    assert main(["assoc", "--matrix", str(matrix), "--out-dir", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "assoc_summary.json").read_text())
    assert summary
    assert (tmp_path / "assoc.csv").exists()


def test_cluster_and_compare(matrix, tmp_path):
    assert main(["cluster", "--matrix", str(matrix), "--out-dir", str(tmp_path)]) == 0
    assert (tmp_path / "clusters.csv").read_text().count("\n") == 41
    assert main(["compare", "--matrix", str(matrix), "--out-dir", str(tmp_path)]) == 0
    assert (tmp_path / "compare_cgpa.csv").exists()
    assert main(["compare", "--matrix", str(matrix), "--mode", "usage", "--largest-cluster",
                 "--out-dir", str(tmp_path)]) == 0
    assert (tmp_path / "compare_usage.csv").exists()


def test_predict(matrix, tmp_path):
    assert main(["predict", "--matrix", str(matrix), "--core-only", "--seed", "3", "--out-dir", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["best"] != "baseline"
    assert (tmp_path / "predictions.csv").read_text().count("\n") == 1 + 12


def test_report_and_replay_are_byte_identical(cohort_dir, tmp_path):
    out = tmp_path / "rep"
    assert main(["report", *inputs(cohort_dir), "--seed", "4", "--out-dir", str(out)]) == 0
    bundle = json.loads((out / "report.json").read_text())
    assert {"validation", "assoc", "clusters", "compare_cgpa", "prediction"} <= set(bundle)
    first = tree(out)
    saved = tmp_path / "config.json"
    shutil.copy(out / "config.json", saved)
    shutil.rmtree(out)
    assert main(["replay", str(saved)]) == 0
    assert tree(out) == first


def test_inputs_not_mutated(cohort_dir, matrix, tmp_path):
    before = tree(cohort_dir / "syn")
    m = digest(matrix)
    main(["report", *inputs(cohort_dir), "--out-dir", str(tmp_path)])
    main(["predict", "--matrix", str(matrix), "--out-dir", str(tmp_path / "p")])
    assert tree(cohort_dir / "syn") == before and digest(matrix) == m


def test_unknown_flag_exits_2_without_outputs(cohort_dir, tmp_path, capsys):
    out = tmp_path / "o"
    with pytest.raises(SystemExit) as err:
        main(["assoc", "--matrix", "x.csv", "--bogus", "--out-dir", str(out)])
    assert err.value.code == 2
    assert not out.exists()
    assert "usage" in capsys.readouterr().err


def test_bad_usage_exits_2(tmp_path):
    code = main(["assoc", "--out-dir", str(tmp_path / "o")])  # neither matrix nor raw inputs
    assert code == 2
    assert not (tmp_path / "o").exists()


def test_data_error_exits_1(cohort_dir, tmp_path, capsys):
    bad = tmp_path / "e.jsonl"
    bad.write_text(json.dumps({"student_id": "s000", "t": 0, "package": "a", "kind": "sideways"}) + "\n")
    args = inputs(cohort_dir)
    args[1] = str(bad)
    assert main(["features", *args, "--out", str(tmp_path / "f.csv")]) == 1
    assert f"{bad}:1:" in capsys.readouterr().err
    assert not (tmp_path / "f.csv").exists()
