# tests/unit/test_artifact_store.py

import pandas as pd

from storage.artifact_store import ArtifactStore, read_check_tables, summary_line
from verification.report import Measurement, Report


def _reports():
    ok = Report.from_measurements("alpha", [Measurement("gap", 0.01, 0.05)])
    bad = Report.from_measurements("beta", [Measurement("gap", 0.2, 0.05), Measurement.info("nodes", 12)])
    return [ok, bad]


def test_summary_line():
    ok, bad = _reports()
    assert summary_line(ok) == "alpha: pass gap=0.01"
    assert summary_line(bad) == "beta: fail gap=0.2"
    assert summary_line(Report.vacuous("gamma", "empty")) == "gamma: vacuous"


def test_write_reports(tmp_path):
    store = ArtifactStore(tmp_path)
    paths = store.write_reports(_reports())
    assert (tmp_path / "checks" / "alpha.csv") in paths
    assert (tmp_path / "summary.txt").read_text() == "alpha: pass gap=0.01\nbeta: fail gap=0.2\n"

    summary = pd.read_csv(tmp_path / "summary.csv")
    assert list(summary.columns) == ["check", "label", "value", "tolerance", "pass"]
    assert len(summary) == 5
    assert set(store.written) == set(paths)


def test_failing_checks_come_first(tmp_path):
    ArtifactStore(tmp_path).write_reports(_reports())
    table = read_check_tables(tmp_path)
    assert list(table["check"]) == ["beta", "beta", "beta", "alpha", "alpha"]
    verdicts = table[table["label"] == "verdict"]
    assert list(verdicts["pass"]) == [False, True]


def test_empty_run_dir(tmp_path):
    assert read_check_tables(tmp_path).empty


def test_write_field_and_mask(tmp_path, disc_distance):
    store = ArtifactStore(tmp_path)
    paths = store.write_field("ground_state", disc_distance.u)
    assert [p.name for p in paths] == ["ground_state.csv", "ground_state.pgm", "ground_state.pgm.scale.txt"]
    assert all(p.exists() for p in paths)

    mask = store.write_mask("inside", disc_distance.grid.inside)
    assert mask.read_bytes().startswith(b"P5\n")
