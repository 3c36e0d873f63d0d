# tests/unit/test_main.py

import logging

import pytest

from config.settings import settings
from main import EXIT_CONFIG_ERROR, EXIT_OK, EXIT_PIPELINE_ERROR, main


@pytest.fixture(autouse=True)
def log_to_tmp(tmp_path, monkeypatch):
    monkeypatch.setattr(settings, "log_file_path", str(tmp_path / "logs" / "groundlab.log"))
    root = logging.getLogger()
    saved, level = list(root.handlers), root.level
    yield
    for handler in root.handlers:
        if handler not in saved:
            handler.close()
    root.handlers, root.level = saved, level


def test_config_error_exit_code(tmp_path, capsys):
    path = tmp_path / "bad.yaml"
    path.write_text("name: bad\ndomain: {kind: disc, radius: 1.0}\ngrid: {h: -1}\n")
    assert main(["run", str(path)]) == EXIT_CONFIG_ERROR
    assert "config error" in capsys.readouterr().err


def test_unknown_check_on_command_line(tmp_path, capsys):
    path = tmp_path / "ok.yaml"
    path.write_text("name: ok\ndomain: {kind: disc, radius: 1.0}\ngrid: {h: 0.0625}\n")
    assert main(["run", str(path), "--checks", "residual,bogus"]) == EXIT_CONFIG_ERROR
    assert "bogus" in capsys.readouterr().err


def test_report_without_manifest(tmp_path, capsys):
    assert main(["report", str(tmp_path)]) == EXIT_PIPELINE_ERROR
    assert "report error" in capsys.readouterr().err


def test_report_of_finished_run(tmp_path, capsys):
    from core.run_manifest import RunManifest
    from storage.artifact_store import ArtifactStore
    from verification.report import Measurement, Report

    manifest = RunManifest(tmp_path)
    manifest.start("manual", {}, seed=0)
    ArtifactStore(tmp_path).write_reports([Report.from_measurements("alpha", [Measurement("gap", 0.0, 1.0)])])
    manifest.mark_complete()

    assert main(["report", str(tmp_path)]) == EXIT_OK
    assert "alpha" in capsys.readouterr().out
