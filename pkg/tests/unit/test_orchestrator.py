# tests/unit/test_orchestrator.py

import json
import logging

import numpy as np
import pytest

import core.orchestrator as orchestrator
from config.experiment import parse_experiment
from core.exceptions import ManifestMissingError, ScheduleFailureError
from core.orchestrator import ExperimentOrchestrator, build_report, check_rng
from numerics.eigensolver import GroundState, TrailEntry
from numerics.field import distance_field
from numerics.geometry import lambda_infinity


def _config(tmp_path, checks):
    raw = {
        "name": "disc-small",
        "domain": {"kind": "disc", "radius": 1.0},
        "grid": {"h": 0.0625},
        "epsilons": [0.04, 0.01],
        "checks": checks,
    }
    return parse_experiment(raw, out=str(tmp_path / "run"))


@pytest.fixture
def distance_solver(monkeypatch):
    """Replace the eigensolver by the distance function with a plausible trail"""

    def solve(dom, grid, opts):
        trail = [TrailEntry(2.0, 2.3, 10, 1e-8), TrailEntry(64.0, 1.03, 40, 1e-8)]
        return GroundState(u=distance_field(dom, grid), trail=trail, converged=True, lambda_inf=1.0)

    monkeypatch.setattr(orchestrator, "infinity_ground_state", solve)


def test_check_rng_is_deterministic():
    a = check_rng(5, "residual").random(4)
    b = check_rng(5, "residual").random(4)
    c = check_rng(5, "s_minus").random(4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


@pytest.mark.asyncio
async def test_complete_run(tmp_path, distance_solver, caplog):
    caplog.set_level(logging.INFO)
    config = _config(tmp_path, ["is_stadium_like", "lambda_limit", "compare_with_distance", "max_preserved"])
    result = await ExperimentOrchestrator(config, max_workers=2).run()

    assert result.complete
    assert [r.name for r in result.reports] == config.checks
    run_dir = tmp_path / "run"
    manifest = json.loads((run_dir / "MANIFEST.json").read_text())
    assert manifest["status"] == "complete"
    assert manifest["phases"] == ["rasterize", "eigensolve", "supconv", "checks", "report"]
    for rel in ("trail.csv", "ground_state.pgm", "summary.csv", "summary.txt", "supconv/summary.csv"):
        assert (run_dir / rel).exists()
        assert rel in manifest["artifacts"]
    assert (run_dir / "checks" / "is_stadium_like_cut_locus.csv").exists()
    assert len((run_dir / "summary.txt").read_text().splitlines()) == 4
    assert "run.log" in manifest["artifacts"]
    assert "Starting Phase 4: Checks" in (run_dir / "run.log").read_text()


@pytest.mark.asyncio
async def test_supconv_phase_skipped_when_unneeded(tmp_path, distance_solver):
    config = _config(tmp_path, ["compare_with_distance"])
    result = await ExperimentOrchestrator(config).run()
    assert result.complete
    assert not (tmp_path / "run" / "supconv").exists()


@pytest.mark.asyncio
async def test_eigensolver_failure_marks_run_incomplete(tmp_path, monkeypatch):
    def fail(dom, grid, opts):
        raise ScheduleFailureError("schedule failure: lambda_64 too far")

    monkeypatch.setattr(orchestrator, "infinity_ground_state", fail)
    config = _config(tmp_path, ["compare_with_distance"])
    result = await ExperimentOrchestrator(config).run()

    assert not result.complete
    assert result.failed_phase == "eigensolve"
    assert "INCOMPLETE" in result.summary_text()

    text = build_report(tmp_path / "run")
    assert text.startswith("*** INCOMPLETE RUN (phase eigensolve:")
    assert "no check results" in text


@pytest.mark.asyncio
async def test_report_of_complete_run(tmp_path, distance_solver):
    config = _config(tmp_path, ["is_stadium_like", "compare_with_distance"])
    await ExperimentOrchestrator(config).run()
    text = build_report(tmp_path / "run")
    assert "INCOMPLETE" not in text
    assert "compare_with_distance" in text
    assert (tmp_path / "run" / "report.csv").exists()


def test_report_without_manifest(tmp_path):
    with pytest.raises(ManifestMissingError):
        build_report(tmp_path)


@pytest.mark.asyncio
async def test_checks_see_the_unit_frame(tmp_path, distance_solver, monkeypatch):
    raw = {
        "name": "disc-radius-two",
        "domain": {"kind": "disc", "radius": 2.0},
        "grid": {"h": 0.125},
        "epsilons": [0.04],
        "checks": ["max_preserved", "flow_properties"],
    }
    config = parse_experiment(raw, out=str(tmp_path / "run"))
    seen = {}
    run_checks = ExperimentOrchestrator._run_checks

    async def capture(self, ctx):
        seen["ctx"] = ctx
        return await run_checks(self, ctx)

    monkeypatch.setattr(ExperimentOrchestrator, "_run_checks", capture)
    result = await ExperimentOrchestrator(config).run()
    assert result.complete

    ctx = seen["ctx"]
    assert ctx.ground_state.u.max() == pytest.approx(2.0)
    assert ctx.unit_state.u.max() == pytest.approx(1.0)
    assert ctx.unit_state.lambda_inf == 1.0
    assert ctx.unit_state.grid.h == pytest.approx(0.0625)
    assert lambda_infinity(ctx.unit_domain) == pytest.approx(1.0)
    assert ctx.supconv[0].u_eps.max() == pytest.approx(1.0, abs=1e-9)
    assert (tmp_path / "run" / "checks" / "flow_properties_trajectories.csv").exists()
