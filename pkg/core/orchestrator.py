# core/orchestrator.py

import asyncio
import logging
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
import pandas as pd

from config.logging_config import RUN_LOG_NAME, attach_run_log, detach_run_log
from config.settings import settings
from core.base_check import CheckOutcome, RunContext
from core.check_registry import build_checks, needs_supconv
from core.exceptions import EpsilonTooLargeError, GroundLabError
from core.run_manifest import RunManifest
from numerics.eigensolver import GroundState, infinity_ground_state
from numerics.field import distance_field, rasterize
from numerics.supconv import SupConvResult, convolve
from storage.artifact_store import CHECK_DIR, ArtifactStore, read_check_tables, summary_line
from verification.ground_state_checks import rescale_to_unit
from verification.report import Report

logger = logging.getLogger(__name__)


def check_rng(seed: int, name: str) -> np.random.Generator:
    """Per-check stream, independent of scheduling order"""
    return np.random.default_rng([seed, zlib.crc32(name.encode("utf-8"))])


@dataclass
class RunResult:
    run_dir: Path
    status: str
    reports: List[Report] = field(default_factory=list)
    failed_phase: Optional[str] = None
    error: Optional[str] = None

    @property
    def complete(self) -> bool:
        return self.failed_phase is None

    def summary_text(self) -> str:
        lines = [summary_line(r) for r in self.reports]
        if not self.complete:
            lines.append(f"INCOMPLETE: phase {self.failed_phase} failed: {self.error}")
        return "\n".join(lines)


class ExperimentOrchestrator:
    """
    Runs one experiment:
    1. Rasterize the domain
    2. Solve for the infinity ground state along the p schedule
    3. Sup-convolve the ground state (only when a selected check needs it)
    4. Run the selected checks concurrently
    5. Write reports and close the manifest
    """

    def __init__(self, config, max_workers: Optional[int] = None):
        self.config = config
        self.run_dir = config.output_path()
        self.max_workers = max_workers or settings.max_workers
        self.store = ArtifactStore(self.run_dir)
        self.manifest = RunManifest(self.run_dir)
        self.checks = build_checks(config.checks)
        logger.info(f"Orchestrator for {config.name}: {len(self.checks)} checks, {self.max_workers} workers")

    async def run(self) -> RunResult:
        run_log = attach_run_log(self.run_dir)
        try:
            return await self._run_phases()
        finally:
            detach_run_log(run_log)

    async def _run_phases(self) -> RunResult:
        config = self.config
        self.manifest.start(config.name, config.echo(), config.seed)
        result = RunResult(run_dir=self.run_dir, status="running")
        phase = "rasterize"

        try:
            logger.info("Starting Phase 1: Rasterize")
            domain = config.domain.build()
            grid = rasterize(domain, config.grid.h)
            ctx = RunContext(
                config=config,
                domain=domain,
                grid=grid,
                slack_constant=settings.slack_constant,
                stall_fraction=settings.stall_fraction,
            )
            self.manifest.phase_done(phase)

            phase = "eigensolve"
            logger.info("Starting Phase 2: Eigensolve")
            ctx.ground_state = await asyncio.to_thread(infinity_ground_state, domain, grid, config.solver.options())
            ctx.distance_state = GroundState.from_field(distance_field(domain, grid), domain)
            ctx.unit_state, ctx.unit_domain = rescale_to_unit(ctx.ground_state, domain)
            logger.info(f"Unit frame: lengths scaled by {ctx.unit_state.grid.h / grid.h:.6g}, h = {ctx.unit_state.grid.h:.6g}")
            self._write_ground_state(ctx)
            self.manifest.phase_done(phase)

            if needs_supconv(config.checks):
                phase = "supconv"
                logger.info("Starting Phase 3: Sup-convolution")
                ctx.supconv = await asyncio.to_thread(self._supconv, ctx)
                self._write_supconv(ctx.supconv)
                self.manifest.phase_done(phase)

            phase = "checks"
            logger.info("Starting Phase 4: Checks")
            outcomes = await self._run_checks(ctx)
            result.reports = [o.report for o in outcomes]
            self.manifest.phase_done(phase)

            phase = "report"
            logger.info("Starting Phase 5: Reports")
            for check, outcome in zip(self.checks, outcomes):
                for label, frame in outcome.frames.items():
                    self.store.write_frame(f"{CHECK_DIR}/{check.name}_{label}.csv", frame)
            self.store.write_reports(result.reports)
            self.manifest.phase_done(phase)

            self.manifest.add_artifacts(self.store.written + [self.run_dir / RUN_LOG_NAME])
            self.manifest.mark_complete()
            result.status = self.manifest.status
            logger.info(f"Run {config.name} completed: {sum(r.passed for r in result.reports)}/{len(result.reports)} checks pass")

        except GroundLabError as e:
            logger.error(f"Run {config.name} failed in phase {phase}: {str(e)}")
            if result.reports:
                self.store.write_reports(result.reports)
            self.manifest.add_artifacts(self.store.written + [self.run_dir / RUN_LOG_NAME])
            self.manifest.mark_incomplete(phase, str(e))
            result.status = self.manifest.status
            result.failed_phase = phase
            result.error = str(e)

        return result

    def _write_ground_state(self, ctx: RunContext) -> None:
        gs = ctx.ground_state
        self.store.write_frame("trail.csv", gs.trail_frame())
        self.store.write_field("ground_state", gs.u)
        self.store.write_field("distance", ctx.distance_state.u)

    def _supconv(self, ctx: RunContext) -> List[SupConvResult]:
        results = []
        for eps in self.config.epsilons:
            try:
                results.append(convolve(ctx.unit_state.u, eps))
            except EpsilonTooLargeError as e:
                logger.warning(f"Skipping epsilon {eps:g}: {str(e)}")
        return results

    def _write_supconv(self, results: List[SupConvResult]) -> None:
        rows = []
        for sc in results:
            stem = f"supconv/eps_{sc.epsilon:g}"
            self.store.write_field(f"{stem}_u_eps", sc.u_eps)
            for label, mask in sc.masks().items():
                self.store.write_mask(f"{stem}_{label}", mask)
            rows.append({
                "epsilon": sc.epsilon,
                "rho": sc.rho,
                "m_eps": sc.m_eps,
                "b_eps": sc.b_eps,
                "c_eps": sc.c_eps,
                "U_nodes": int(sc.U_eps.sum()),
                "A_nodes": int(sc.A_eps.sum()),
                "Omega_nodes": int(sc.Omega_eps.sum()),
                "M_nodes": int(sc.M_eps.sum()),
            })
        self.store.write_frame("supconv/summary.csv", pd.DataFrame(rows))

    async def _run_checks(self, ctx: RunContext) -> List[CheckOutcome]:
        semaphore = asyncio.Semaphore(self.max_workers)

        async def run_one(check) -> CheckOutcome:
            async with semaphore:
                rng = check_rng(self.config.seed, check.name)
                return await asyncio.to_thread(check.run, ctx, rng)

        return list(await asyncio.gather(*(run_one(c) for c in self.checks)))


def build_report(run_dir: Union[str, Path]) -> str:
    """Consolidated table of a run directory, failures first; also written to report.csv"""
    manifest = RunManifest.load(run_dir)
    table = read_check_tables(run_dir)
    ArtifactStore(run_dir).write_frame("report.csv", table)

    lines = []
    if not manifest.complete:
        phase = manifest.get("failed_phase") or "unknown"
        lines.append(f"*** INCOMPLETE RUN (phase {phase}: {manifest.get('error')}) ***")
    if table.empty:
        lines.append("no check results")
    else:
        lines.append(table.to_string(index=False))
    return "\n".join(lines)
