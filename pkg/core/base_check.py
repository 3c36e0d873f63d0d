# core/base_check.py

import logging
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from datetime import datetime
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from core.exceptions import GroundLabError
from verification.report import Report

logger = logging.getLogger(__name__)


@dataclass
class RunContext:
    """Everything a check may read; built once per run by the orchestrator"""

    config: Any
    domain: Any
    grid: Any
    ground_state: Any = None
    distance_state: Any = None
    # ground state and domain with max d = max u = 1; sup-convolution and flows live here
    unit_state: Any = None
    unit_domain: Any = None
    supconv: List[Any] = field(default_factory=list)
    slack_constant: float = 10.0
    stall_fraction: float = 1e-6

    @property
    def tolerances(self):
        return self.config.tolerances

    def smallest_supconv(self):
        """Result at the smallest epsilon whose Omega_eps is non-empty"""
        usable = [sc for sc in self.supconv if sc.Omega_eps.any()]
        return min(usable, key=lambda sc: sc.epsilon) if usable else None


@dataclass
class CheckOutcome:
    report: Report
    frames: Dict[str, pd.DataFrame]
    duration_seconds: float
    status: str


class BaseCheck(ABC):
    """
    Base class for every registered check.
    Lifecycle: prepare -> evaluate -> record. Extra tables are handed to the
    artifact store through `emit`; checks never write files themselves.
    """

    name: str = ""
    needs_supconv: bool = False
    needs_unit_frame: bool = False

    def __init__(self):
        self.execution_history: List[Dict[str, Any]] = []
        self._frames: Dict[str, pd.DataFrame] = {}

    def prepare(self, ctx: RunContext) -> Optional[str]:
        """Return a reason to skip the check, or None to run it"""
        if ctx.ground_state is None:
            return "no ground state"
        if self.needs_supconv and ctx.smallest_supconv() is None:
            return "no epsilon with a non-empty Omega_eps"
        if self.needs_unit_frame and ctx.unit_state is None:
            return "no unit-frame ground state"
        return None

    @abstractmethod
    def evaluate(self, ctx: RunContext, rng: np.random.Generator) -> Report:
        pass

    def emit(self, label: str, frame: pd.DataFrame) -> None:
        self._frames[label] = frame

    def run(self, ctx: RunContext, rng: np.random.Generator) -> CheckOutcome:
        started = datetime.utcnow()
        clock = time.perf_counter()
        self._frames = {}

        reason = self.prepare(ctx)
        if reason is not None:
            logger.warning(f"Check {self.name} skipped: {reason}")
            report = Report.vacuous(self.name, f"skipped: {reason}")
            status = "skipped"
        else:
            try:
                report = self.evaluate(ctx, rng)
                status = "success"
            except GroundLabError as e:
                logger.error(f"Check {self.name} failed: {str(e)}")
                report = Report(name=self.name, passed=False, notes=str(e), verdict="error")
                status = "failed"

        duration = time.perf_counter() - clock
        self.record(report, started, duration, status)
        return CheckOutcome(report=report, frames=dict(self._frames), duration_seconds=duration, status=status)

    def record(self, report: Report, started: datetime, duration: float, status: str) -> None:
        self.execution_history.append({
            "check": self.name,
            "verdict": report.verdict,
            "timestamp": started.isoformat(),
            "duration_seconds": duration,
            "status": status,
        })
        logger.info(f"Check {self.name}: {report.verdict} ({duration:.2f}s)")

    def get_execution_history(self, limit: int = 10) -> List[Dict[str, Any]]:
        return self.execution_history[-limit:]
