# verification/report.py

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np


@dataclass(frozen=True)
class Measurement:
    """One measured quantity of a check.

    `sense` says how `value` is compared with `tolerance`: "le" (value <= tolerance),
    "ge" (value >= tolerance) or None for informational readings.
    """

    label: str
    value: float
    tolerance: Optional[float] = None
    sense: Optional[str] = "le"

    @property
    def within(self) -> bool:
        if self.tolerance is None or self.sense is None:
            return True
        if not np.isfinite(self.value):
            return False
        if self.sense == "le":
            return self.value <= self.tolerance
        return self.value >= self.tolerance

    @classmethod
    def info(cls, label: str, value: float) -> "Measurement":
        return cls(label=label, value=float(value), tolerance=None, sense=None)


@dataclass
class Report:
    """Pass/fail record of an invariant check"""

    name: str
    passed: bool
    measurements: List[Measurement] = field(default_factory=list)
    notes: str = ""
    verdict: str = ""

    def __post_init__(self):
        if self.passed:
            bad = [m.label for m in self.measurements if not m.within]
            if bad:
                raise ValueError(f"report {self.name} marked pass with out-of-tolerance measurements: {bad}")
        if not self.verdict:
            self.verdict = "pass" if self.passed else "fail"

    @classmethod
    def from_measurements(
        cls,
        name: str,
        measurements: List[Measurement],
        notes: str = ""
    ) -> "Report":
        """Pass iff every toleranced measurement is within tolerance"""
        passed = all(m.within for m in measurements)
        return cls(name=name, passed=passed, measurements=list(measurements), notes=notes)

    @classmethod
    def vacuous(cls, name: str, notes: str, measurements: Optional[List[Measurement]] = None) -> "Report":
        return cls(name=name, passed=True, measurements=list(measurements or []), notes=notes, verdict="vacuous")

    def value(self, label: str) -> float:
        for m in self.measurements:
            if m.label == label:
                return m.value
        raise KeyError(label)

    def to_rows(self) -> List[Dict[str, Any]]:
        """Rows for the `check,label,value,tolerance,pass` CSV"""
        rows = [
            {
                "check": self.name,
                "label": m.label,
                "value": m.value,
                "tolerance": "" if m.tolerance is None else m.tolerance,
                "pass": m.within,
            }
            for m in self.measurements
        ]
        rows.append({
            "check": self.name,
            "label": "verdict",
            "value": "",
            "tolerance": "",
            "pass": self.passed,
        })
        return rows

    def to_text(self) -> str:
        lines = [f"{self.name}: {self.verdict}"]
        for m in self.measurements:
            if m.tolerance is None:
                lines.append(f"  {m.label} = {m.value:.6g}")
            else:
                op = "<=" if m.sense == "le" else ">="
                mark = "ok" if m.within else "FAIL"
                lines.append(f"  {m.label} = {m.value:.6g} ({op} {m.tolerance:.6g}) {mark}")
        if self.notes:
            lines.append(f"  note: {self.notes}")
        return "\n".join(lines)
