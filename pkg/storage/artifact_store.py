# storage/artifact_store.py

import logging
import threading
from pathlib import Path
from typing import List, Sequence, Union

import numpy as np
import pandas as pd

from numerics.field import ScalarField, write_pgm
from verification.report import Report

logger = logging.getLogger(__name__)

CHECK_DIR = "checks"
SUMMARY_CSV = "summary.csv"
SUMMARY_TXT = "summary.txt"
FLOAT_FORMAT = "%.12g"


def summary_line(report: Report) -> str:
    """`name: verdict` followed by the first measurement, one line per check"""
    line = f"{report.name}: {report.verdict}"
    if report.measurements:
        m = report.measurements[0]
        line += f" {m.label}={m.value:.6g}"
    return line


class ArtifactStore:
    """
    Single writer for every file of a run directory.
    Writes are serialized through a lock and recorded in `written`.
    """

    def __init__(self, run_dir: Union[str, Path]):
        self.run_dir = Path(run_dir)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self.written: List[Path] = []
        self._lock = threading.Lock()
        logger.info(f"Artifact store at {self.run_dir}")

    def _target(self, rel: str) -> Path:
        path = self.run_dir / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        return path

    def _track(self, *paths: Path) -> None:
        for p in paths:
            if p not in self.written:
                self.written.append(p)

    def write_frame(self, rel: str, frame: pd.DataFrame) -> Path:
        with self._lock:
            path = self._target(rel)
            frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
            self._track(path)
        logger.debug(f"Wrote {path} ({len(frame)} rows)")
        return path

    def write_field(self, stem: str, f: ScalarField) -> List[Path]:
        """CSV of every node plus a PGM heatmap with its scale sidecar"""
        csv_path = self.write_frame(f"{stem}.csv", f.to_frame())
        with self._lock:
            pgm_path = write_pgm(self._target(f"{stem}.pgm"), f.values)
            sidecar = pgm_path.with_name(pgm_path.name + ".scale.txt")
            self._track(pgm_path, sidecar)
        return [csv_path, pgm_path, sidecar]

    def write_mask(self, stem: str, mask: np.ndarray) -> Path:
        with self._lock:
            path = write_pgm(self._target(f"{stem}.pgm"), mask.astype(float))
            self._track(path, path.with_name(path.name + ".scale.txt"))
        return path

    def write_text(self, rel: str, text: str) -> Path:
        with self._lock:
            path = self._target(rel)
            path.write_text(text if text.endswith("\n") else text + "\n")
            self._track(path)
        return path

    def write_reports(self, reports: Sequence[Report]) -> List[Path]:
        """Per-check CSVs, the merged summary CSV and the one-line-per-check summary"""
        paths = []
        rows = []
        for report in reports:
            check_rows = report.to_rows()
            rows.extend(check_rows)
            paths.append(self.write_frame(f"{CHECK_DIR}/{report.name}.csv", pd.DataFrame(check_rows)))
        columns = ["check", "label", "value", "tolerance", "pass"]
        paths.append(self.write_frame(SUMMARY_CSV, pd.DataFrame(rows, columns=columns)))
        paths.append(self.write_text(SUMMARY_TXT, "\n".join(summary_line(r) for r in reports)))
        return paths


def read_check_tables(run_dir: Union[str, Path]) -> pd.DataFrame:
    """Merge checks/*.csv; rows of failing checks come first, otherwise file order"""
    check_dir = Path(run_dir) / CHECK_DIR
    files = sorted(check_dir.glob("*.csv")) if check_dir.exists() else []
    if not files:
        return pd.DataFrame(columns=["check", "label", "value", "tolerance", "pass"])

    table = pd.concat([pd.read_csv(f, dtype={"value": str, "tolerance": str}, keep_default_na=False) for f in files], ignore_index=True)
    table["pass"] = table["pass"].astype(str).str.lower() == "true"
    verdicts = table[table["label"] == "verdict"].set_index("check")["pass"]
    table["_failed"] = ~table["check"].map(verdicts).fillna(False).astype(bool)
    table["_order"] = np.arange(len(table))
    table = table.sort_values(["_failed", "_order"], ascending=[False, True], kind="stable")
    return table.drop(columns=["_failed", "_order"]).reset_index(drop=True)
