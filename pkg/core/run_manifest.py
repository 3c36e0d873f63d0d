# core/run_manifest.py

import json
import logging
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from core.exceptions import ManifestMissingError

logger = logging.getLogger(__name__)

MANIFEST_NAME = "MANIFEST.json"

COMPLETE = "complete"
INCOMPLETE = "incomplete"
RUNNING = "running"


class RunManifest:
    """
    MANIFEST.json of one run directory: status, config echo, seed,
    artifacts written so far and the phase that failed, if any.
    Saved after every change so an interrupted run leaves an accurate record.
    """

    def __init__(self, run_dir: Union[str, Path]):
        self.run_dir = Path(run_dir)
        self.path = self.run_dir / MANIFEST_NAME
        self.state: Dict[str, Any] = {
            "status": RUNNING,
            "phases": [],
            "artifacts": [],
            "failed_phase": None,
            "error": None,
        }

    @classmethod
    def load(cls, run_dir: Union[str, Path]) -> "RunManifest":
        manifest = cls(run_dir)
        if not manifest.path.exists():
            raise ManifestMissingError(f"no {MANIFEST_NAME} in {manifest.run_dir}")
        with open(manifest.path, "r") as f:
            manifest.state = json.load(f)
        logger.info(f"Manifest loaded from {manifest.path}")
        return manifest

    def save(self) -> None:
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self.state["updated_at"] = datetime.utcnow().isoformat()
        with open(self.path, "w") as f:
            json.dump(self.state, f, indent=2, default=str)
        logger.debug("Manifest saved")

    def start(self, name: str, config_echo: Dict[str, Any], seed: int) -> None:
        self.state.update({
            "experiment": name,
            "config": config_echo,
            "seed": seed,
            "started_at": datetime.utcnow().isoformat(),
        })
        self.save()

    def phase_done(self, phase: str) -> None:
        self.state["phases"].append(phase)
        self.save()

    def add_artifacts(self, paths: List[Path]) -> None:
        for p in paths:
            rel = str(Path(p).relative_to(self.run_dir))
            if rel not in self.state["artifacts"]:
                self.state["artifacts"].append(rel)
        self.save()

    def mark_incomplete(self, phase: str, error: str) -> None:
        self.state["status"] = INCOMPLETE
        self.state["failed_phase"] = phase
        self.state["error"] = error
        self.save()
        logger.error(f"Run marked incomplete at phase {phase}: {error}")

    def mark_complete(self) -> None:
        self.state["status"] = COMPLETE
        self.save()

    @property
    def status(self) -> str:
        return self.state.get("status", INCOMPLETE)

    @property
    def complete(self) -> bool:
        return self.status == COMPLETE

    @property
    def artifacts(self) -> List[str]:
        return list(self.state.get("artifacts", []))

    def get(self, key: str, default: Optional[Any] = None) -> Any:
        return self.state.get(key, default)
