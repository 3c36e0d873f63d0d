# config/experiment.py

import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from config.settings import settings
from core.check_registry import CHECK_NAMES
from core.exceptions import ConfigError, InvalidDomainError
from numerics.eigensolver import SolverOptions
from numerics.geometry import ConvexDomain

logger = logging.getLogger(__name__)

Point = Tuple[float, float]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DomainSpec(_Section):
    """Domain kind plus its parameters"""

    kind: Literal["disc", "polygon", "stadium", "parallel_set"]
    center: Optional[Point] = None
    radius: Optional[float] = Field(default=None, gt=0)
    vertices: Optional[List[Point]] = None
    spine: Optional[Tuple[Point, Point]] = None

    @model_validator(mode="after")
    def _required_parameters(self) -> "DomainSpec":
        needed = {
            "disc": ("radius",),
            "polygon": ("vertices",),
            "stadium": ("spine", "radius"),
            "parallel_set": ("vertices", "radius"),
        }[self.kind]
        missing = [name for name in needed if getattr(self, name) is None]
        if missing:
            raise ValueError(f"kind {self.kind} requires {', '.join(missing)}")
        return self

    def build(self) -> ConvexDomain:
        if self.kind == "disc":
            return ConvexDomain.disc(self.center or (0.0, 0.0), self.radius)
        if self.kind == "polygon":
            return ConvexDomain.polygon(self.vertices)
        if self.kind == "stadium":
            return ConvexDomain.stadium(self.spine, self.radius)
        return ConvexDomain.parallel_set(self.vertices, self.radius)


class GridSpec(_Section):
    h: float = Field(gt=0)


class SolverSpec(_Section):
    p_schedule: List[float] = Field(default_factory=lambda: [2, 4, 8, 16, 32, 64], min_length=1)
    tolerance: float = Field(default=1e-7, gt=0)
    stationarity_tolerance: float = Field(default=1e-3, gt=0)
    max_iterations: int = Field(default=2000, gt=0)
    continuation_tolerance: float = Field(default=0.05, gt=0)
    preconditioner: Literal["weighted", "laplacian"] = "weighted"
    refresh_every: int = Field(default=20, gt=0)

    @field_validator("p_schedule")
    @classmethod
    def _increasing(cls, v: List[float]) -> List[float]:
        if v[0] < 2 or any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("p_schedule must be strictly increasing and start at 2 or above")
        return v

    def options(self) -> SolverOptions:
        return SolverOptions(
            max_iterations=self.max_iterations,
            tolerance=self.tolerance,
            stationarity_tolerance=self.stationarity_tolerance,
            p_schedule=tuple(self.p_schedule),
            continuation_tolerance=self.continuation_tolerance,
            preconditioner=self.preconditioner,
            refresh_every=self.refresh_every,
        )


class FlowSpec(_Section):
    dt: Optional[float] = Field(default=None, gt=0)
    delta: Optional[float] = Field(default=None, gt=0)
    n_start: int = Field(default=20, gt=0)
    coverage_stride: int = Field(default=2, gt=0)


class ToleranceSpec(_Section):
    distance_c: float = Field(default=4.0, gt=0)
    residual_c: float = Field(default=10.0, gt=0)
    sup_distance: float = Field(default=0.05, gt=0)
    lambda_rel: float = Field(default=0.1, gt=0)
    s_minus: float = Field(default=0.05, gt=0)
    eikonal: float = Field(default=0.1, gt=0)
    rigidity_tau: float = Field(default=settings.rigidity_tau, gt=0)
    stadium_c: float = Field(default=2.0, gt=0)
    segments: int = Field(default=200, gt=0)
    s_minus_points: int = Field(default=50, gt=0)


class ExperimentConfig(_Section):
    """One reproducible experiment: domain, discretization, checks and seed"""

    name: str
    domain: DomainSpec
    grid: GridSpec
    solver: SolverSpec = Field(default_factory=SolverSpec)
    epsilons: List[float] = Field(default_factory=lambda: [0.04, 0.01, 0.0025], min_length=1)
    flow: FlowSpec = Field(default_factory=FlowSpec)
    tolerances: ToleranceSpec = Field(default_factory=ToleranceSpec)
    checks: List[str] = Field(default_factory=lambda: list(CHECK_NAMES))
    seed: int = Field(default=settings.default_seed, ge=0)
    output_dir: str = "run"

    @field_validator("epsilons")
    @classmethod
    def _positive_epsilons(cls, v: List[float]) -> List[float]:
        if any(e <= 0 for e in v):
            raise ValueError("every epsilon must be positive")
        return sorted(v, reverse=True)

    @field_validator("checks")
    @classmethod
    def _known_checks(cls, v: List[str]) -> List[str]:
        unknown = [c for c in v if c not in CHECK_NAMES]
        if unknown:
            raise ValueError(f"unknown checks: {', '.join(unknown)}")
        # registry order, duplicates dropped
        return [c for c in CHECK_NAMES if c in v]

    def output_path(self) -> Path:
        path = Path(self.output_dir)
        return path if path.is_absolute() else Path(settings.groundlab_output_root) / path

    def echo(self) -> Dict[str, Any]:
        return self.model_dump(mode="json")


def _format_validation(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        loc = ".".join(str(part) for part in e["loc"]) or "<root>"
        lines.append(f"{loc}: {e['msg']}")
    return "; ".join(lines)


def parse_experiment(
    raw: Dict[str, Any],
    source: str = "<config>",
    seed: Optional[int] = None,
    out: Optional[str] = None,
    checks: Optional[List[str]] = None
) -> ExperimentConfig:
    """Validate a raw mapping, applying command-line overrides first"""
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}: top level must be a mapping")
    raw = dict(raw)
    if seed is not None:
        raw["seed"] = seed
    if out is not None:
        raw["output_dir"] = out
    if checks is not None:
        raw["checks"] = checks

    try:
        config = ExperimentConfig.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(f"{source}: {_format_validation(e)}") from e

    try:
        config.domain.build()
    except InvalidDomainError as e:
        raise ConfigError(f"{source}: domain: {e}") from e
    return config


def load_experiment(
    path: Union[str, Path],
    seed: Optional[int] = None,
    out: Optional[str] = None,
    checks: Optional[List[str]] = None
) -> ExperimentConfig:
    """Read and validate a YAML experiment file"""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"{path}: cannot read ({e.strerror})") from e

    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        where = f"{path}:{mark.line + 1}:{mark.column + 1}" if mark else str(path)
        problem = getattr(e, "problem", None) or str(e)
        raise ConfigError(f"{where}: {problem}") from e

    config = parse_experiment(raw, str(path), seed=seed, out=out, checks=checks)
    logger.info(f"Loaded experiment {config.name} from {path} ({len(config.checks)} checks)")
    return config
