from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .admissibility import FrictionMode
from .errors import ConfigurationError

SweepVariable = Literal["thickness_ratio", "half_embrace_deg", "friction_coefficient", "rise_ratio"]
StudyKind = Literal["convergence", "sweep", "min_thickness", "min_friction"]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class SolverSettings(_Strict):
    name: str = "CLARABEL"
    gap_tolerance: float = Field(1e-8, gt=0)
    feasibility_tolerance: float = Field(1e-8, gt=0)
    max_iterations: int = Field(200, ge=1)
    scale_unknowns: bool = True
    max_attempts: int = Field(3, ge=1, le=3)
    verbose: bool = False


class QuadratureSettings(_Strict):
    surface_points: int = Field(4, ge=1, le=32)
    edge_points: int = Field(8, ge=1, le=64)


class CertificateSettings(_Strict):
    equality: float = Field(1e-6, gt=0)
    cone_margin: float = Field(1e-8, gt=0)
    dual: float = Field(1e-6, gt=0)
    duality_gap: float = Field(1e-6, gt=0)
    normalization: float = Field(1e-6, gt=0)
    complementarity: float = Field(1e-6, gt=0)


class OutputSettings(_Strict):
    directory: str = "dome-limit-out"
    export_vtk: bool = True
    crack_table: bool = True
    export_program: bool = False
    matrix_market: bool = False
    amplitude: float = Field(0.1, ge=0)

    @property
    def path(self) -> Path:
        return Path(self.directory).expanduser()


class StudyGrid(_Strict):
    kind: StudyKind
    meshes: list[int] = Field(default_factory=list)
    n_alphas: list[int] = Field(default_factory=list)
    variable: Optional[SweepVariable] = None
    values: list[float] = Field(default_factory=list)
    modes: list[FrictionMode] = Field(default_factory=list)
    bracket: Optional[tuple[float, float]] = None
    tolerance: float = Field(1e-4, gt=0)

    @model_validator(mode="after")
    def _check_grid(self) -> StudyGrid:
        if self.kind == "convergence":
            if not self.meshes or not self.n_alphas:
                raise ValueError("convergence study needs nonempty 'meshes' and 'n_alphas'")
            if min(self.meshes) < 1 or min(self.n_alphas) < 2:
                raise ValueError("mesh sizes must be >= 1 and n_alpha values >= 2")
        elif self.kind == "sweep":
            if self.variable is None or not self.values:
                raise ValueError("sweep needs a 'variable' and nonempty 'values'")
        else:
            if self.bracket is None:
                raise ValueError(f"{self.kind} search needs a 'bracket'")
            lo, hi = self.bracket
            if not 0 < lo < hi:
                raise ValueError(f"bracket must satisfy 0 < lo < hi, got {self.bracket}")
        return self


class StudySpec(_Strict):
    geometry: Literal["sphere", "ellipsoid"] = "sphere"
    thickness_ratio: float = Field(0.1, gt=0, le=1.0)
    half_embrace_deg: float = Field(90.0, gt=0, lt=180)
    rise_ratio: float = Field(1.0, gt=0)
    opening_deg: float = Field(0.0, ge=0)
    friction_coefficient: Optional[float] = 0.7
    friction_mode: FrictionMode = FrictionMode.COULOMB
    n_alpha: int = Field(32, ge=2)
    mesh_m: int = Field(32, ge=1)
    mesh_n: Optional[int] = Field(None, ge=2)
    model: Literal["half", "full"] = "half"
    live_direction: tuple[float, float, float] = (1.0, 0.0, 0.0)
    unit_weight: float = Field(1.0, gt=0)
    radius: float = Field(1.0, gt=0)
    study: Optional[StudyGrid] = None

    @field_validator("live_direction")
    @classmethod
    def _horizontal(cls, value: tuple[float, float, float]) -> tuple[float, float, float]:
        x, y, z = value
        norm = math.hypot(x, y)
        if z != 0.0 or norm == 0.0:
            raise ValueError("live_direction must be a nonzero horizontal vector (z = 0)")
        if abs(norm - 1.0) <= 1e-12:
            return (x, y, 0.0)
        return (x / norm, y / norm, 0.0)

    @model_validator(mode="after")
    def _check_consistency(self) -> StudySpec:
        if self.friction_mode.needs_mu and (self.friction_coefficient is None or self.friction_coefficient <= 0):
            raise ValueError(f"friction_mode {self.friction_mode.value} needs friction_coefficient > 0")
        if self.model == "half" and self.live_direction[1] != 0.0:
            raise ValueError("half model requires live_direction in the xz-plane")
        if self.geometry == "sphere" and self.opening_deg >= self.half_embrace_deg:
            raise ValueError("opening_deg must be smaller than half_embrace_deg")
        if self.geometry == "ellipsoid" and self.opening_deg >= 90.0:
            raise ValueError("opening_deg must be smaller than 90 for an ellipsoid")
        return self

    @property
    def n_intervals(self) -> int:
        return self.mesh_n if self.mesh_n is not None else 2 * self.mesh_m

    @property
    def thickness(self) -> float:
        return self.thickness_ratio * self.radius


class RunConfig(StudySpec):
    solver: SolverSettings = Field(default_factory=SolverSettings)
    quadrature: QuadratureSettings = Field(default_factory=QuadratureSettings)
    certificate: CertificateSettings = Field(default_factory=CertificateSettings)
    output: OutputSettings = Field(default_factory=OutputSettings)
    crack_threshold: float = Field(1e-4, gt=0, lt=1)


def default_run_config() -> RunConfig:
    return RunConfig()


def parse_run_config(data: object) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigurationError(f"invalid configuration:\n{exc}") from exc


def with_updates(cfg: RunConfig, **changes: object) -> RunConfig:
    """Copy of ``cfg`` with ``changes`` applied, revalidated as a whole."""
    data = cfg.model_dump(mode="json")
    data.update(changes)
    return parse_run_config(data)


def load_run_config(path: Path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigurationError(f"config file not found: {path}") from exc
    except (json.JSONDecodeError, OSError) as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    return parse_run_config(data)


def save_run_config(cfg: RunConfig, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(cfg.model_dump_json(indent=2), encoding="utf-8")
    return path


def canonical_json(cfg: RunConfig) -> str:
    return json.dumps(cfg.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))


def settings_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(canonical_json(cfg).encode("utf-8")).hexdigest()
