from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable

from .admissibility import FrictionMode, cone_blocks
from .assembly import StructuralSystem, assemble_structural
from .config import RunConfig, parse_run_config, with_updates
from .conic_solver import (
    OPTIMAL,
    CertificateDiagnostics,
    ConicProgram,
    SolveReport,
    build_program,
    check_certificate,
    solve,
)
from .errors import ConfigurationError
from .geometry import MeridianGeometry
from .loads import LoadCase
from .mechanism import MechanismReport, extract_mechanism
from .meshing import Mesh, build_mesh
from .models import StudyRow

logger = logging.getLogger(__name__)

UNSTABLE = "unstable"
MONOTONE_SLACK = 1e-6


def build_geometry(cfg: RunConfig) -> MeridianGeometry:
    opening = math.radians(cfg.opening_deg)
    if cfg.geometry == "ellipsoid":
        return MeridianGeometry.ellipsoid(cfg.radius, cfg.rise_ratio * cfg.radius, opening=opening)
    return MeridianGeometry.sphere(cfg.radius, math.radians(cfg.half_embrace_deg), opening=opening)


def build_load_case(cfg: RunConfig) -> LoadCase:
    return LoadCase.horizontal(cfg.unit_weight, cfg.live_direction, cfg.thickness)


def build_dome_program(cfg: RunConfig, timings: dict[str, float] | None = None) -> tuple[Mesh, ConicProgram]:
    timings = timings if timings is not None else {}
    started = time.perf_counter()
    geom = build_geometry(cfg)
    mesh = build_mesh(geom, cfg.mesh_m, cfg.n_intervals, cfg.model)
    timings["mesh"] = time.perf_counter() - started

    started = time.perf_counter()
    system: StructuralSystem = assemble_structural(
        mesh,
        geom,
        build_load_case(cfg),
        surface_points=cfg.quadrature.surface_points,
        edge_points=cfg.quadrature.edge_points,
    )
    timings["assembly"] = time.perf_counter() - started

    started = time.perf_counter()
    cones = cone_blocks(mesh.n_nodes, cfg.thickness, cfg.friction_coefficient, cfg.n_alpha, cfg.friction_mode)
    timings["cones"] = time.perf_counter() - started
    program = build_program(system, cones, cfg.unit_weight, cfg.radius, cfg.thickness)
    return mesh, program


@dataclass
class LimitAnalysisResult:
    report: SolveReport
    mesh: Mesh
    program: ConicProgram
    certificate: CertificateDiagnostics | None = None
    mechanism: MechanismReport | None = None
    timings: dict[str, float] = field(default_factory=dict)

    @property
    def lam(self) -> float | None:
        return self.report.lam if self.report.optimal else None

    @property
    def status(self) -> str:
        return self.report.status


def run_limit_analysis(
    cfg: RunConfig,
    with_mechanism: bool = True,
    lambda_bound: float | None = None,
) -> LimitAnalysisResult:
    timings: dict[str, float] = {}
    mesh, program = build_dome_program(cfg, timings)

    report = solve(program, cfg.solver, lambda_bound=lambda_bound, tolerances=cfg.certificate)
    timings["solve"] = report.solve_time
    result = LimitAnalysisResult(report=report, mesh=mesh, program=program, timings=timings)
    if not report.optimal:
        logger.info("%s: %s", report.status, report.message)
        return result

    started = time.perf_counter()
    result.certificate = check_certificate(program, report, cfg.certificate)
    timings["certificate"] = time.perf_counter() - started
    if with_mechanism and result.certificate.passed:
        started = time.perf_counter()
        result.mechanism = extract_mechanism(
            report, mesh, tolerance=cfg.certificate.normalization, gap_tolerance=cfg.certificate.duality_gap
        )
        timings["mechanism"] = time.perf_counter() - started
    return result


def _evaluate(payload: dict[str, Any]) -> tuple[str, float | None]:
    cfg = parse_run_config(payload)
    result = run_limit_analysis(cfg, with_mechanism=False)
    return result.status, result.lam


def _evaluate_all(configs: list[RunConfig], jobs: int) -> list[tuple[str, float | None]]:
    payloads = [cfg.model_dump(mode="json") for cfg in configs]
    if jobs <= 1 or len(payloads) <= 1:
        return [_evaluate(p) for p in payloads]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_evaluate, payloads))


def _point(cfg: RunConfig, **changes: Any) -> RunConfig:
    return with_updates(cfg, study=None, **changes)


@dataclass
class ConvergenceTable:
    meshes: list[int]
    n_alphas: list[int]
    lam: list[list[float | None]]
    status: list[list[str]]

    def monotone_rows(self) -> list[bool]:
        flags: list[bool] = []
        for row in self.lam:
            values = [v for v in row if v is not None]
            flags.append(all(b <= a + MONOTONE_SLACK for a, b in zip(values, values[1:])))
        return flags

    def columns(self) -> list[str]:
        return ["mesh", *[f"n_alpha_{n}" for n in self.n_alphas], "monotone"]

    def rows(self) -> list[list[Any]]:
        out: list[list[Any]] = []
        for m, row, st, mono in zip(self.meshes, self.lam, self.status, self.monotone_rows()):
            cells = [v if s == OPTIMAL else UNSTABLE for v, s in zip(row, st)]
            out.append([f"{m}x{2 * m}", *cells, mono])
        return out


def convergence_study(cfg: RunConfig, jobs: int = 1) -> ConvergenceTable:
    grid = cfg.study
    if grid is None or grid.kind != "convergence":
        raise ConfigurationError("convergence study needs a study block of kind 'convergence'")
    points = [_point(cfg, mesh_m=m, mesh_n=2 * m, n_alpha=n) for m in grid.meshes for n in grid.n_alphas]
    results = _evaluate_all(points, jobs)

    width = len(grid.n_alphas)
    table = ConvergenceTable(
        meshes=list(grid.meshes),
        n_alphas=list(grid.n_alphas),
        lam=[[lam for _, lam in results[i : i + width]] for i in range(0, len(results), width)],
        status=[[st for st, _ in results[i : i + width]] for i in range(0, len(results), width)],
    )
    for m, ok in zip(table.meshes, table.monotone_rows()):
        if not ok:
            logger.warning("mesh %dx%d: lambda increases with n_alpha", m, 2 * m)
    return table


@dataclass
class SweepResult:
    variable: str
    series: dict[str, list[StudyRow]]

    def admissible_interval(self, name: str) -> tuple[float, float] | None:
        stable = [row.value for row in self.series[name] if row.stable]
        return (min(stable), max(stable)) if stable else None

    def peak(self, name: str) -> StudyRow | None:
        stable = [row for row in self.series[name] if row.stable]
        return max(stable, key=lambda row: row.lam) if stable else None

    def columns(self) -> list[str]:
        return ["series", self.variable, "lambda", "status"]

    def rows(self) -> list[list[Any]]:
        return [
            [row.series, row.value, row.lam if row.stable else UNSTABLE, row.status]
            for rows in self.series.values()
            for row in rows
        ]


def parametric_sweep(cfg: RunConfig, jobs: int = 1) -> SweepResult:
    grid = cfg.study
    if grid is None or grid.kind != "sweep" or grid.variable is None:
        raise ConfigurationError("parametric sweep needs a study block of kind 'sweep'")
    modes = list(grid.modes) or [cfg.friction_mode]
    variable = grid.variable

    points: list[RunConfig] = []
    for mode in modes:
        for value in grid.values:
            changes: dict[str, Any] = {"friction_mode": mode, variable: value}
            points.append(_point(cfg, **changes))
    results = _evaluate_all(points, jobs)

    series: dict[str, list[StudyRow]] = {}
    for point, (status, lam) in zip(points, results):
        name = FrictionMode(point.friction_mode).value
        value = float(getattr(point, variable))
        series.setdefault(name, []).append(StudyRow(series=name, variable=variable, value=value, lam=lam, status=status))

    sweep = SweepResult(variable=variable, series=series)
    for name in series:
        logger.info("series %s: admissible %s, peak %s", name, sweep.admissible_interval(name), sweep.peak(name))
    return sweep


@dataclass
class BisectionResult:
    variable: str
    value: float
    bracket: tuple[float, float]
    iterations: int
    history: list[StudyRow] = field(default_factory=list)

    def columns(self) -> list[str]:
        return ["iteration", self.variable, "lambda", "status"]

    def rows(self) -> list[list[Any]]:
        return [[i, row.value, row.lam if row.stable else UNSTABLE, row.status] for i, row in enumerate(self.history)]


def _bisect(
    cfg: RunConfig,
    variable: str,
    bracket: tuple[float, float],
    tol: float,
    configure: Callable[[float], RunConfig],
) -> BisectionResult:
    lo, hi = bracket
    if not 0 < lo < hi:
        raise ConfigurationError(f"invalid bracket {bracket}")
    history: list[StudyRow] = []

    def stands(value: float) -> bool:
        status, lam = _evaluate(configure(value).model_dump(mode="json"))
        history.append(StudyRow(series=variable, variable=variable, value=value, lam=lam, status=status))
        return status == OPTIMAL and lam is not None and lam >= -cfg.solver.gap_tolerance

    if stands(lo):
        raise ConfigurationError(f"invalid bracket: dome already stands at {variable} = {lo}")
    if not stands(hi):
        raise ConfigurationError(f"invalid bracket: dome does not stand at {variable} = {hi}")

    iterations = 0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if stands(mid):
            hi = mid
        else:
            lo = mid
        iterations += 1
    logger.info("minimum %s in [%.6f, %.6f] after %d bisections", variable, lo, hi, iterations)
    return BisectionResult(variable=variable, value=hi, bracket=(lo, hi), iterations=iterations, history=history)


def min_thickness_search(cfg: RunConfig, bracket: tuple[float, float], tol: float = 1e-4) -> BisectionResult:
    return _bisect(cfg, "thickness_ratio", bracket, tol, lambda t: _point(cfg, thickness_ratio=t))


def min_friction_search(cfg: RunConfig, bracket: tuple[float, float], tol: float = 1e-4) -> BisectionResult:
    mode = cfg.friction_mode if cfg.friction_mode is not FrictionMode.NOT_ENFORCED else FrictionMode.COULOMB
    return _bisect(
        cfg,
        "friction_coefficient",
        bracket,
        tol,
        lambda mu: _point(cfg, friction_coefficient=mu, friction_mode=mode),
    )
