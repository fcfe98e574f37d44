from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import cvxpy as cp
import numpy as np
import scipy.sparse as sp

from .admissibility import SQRT2, ConeBlocks, rotated_margin, standard_margin
from .assembly import StructuralSystem
from .config import CertificateSettings, SolverSettings
from .errors import CertificateError
from .models import M_PHI, N_COMPONENTS

logger = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
NUMERICAL_TROUBLE = "numerical_trouble"

_STATUS_MAP = {
    cp.OPTIMAL: OPTIMAL,
    cp.INFEASIBLE: INFEASIBLE,
    cp.INFEASIBLE_INACCURATE: INFEASIBLE,
    cp.UNBOUNDED: UNBOUNDED,
    cp.UNBOUNDED_INACCURATE: UNBOUNDED,
}

_STATUS_MESSAGES = {
    OPTIMAL: "",
    INFEASIBLE: "unstable under self-weight: no admissible equilibrated state at lambda = 0",
    UNBOUNDED: "collapse multiplier unbounded above; check live load and boundary conditions",
    NUMERICAL_TROUBLE: "solver ran into numerical trouble; keep solver.scale_unknowns on or tighten the mesh",
}


@dataclass(frozen=True)
class ConicProgram:
    """maximize lambda s.t. B x + lambda f_live = -f_dead, E x = 0, cone rows of x in K."""

    system: StructuralSystem
    cones: ConeBlocks
    force_scale: float
    moment_scale: float

    @property
    def n_stress(self) -> int:
        return self.system.n_unknowns

    @property
    def n_vars(self) -> int:
        return self.n_stress + 1

    @property
    def column_scale(self) -> np.ndarray:
        per_node = np.full(N_COMPONENTS, self.force_scale)
        per_node[M_PHI:] = self.moment_scale
        return np.tile(per_node, self.system.n_nodes)

    def row_scale(self) -> np.ndarray:
        """Equilibrium row weights: force rows and moment rows normalized separately."""
        dead = self.system.f_dead.reshape(-1, 6)
        force = max(float(np.abs(dead[:, :3]).max(initial=0.0)), np.finfo(float).tiny)
        moment = max(float(np.abs(dead[:, 3:]).max(initial=0.0)), force * self.moment_scale / self.force_scale)
        weights = np.empty_like(dead)
        weights[:, :3] = 1.0 / force
        weights[:, 3:] = 1.0 / moment
        return weights.ravel()


def build_program(system: StructuralSystem, cones: ConeBlocks, gamma: float, radius: float, thickness: float) -> ConicProgram:
    return ConicProgram(
        system=system,
        cones=cones,
        force_scale=gamma * radius * thickness,
        moment_scale=gamma * radius * thickness**2,
    )


@dataclass
class SolveReport:
    status: str
    lam: float | None = None
    x_hat: np.ndarray | None = None
    u: np.ndarray | None = None
    bc_multipliers: np.ndarray | None = None
    rho: np.ndarray | None = None  # (N, 2, 3): plus, minus
    sigma: np.ndarray | None = None  # (N, n_alpha, 3)
    gap: float = float("nan")
    dead_power: float = float("nan")
    live_power: float = float("nan")
    solver: str = ""
    solve_time: float = 0.0
    message: str = ""
    inaccurate: bool = False
    attempts: int = 1

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL

    def summary(self) -> dict[str, Any]:
        return {
            "status": self.status,
            "lambda": self.lam,
            "gap": self.gap,
            "dead_power": self.dead_power,
            "live_power": self.live_power,
            "solver": self.solver,
            "solve_time": self.solve_time,
            "message": self.message,
            "inaccurate": self.inaccurate,
            "attempts": self.attempts,
        }


REFINED_TOLERANCE = 1e-10

# certificate quantities a solve must meet before it is accepted
FEASIBILITY_CHECKS = frozenset({"equality_residual", "cone_margin", "dual_residual", "dual_cone_margin", "complementarity"})


def _solver_options(name: str, settings: SolverSettings, refine: bool = False) -> dict[str, Any]:
    gap, feas, max_iter = settings.gap_tolerance, settings.feasibility_tolerance, settings.max_iterations
    if refine:
        gap, feas, max_iter = min(gap, REFINED_TOLERANCE), min(feas, REFINED_TOLERANCE), 4 * max_iter
    if name == "CLARABEL":
        options: dict[str, Any] = {"tol_gap_abs": gap, "tol_gap_rel": gap, "tol_feas": feas, "max_iter": max_iter}
        if refine:
            options.update(
                equilibrate_max_iter=50,
                iterative_refinement_max_iter=50,
                iterative_refinement_reltol=1e-15,
                iterative_refinement_abstol=1e-15,
            )
        return options
    if name == "ECOS":
        return {"abstol": gap, "reltol": gap, "feastol": feas, "max_iters": max_iter}
    if name == "SCS":
        return {"eps": gap, "max_iters": max(max_iter, 10000)}
    return {}


def _resolve_solver(settings: SolverSettings) -> str | None:
    name = settings.name.upper()
    if name in cp.installed_solvers():
        return name
    logger.warning("solver %s not installed, letting cvxpy choose", name)
    return None


def _cone_constraint(rows: sp.csr_matrix, x: cp.Variable, rotated: bool) -> cp.constraints.SOC:
    r0, r1, r2 = rows[0::3], rows[1::3], rows[2::3]
    if rotated:
        # 2 x1 x2 >= x3^2  <=>  x1 + x2 >= ||(x1 - x2, sqrt2 x3)||
        return cp.SOC((r0 + r1) @ x, cp.vstack([(r0 - r1) @ x, SQRT2 * (r2 @ x)]), axis=0)
    return cp.SOC(r0 @ x, cp.vstack([r1 @ x, r2 @ x]), axis=0)


def _cone_dual(constraint: cp.constraints.SOC | None, count: int, rotated: bool) -> np.ndarray:
    if constraint is None or count == 0:
        return np.zeros((count, 3))
    value = constraint.dual_value
    if isinstance(value, (list, tuple)):
        t_dual = np.asarray(value[0], dtype=float).reshape(count)
        x_dual = np.asarray(value[1], dtype=float).reshape(2, count)
    else:
        flat = np.asarray(value, dtype=float).ravel()
        t_dual, x_dual = flat[:count], flat[count:].reshape(2, count)
    z = np.column_stack([t_dual, x_dual[0], x_dual[1]])
    if rotated:
        return np.column_stack([z[:, 0] + z[:, 1], z[:, 0] - z[:, 1], SQRT2 * z[:, 2]])
    return z


def _solve_once(
    program: ConicProgram,
    settings: SolverSettings,
    lambda_bound: float | None,
    scaled: bool,
    refine: bool,
) -> SolveReport:
    system, cones = program.system, program.cones
    n = system.n_unknowns

    col = program.column_scale if scaled else np.ones(n)
    row = program.row_scale() if scaled else np.ones(system.B.shape[0])
    rot_w = 1.0 / program.moment_scale if scaled else 1.0
    std_w = 1.0 / program.force_scale if scaled else 1.0
    D = sp.diags(col)

    x = cp.Variable(n)
    lam = cp.Variable()
    B_s = (sp.diags(row) @ system.B @ D).tocsr()
    equilibrium = B_s @ x + lam * (row * system.f_live) == -(row * system.f_dead)
    constraints: list[cp.constraints.Constraint] = [equilibrium]
    boundary = None
    if len(system.bc_index):
        boundary = x[system.bc_index] == 0
        constraints.append(boundary)
    rot = std = None
    if cones.n_rotated:
        rot = _cone_constraint((rot_w * cones.rotated @ D).tocsr(), x, rotated=True)
        constraints.append(rot)
    if cones.n_standard:
        std = _cone_constraint((std_w * cones.standard @ D).tocsr(), x, rotated=False)
        constraints.append(std)
    if lambda_bound is not None:
        constraints.append(lam <= lambda_bound)

    problem = cp.Problem(cp.Maximize(lam), constraints)
    solver = _resolve_solver(settings)
    options = _solver_options(solver or "", settings, refine)
    logger.debug(
        "solving %d unknowns, %d cones with %s (scaled=%s, refined=%s)",
        n + 1,
        cones.n_cones,
        solver or "cvxpy default",
        scaled,
        refine,
    )

    started = time.perf_counter()
    try:
        problem.solve(solver=solver, verbose=settings.verbose, **options)
    except cp.SolverError as exc:
        logger.warning("solver error: %s", exc)
        return SolveReport(
            status=NUMERICAL_TROUBLE,
            solver=solver or "",
            solve_time=time.perf_counter() - started,
            message=f"{_STATUS_MESSAGES[NUMERICAL_TROUBLE]} ({exc})",
        )
    elapsed = time.perf_counter() - started
    solver_name = problem.solver_stats.solver_name if problem.solver_stats else (solver or "")

    status = _STATUS_MAP.get(problem.status, NUMERICAL_TROUBLE)
    if status != OPTIMAL and problem.status != cp.OPTIMAL_INACCURATE:
        logger.info("solver status %s", problem.status)
        return SolveReport(status=status, solver=solver_name, solve_time=elapsed, message=_STATUS_MESSAGES[status])

    y = np.asarray(equilibrium.dual_value, dtype=float).ravel()
    orient = 1.0 if float(y @ (row * system.f_live)) >= 0 else -1.0
    u = orient * row * y
    eta = np.zeros(len(system.bc_index))
    if boundary is not None:
        eta = orient * np.asarray(boundary.dual_value, dtype=float).ravel() / col[system.bc_index]
    rho = rot_w * _cone_dual(rot, cones.n_rotated, rotated=True)
    sigma = std_w * _cone_dual(std, cones.n_standard, rotated=False)

    lam_value = float(lam.value)
    dead_power = float(u @ system.f_dead)
    live_power = float(u @ system.f_live)
    return SolveReport(
        status=OPTIMAL,
        lam=lam_value,
        x_hat=col * np.asarray(x.value, dtype=float),
        u=u,
        bc_multipliers=eta,
        rho=rho.reshape(system.n_nodes, 2, 3),
        sigma=sigma.reshape(system.n_nodes, cones.n_alpha, 3),
        gap=abs(lam_value + dead_power) / max(1.0, abs(lam_value)),
        dead_power=dead_power,
        live_power=live_power,
        solver=solver_name,
        solve_time=elapsed,
        inaccurate=problem.status == cp.OPTIMAL_INACCURATE,
    )


def solve_attempts(settings: SolverSettings) -> list[tuple[bool, bool]]:
    """(scaled, refined) pairs tried in order until a solve passes the feasibility checks."""
    ladder = [
        (settings.scale_unknowns, False),
        (settings.scale_unknowns, True),
        (not settings.scale_unknowns, True),
    ]
    return ladder[: settings.max_attempts]


def blocking_failures(diag: CertificateDiagnostics, lambda_bound: float | None = None) -> list[dict[str, Any]]:
    # a capped lambda leaves a duality gap, spread over the complementarity products
    if lambda_bound is not None:
        kinds = FEASIBILITY_CHECKS - {"complementarity"}
    else:
        kinds = FEASIBILITY_CHECKS | {"duality_gap"}
    return [f for f in diag.failures if f["type"] in kinds]


def _violation(failures: list[dict[str, Any]]) -> float:
    return max((f["value"] / f["tolerance"] for f in failures), default=0.0)


def solve(
    program: ConicProgram,
    settings: SolverSettings | None = None,
    lambda_bound: float | None = None,
    tolerances: CertificateSettings | None = None,
) -> SolveReport:
    """Maximize lambda; re-solve with tighter settings until the certificate's feasibility checks hold.

    An optimum the solver flags inaccurate is accepted only when those checks pass;
    otherwise the least violating attempt is returned as ``numerical_trouble``.
    """
    settings = settings or SolverSettings()
    tolerances = tolerances or CertificateSettings()
    best: tuple[float, SolveReport] | None = None
    report = SolveReport(status=NUMERICAL_TROUBLE, message=_STATUS_MESSAGES[NUMERICAL_TROUBLE])
    total_time = 0.0

    for attempt, (scaled, refine) in enumerate(solve_attempts(settings), start=1):
        report = _solve_once(program, settings, lambda_bound, scaled, refine)
        total_time += report.solve_time
        report.attempts, report.solve_time = attempt, total_time
        if report.status in (INFEASIBLE, UNBOUNDED):
            return report
        if report.status != OPTIMAL:
            continue
        blocking = blocking_failures(diagnose(program, report, tolerances), lambda_bound)
        if not blocking:
            if report.inaccurate:
                logger.info("solver flagged the optimum inaccurate; certificate checks hold, accepted")
            logger.info("lambda = %.6f (gap %.1e, %.2fs, %s, attempt %d)", report.lam, report.gap, total_time, report.solver, attempt)
            return report
        logger.warning(
            "attempt %d (scaled=%s, refined=%s): %s out of tolerance",
            attempt,
            scaled,
            refine,
            ", ".join(f["type"] for f in blocking),
        )
        score = _violation(blocking)
        if best is None or score < best[0]:
            best = (score, report)

    if best is None:
        return report
    chosen = best[1]
    chosen.solve_time, chosen.attempts = total_time, report.attempts
    if chosen.inaccurate:
        return replace(
            chosen,
            status=NUMERICAL_TROUBLE,
            message=f"{_STATUS_MESSAGES[NUMERICAL_TROUBLE]} (inaccurate optimum fails the certificate)",
        )
    return chosen


@dataclass
class CertificateDiagnostics:
    equality_residual: float = float("nan")
    cone_margin: float = float("nan")
    dual_residual: float = float("nan")
    dual_cone_margin: float = float("nan")
    duality_gap: float = float("nan")
    normalization: float = float("nan")
    complementarity: float = float("nan")
    failures: list[dict[str, Any]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict[str, Any]:
        return {
            "equality_residual": self.equality_residual,
            "cone_margin": self.cone_margin,
            "dual_residual": self.dual_residual,
            "dual_cone_margin": self.dual_cone_margin,
            "duality_gap": self.duality_gap,
            "normalization": self.normalization,
            "complementarity": self.complementarity,
            "passed": self.passed,
            "failures": list(self.failures),
        }

    def raise_for_failure(self) -> None:
        if self.failures:
            first = self.failures[0]
            raise CertificateError(first["type"], first["value"], first["tolerance"])


def diagnose(
    program: ConicProgram,
    report: SolveReport,
    tolerances: CertificateSettings | None = None,
) -> CertificateDiagnostics:
    tol = tolerances or CertificateSettings()
    diag = CertificateDiagnostics()

    def flag(kind: str, value: float, limit: float, message: str) -> None:
        diag.failures.append({"type": kind, "value": float(value), "tolerance": float(limit), "message": message})

    if not report.optimal or report.x_hat is None or report.u is None or report.lam is None:
        flag("not_optimal", float("inf"), 0.0, f"no optimal solution to certify (status {report.status})")
        return diag

    system, cones = program.system, program.cones
    x, lam, u = report.x_hat, report.lam, report.u
    tiny = np.finfo(float).tiny

    # (a) primal equalities
    load_scale = max(float(np.abs(system.f_dead).max()), abs(lam) * float(np.abs(system.f_live).max()), tiny)
    eq = float(np.abs(system.residual(x, lam)).max()) / load_scale
    if len(system.bc_index):
        eq = max(eq, float(np.abs(x[system.bc_index]).max()) / program.force_scale)
    diag.equality_residual = eq
    if eq > tol.equality:
        flag("equality_residual", eq, tol.equality, "equilibrium or boundary rows violated")

    # (b) primal cones, in units of the stress scales
    g_rot = (cones.rotated @ x).reshape(-1, 3)
    g_std = (cones.standard @ x).reshape(-1, 3)
    margins = [float(rotated_margin(g_rot).min(initial=np.inf)) / program.moment_scale]
    margins.append(float(standard_margin(g_std).min(initial=np.inf)) / program.force_scale)
    diag.cone_margin = min(margins)
    if diag.cone_margin < -tol.cone_margin:
        flag("cone_margin", -diag.cone_margin, tol.cone_margin, "stress state outside an admissibility cone")

    # (c) dual equality B^T u + E^T eta = G^T rho + F^T sigma, and dual cone membership
    rho = report.rho.reshape(-1, 3) if report.rho is not None else np.zeros((0, 3))
    sigma = report.sigma.reshape(-1, 3) if report.sigma is not None else np.zeros((0, 3))
    lhs = system.B.T @ u
    if report.bc_multipliers is not None and len(system.bc_index):
        lhs = lhs + system.bc_rows.T @ report.bc_multipliers
    rhs = cones.rotated.T @ rho.ravel() + cones.standard.T @ sigma.ravel()
    # floor: a unit-power mechanism spread over the live load
    unit_power = float(np.abs(system.B).max()) / max(float(np.abs(system.f_live).sum()), tiny)
    dual_scale = max(float(np.abs(system.B.T @ u).max(initial=0.0)), unit_power, tiny)
    diag.dual_residual = float(np.abs(lhs - rhs).max(initial=0.0)) / dual_scale
    if diag.dual_residual > tol.dual:
        flag("dual_residual", diag.dual_residual, tol.dual, "dual equality violated")
    flow_scale = max(float(np.abs(rho).max(initial=0.0)), float(np.abs(sigma).max(initial=0.0)), tiny)
    diag.dual_cone_margin = min(
        float(rotated_margin(rho).min(initial=np.inf)),
        float(standard_margin(sigma).min(initial=np.inf)),
    ) / flow_scale
    if diag.dual_cone_margin < -tol.dual:
        flag("dual_cone_margin", -diag.dual_cone_margin, tol.dual, "flow multipliers outside the dual cones")

    # (d) strong duality, (e) live-power normalization
    diag.duality_gap = abs(lam + float(u @ system.f_dead)) / max(1.0, abs(lam))
    if diag.duality_gap > tol.duality_gap:
        flag("duality_gap", diag.duality_gap, tol.duality_gap, "primal and dual objectives differ")
    if not np.any(system.f_live):
        flag("degenerate_live_load", 1.0, tol.normalization, "live load vector is zero; normalization cannot hold")
    diag.normalization = abs(1.0 - float(u @ system.f_live))
    if diag.normalization > tol.normalization:
        flag("normalization", diag.normalization, tol.normalization, "live-load power differs from one")

    # (f) complementarity: each cone/flow product in units of the live-load power
    products = np.concatenate([np.einsum("ij,ij->i", g_rot, rho), np.einsum("ij,ij->i", g_std, sigma)])
    diag.complementarity = float(np.abs(products).max(initial=0.0)) / max(1.0, abs(lam))
    if diag.complementarity > tol.complementarity:
        flag("complementarity", diag.complementarity, tol.complementarity, "stress and flow are not complementary")
    return diag


def check_certificate(
    program: ConicProgram,
    report: SolveReport,
    tolerances: CertificateSettings | None = None,
    strict: bool = False,
) -> CertificateDiagnostics:
    diag = diagnose(program, report, tolerances)
    if diag.failures:
        logger.warning("certificate failed: %s", ", ".join(f["type"] for f in diag.failures))
    if strict:
        diag.raise_for_failure()
    return diag


def export_program(program: ConicProgram, path: Path) -> Path:
    """Portable text dump of the unscaled program.

    Layout: ``dims`` line, objective column, equality triplets ``row col value``
    over [x; lambda], nonzero right-hand side entries, cone-row triplets over x,
    then one line per cone ``index kind first_row``.
    """
    system, cones = program.system, program.cones
    n = system.n_unknowns
    eq = sp.hstack(
        [system.equality_matrix, sp.csr_matrix(np.concatenate([system.f_live, np.zeros(len(system.bc_index))])[:, None])],
        format="coo",
    )
    rhs = -np.concatenate([system.f_dead, np.zeros(len(system.bc_index))])
    cone_rows = sp.vstack([cones.rotated, cones.standard], format="coo")

    lines: list[str] = []
    lines.append("# dome-limit conic program: maximize lambda")
    lines.append("# rotated cone: 2 x1 x2 >= x3^2, x1, x2 >= 0; standard cone: x1 >= ||(x2, x3)||")
    lines.append(f"dims {n + 1} {eq.shape[0]} {cones.n_rotated} {cones.n_standard}")
    lines.append(f"objective {n}")
    lines.append(f"equalities {eq.nnz}")
    lines.extend(f"{i} {j} {v:.17g}" for i, j, v in zip(eq.row, eq.col, eq.data))
    nz = np.flatnonzero(rhs)
    lines.append(f"rhs {len(nz)}")
    lines.extend(f"{i} {rhs[i]:.17g}" for i in nz)
    lines.append(f"cone_rows {cone_rows.nnz}")
    lines.extend(f"{i} {j} {v:.17g}" for i, j, v in zip(cone_rows.row, cone_rows.col, cone_rows.data))
    lines.append(f"cones {cones.n_cones}")
    lines.extend(f"{k} rotated {3 * k}" for k in range(cones.n_rotated))
    offset = cones.n_rotated
    lines.extend(f"{offset + k} standard {3 * (offset + k)}" for k in range(cones.n_standard))

    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
