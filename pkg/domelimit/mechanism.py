from __future__ import annotations

import logging
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from scipy.spatial.transform import Rotation

from .conic_solver import SolveReport
from .errors import MechanismError
from .geometry import frame_field
from .meshing import Mesh

logger = logging.getLogger(__name__)

HINGE_EXTRADOS = "hinge_extrados"
HINGE_INTRADOS = "hinge_intrados"
IN_PLANE_SHEAR = "in_plane_shear"
OUT_OF_PLANE_SHEAR = "out_of_plane_shear"
CRACK_KINDS = (HINGE_EXTRADOS, HINGE_INTRADOS, IN_PLANE_SHEAR, OUT_OF_PLANE_SHEAR)

DEFAULT_CRACK_THRESHOLD = 1e-4
VTK_QUAD = 9


@dataclass(frozen=True)
class MechanismReport:
    """Incipient collapse mechanism normalized to unit live-load power.

    ``rho`` holds the unilateral flows per node as (plus, minus); plus binds when the
    pressure reaches the extrados face.
    """

    lam: float
    velocity: np.ndarray
    rotation: np.ndarray
    rho: np.ndarray
    sigma: np.ndarray
    node_params: np.ndarray
    dead_power: float
    live_power: float

    @property
    def n_elements(self) -> int:
        return len(self.velocity)

    def node_flows(self) -> dict[str, np.ndarray]:
        n_nodes = len(self.node_params)
        sigma = self.sigma.reshape(n_nodes, -1, 3)
        return {
            HINGE_EXTRADOS: np.linalg.norm(self.rho[:, 0], axis=1),
            HINGE_INTRADOS: np.linalg.norm(self.rho[:, 1], axis=1),
            IN_PLANE_SHEAR: np.abs(sigma[:, :, 1]).sum(axis=1),
            OUT_OF_PLANE_SHEAR: np.abs(sigma[:, :, 2]).sum(axis=1),
        }

    def point_velocity(self, element: int, points: np.ndarray) -> np.ndarray:
        return self.velocity[element] + np.cross(self.rotation[element], points)


@dataclass(frozen=True)
class CrackRecord:
    node: int
    phi: float
    theta: float
    kind: str
    magnitude: float

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass
class CrackPattern:
    threshold: float
    max_flow: float
    records: list[CrackRecord] = field(default_factory=list)

    def counts(self) -> dict[str, int]:
        counter = Counter(rec.kind for rec in self.records)
        return {kind: counter.get(kind, 0) for kind in CRACK_KINDS}

    def of_kind(self, kind: str) -> list[CrackRecord]:
        return [rec for rec in self.records if rec.kind == kind]

    def total(self, kind: str) -> float:
        return float(sum(rec.magnitude for rec in self.of_kind(kind)))


def extract_mechanism(
    report: SolveReport,
    mesh: Mesh,
    tolerance: float = 1e-6,
    gap_tolerance: float | None = None,
) -> MechanismReport:
    """Velocities, rotations and flows of the incipient mechanism.

    ``tolerance`` bounds the live-power normalization, ``gap_tolerance`` (default
    ``tolerance``) the relative mismatch between dead-load power and -lambda.
    """
    gap_tolerance = tolerance if gap_tolerance is None else gap_tolerance
    if not report.optimal or report.u is None or report.lam is None:
        raise MechanismError(f"no mechanism without an optimal solve (status {report.status})")
    norm_gap = abs(1.0 - report.live_power)
    if norm_gap > tolerance:
        raise MechanismError(f"live-load power normalization violated by {norm_gap:.3e}")
    duality = abs(report.lam + report.dead_power)
    if duality > gap_tolerance * max(1.0, abs(report.lam)):
        raise MechanismError(f"dead-load work differs from -lambda by {duality:.3e}")

    u = report.u.reshape(mesh.n_elements, 6)
    rho = report.rho if report.rho is not None else np.zeros((mesh.n_nodes, 2, 3))
    sigma = report.sigma if report.sigma is not None else np.zeros((mesh.n_nodes, 0, 3))
    if np.any(u) and not (np.any(rho) or np.any(sigma)):
        raise MechanismError("nonzero mechanism with vanishing flows: complementarity is inconsistent")

    return MechanismReport(
        lam=report.lam,
        velocity=u[:, :3].copy(),
        rotation=u[:, 3:].copy(),
        rho=np.asarray(rho, dtype=float),
        sigma=np.asarray(sigma, dtype=float),
        node_params=mesh.node_params,
        dead_power=report.dead_power,
        live_power=report.live_power,
    )


def classify_cracks(mech: MechanismReport, threshold: float = DEFAULT_CRACK_THRESHOLD) -> CrackPattern:
    flows = mech.node_flows()
    max_flow = max(float(values.max(initial=0.0)) for values in flows.values())
    pattern = CrackPattern(threshold=threshold, max_flow=max_flow)
    if max_flow <= 0.0:
        return pattern

    cutoff = threshold * max_flow
    for node, (phi, theta) in enumerate(mech.node_params):
        for kind in CRACK_KINDS:
            value = float(flows[kind][node])
            if value > cutoff:
                pattern.records.append(
                    CrackRecord(node=node, phi=float(phi), theta=float(theta), kind=kind, magnitude=value / max_flow)
                )
    logger.info("crack pattern: %s", pattern.counts())
    return pattern


def displaced_corners(mech: MechanismReport, mesh: Mesh, amplitude: float) -> tuple[np.ndarray, np.ndarray]:
    """Element corners before and after the finite rigid motion scaled by ``amplitude``.

    Each element moves as x -> R(amplitude * w) x + amplitude * v, which is a rigid
    image whose first-order term is the mechanism velocity v + w x x.
    """
    params = mesh.element_params
    corners = frame_field(mesh.geometry, params[..., 0], params[..., 1]).position
    rot = Rotation.from_rotvec(amplitude * mech.rotation)
    moved = np.einsum("eij,ekj->eki", rot.as_matrix(), corners) + amplitude * mech.velocity[:, None, :]
    return corners, moved


def export_mechanism(mech: MechanismReport, mesh: Mesh, path: Path, amplitude: float = 0.1) -> Path:
    """Legacy-ASCII VTK unstructured grid.

    Points: mesh nodes, then 4 displaced corners per element. Cells: undeformed
    quads, then displaced quads. ``configuration`` cell data marks the two.
    """
    _, moved = displaced_corners(mech, mesh, amplitude)
    nodes = np.array([node.frame.position for node in mesh.nodes])
    n_nodes, n_el = mesh.n_nodes, mesh.n_elements
    points = np.vstack([nodes, moved.reshape(-1, 3)])
    n_points = len(points)

    undeformed = mesh.element_nodes
    displaced = n_nodes + np.arange(4 * n_el).reshape(n_el, 4)
    cells = np.vstack([undeformed, displaced])
    n_cells = len(cells)

    flows = mech.node_flows()
    hinge = flows[HINGE_EXTRADOS] + flows[HINGE_INTRADOS]
    fields = {
        "hinge_flow": hinge,
        "in_plane_sliding": flows[IN_PLANE_SHEAR],
        "out_of_plane_sliding": flows[OUT_OF_PLANE_SHEAR],
    }

    lines: list[str] = [
        "# vtk DataFile Version 2.0",
        f"dome-limit incipient mechanism, lambda = {mech.lam:.6f}, amplitude = {amplitude:g}",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {n_points} double",
    ]
    lines.extend(f"{x:.12e} {y:.12e} {z:.12e}" for x, y, z in points)
    lines.append(f"CELLS {n_cells} {n_cells * 5}")
    lines.extend("4 " + " ".join(str(int(i)) for i in cell) for cell in cells)
    lines.append(f"CELL_TYPES {n_cells}")
    lines.extend(str(VTK_QUAD) for _ in range(n_cells))
    lines.append(f"CELL_DATA {n_cells}")
    lines.append("SCALARS configuration int 1")
    lines.append("LOOKUP_TABLE default")
    lines.extend(["0"] * n_el + ["1"] * n_el)
    lines.append(f"POINT_DATA {n_points}")
    for name, values in fields.items():
        per_point = np.concatenate([values, values[undeformed].ravel()])
        lines.append(f"SCALARS {name} double 1")
        lines.append("LOOKUP_TABLE default")
        lines.extend(f"{v:.12e}" for v in per_point)

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
