from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sp

from .errors import AssemblyError
from .geometry import MeridianGeometry, frame_field, gauss_legendre
from .loads import DEFAULT_SURFACE_POINTS, LoadCase, load_resultants_batch
from .meshing import APEX, FREE_RING, FULL, SYMMETRY_EDGE, Element, Mesh
from .models import (
    M_PHI,
    M_PHI_THETA,
    M_THETA,
    N_COMPONENTS,
    N_PHI,
    N_PHI_THETA,
    N_THETA,
    N_THETA_PHI,
    T_PHI,
    T_THETA,
)

logger = logging.getLogger(__name__)

DEFAULT_EDGE_POINTS = 8
ELEMENT_COLUMNS = 4 * N_COMPONENTS

# components odd under reflection through the xz-plane
SYMMETRY_PINNED = (N_THETA_PHI, N_PHI_THETA, T_THETA, M_PHI_THETA)
# components carried by an edge with in-plane normal +-t_phi
FREE_RING_PINNED = (N_PHI, N_THETA_PHI, T_PHI, M_PHI, M_PHI_THETA)
PINNED_COMPONENTS = {SYMMETRY_EDGE: SYMMETRY_PINNED, FREE_RING: FREE_RING_PINNED}

_ZERO_LENGTH = 1e-14


@dataclass(frozen=True)
class EdgeIntegrals:
    """Lagrange-weighted integrals along one edge.

    ``L[a, r]`` is the integral of l_r e_a (a: t_phi, e_theta); ``L_n[r]`` uses n.
    ``Lam`` and ``Lam_n`` hold the same integrals of P x e.
    """

    L: np.ndarray
    L_n: np.ndarray
    Lam: np.ndarray
    Lam_n: np.ndarray
    length: float


@dataclass(frozen=True)
class ElementOperators:
    B_t: np.ndarray
    B_r: np.ndarray


def _edge_integrals_batch(
    geom: MeridianGeometry,
    start: np.ndarray,
    end: np.ndarray,
    n_points: int,
) -> dict[str, np.ndarray]:
    v, w = gauss_legendre(n_points)
    half = 0.5 * (end - start)
    mid = 0.5 * (end + start)

    def metric(points: np.ndarray) -> np.ndarray:
        sample = geom.meridian(points[..., 0])
        shape = (-1,) + (1,) * (points.ndim - 2)
        h_phi = np.abs(half[:, 0]).reshape(shape)
        h_theta = np.abs(half[:, 1]).reshape(shape)
        return h_phi * sample.speed + h_theta * sample.r

    points = mid[:, None, :] + half[:, None, :] * v[None, :, None]
    g = metric(points)
    length = g @ w

    # arclength from the edge start to each quadrature point
    scale = 0.5 * (v + 1.0)
    sub_v = -1.0 + scale[:, None] * (v[None, :] + 1.0)
    sub_points = mid[:, None, None, :] + half[:, None, None, :] * sub_v[None, :, :, None]
    s = np.einsum("kqx,x->kq", metric(sub_points), w) * scale[None, :]

    safe = np.where(length > _ZERO_LENGTH, length, 1.0)
    ell2 = np.where(length[:, None] > _ZERO_LENGTH, s / safe[:, None], 0.5)
    lagrange = np.stack([1.0 - ell2, ell2], axis=1)

    frames = frame_field(geom, points[..., 0], points[..., 1])
    basis = np.stack([frames.t_phi, frames.e_theta], axis=1)
    moment_basis = np.cross(frames.position[:, None, :, :], basis)
    moment_normal = np.cross(frames.position, frames.n)

    wg = w[None, :] * g
    return {
        "L": np.einsum("kq,krq,kaqc->karc", wg, lagrange, basis),
        "L_n": np.einsum("kq,krq,kqc->krc", wg, lagrange, frames.n),
        "Lam": np.einsum("kq,krq,kaqc->karc", wg, lagrange, moment_basis),
        "Lam_n": np.einsum("kq,krq,kqc->krc", wg, lagrange, moment_normal),
        "length": length,
    }


def edge_integrals(
    geom: MeridianGeometry,
    element: Element,
    edge_index: int,
    n_points: int = DEFAULT_EDGE_POINTS,
) -> EdgeIntegrals:
    start, end = element.edge(edge_index)
    batch = _edge_integrals_batch(geom, np.asarray([start]), np.asarray([end]), n_points)
    return EdgeIntegrals(
        L=batch["L"][0],
        L_n=batch["L_n"][0],
        Lam=batch["Lam"][0],
        Lam_n=batch["Lam_n"][0],
        length=float(batch["length"][0]),
    )


def edge_operators_batch(
    geom: MeridianGeometry,
    params: np.ndarray,
    n_points: int = DEFAULT_EDGE_POINTS,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-edge traction operators, each of shape (E, 4, 3, 36).

    The outward in-plane normal is nu = tau x n with tau the traversal direction, so
    an edge run along +theta has nu = +t_phi and one run along +phi has nu = -e_theta.
    """
    params = np.asarray(params, dtype=float)
    n_el = params.shape[0]
    bt = np.zeros((n_el, 4, 3, ELEMENT_COLUMNS))
    br = np.zeros((n_el, 4, 3, ELEMENT_COLUMNS))

    for i in range(4):
        start, end = params[:, i], params[:, (i + 1) % 4]
        d_phi, d_theta = end[:, 0] - start[:, 0], end[:, 1] - start[:, 1]
        parallel = np.abs(d_phi) <= np.abs(d_theta)
        s_par = np.where(parallel, np.sign(d_theta), 0.0)[:, None]
        s_mer = np.where(parallel, 0.0, -np.sign(d_phi))[:, None]

        ints = _edge_integrals_batch(geom, start, end, n_points)
        for r, local in ((0, i), (1, (i + 1) % 4)):
            base = N_COMPONENTS * local
            L1, L2, Ln = ints["L"][:, 0, r], ints["L"][:, 1, r], ints["L_n"][:, r]
            G1, G2, Gn = ints["Lam"][:, 0, r], ints["Lam"][:, 1, r], ints["Lam_n"][:, r]

            # nu = +-t_phi: traction N_phi t + N_theta_phi e_theta + T_phi n
            bt[:, i, :, base + N_PHI] += s_par * L1
            bt[:, i, :, base + N_THETA_PHI] += s_par * L2
            bt[:, i, :, base + T_PHI] += s_par * Ln
            br[:, i, :, base + N_PHI] += s_par * G1
            br[:, i, :, base + N_THETA_PHI] += s_par * G2
            br[:, i, :, base + T_PHI] += s_par * Gn
            # n x (M t_phi) = M_phi e_theta - M_phi_theta t_phi
            br[:, i, :, base + M_PHI] += s_par * L2
            br[:, i, :, base + M_PHI_THETA] -= s_par * L1

            # nu = +-e_theta: traction N_phi_theta t + N_theta e_theta + T_theta n
            bt[:, i, :, base + N_PHI_THETA] += s_mer * L1
            bt[:, i, :, base + N_THETA] += s_mer * L2
            bt[:, i, :, base + T_THETA] += s_mer * Ln
            br[:, i, :, base + N_PHI_THETA] += s_mer * G1
            br[:, i, :, base + N_THETA] += s_mer * G2
            br[:, i, :, base + T_THETA] += s_mer * Gn
            # n x (M e_theta) = M_phi_theta e_theta - M_theta t_phi
            br[:, i, :, base + M_PHI_THETA] += s_mer * L2
            br[:, i, :, base + M_THETA] -= s_mer * L1

    return bt, br


def element_operators_batch(
    geom: MeridianGeometry,
    params: np.ndarray,
    n_points: int = DEFAULT_EDGE_POINTS,
) -> tuple[np.ndarray, np.ndarray]:
    bt, br = edge_operators_batch(geom, params, n_points)
    return bt.sum(axis=1), br.sum(axis=1)


def element_operators(geom: MeridianGeometry, element: Element, n_points: int = DEFAULT_EDGE_POINTS) -> ElementOperators:
    bt, br = element_operators_batch(geom, np.asarray([element.params]), n_points)
    return ElementOperators(B_t=bt[0], B_r=br[0])


@dataclass(frozen=True)
class StructuralSystem:
    B: sp.csr_matrix
    f_dead: np.ndarray
    f_live: np.ndarray
    bc_rows: sp.csr_matrix
    bc_index: np.ndarray
    n_nodes: int
    n_elements: int

    @property
    def n_unknowns(self) -> int:
        return N_COMPONENTS * self.n_nodes

    @property
    def equality_matrix(self) -> sp.csr_matrix:
        return sp.vstack([self.B, self.bc_rows], format="csr")

    def residual(self, x: np.ndarray, lam: float) -> np.ndarray:
        return self.B @ x + self.f_dead + lam * self.f_live


def _check_tags(mesh: Mesh) -> None:
    for node in mesh.nodes:
        if APEX in node.tags and FREE_RING in node.tags:
            raise AssemblyError(f"node {node.index} tagged both apex and free ring")
        if mesh.model == FULL and SYMMETRY_EDGE in node.tags:
            raise AssemblyError(f"node {node.index} carries a symmetry tag in a full model")
        if APEX in node.tags and node.frame.r > 1e-9 * mesh.geometry.R:
            raise AssemblyError(f"apex node {node.index} is off the axis")


def _boundary_columns(mesh: Mesh) -> np.ndarray:
    cols: list[int] = []
    for node in mesh.nodes:
        pinned: set[int] = set()
        for tag, comps in PINNED_COMPONENTS.items():
            if tag in node.tags:
                pinned.update(comps)
        cols.extend(N_COMPONENTS * node.index + c for c in sorted(pinned))
    return np.asarray(cols, dtype=np.int64)


def assemble_structural(
    mesh: Mesh,
    geom: MeridianGeometry,
    load: LoadCase,
    surface_points: int = DEFAULT_SURFACE_POINTS,
    edge_points: int = DEFAULT_EDGE_POINTS,
) -> StructuralSystem:
    if mesh.geometry != geom:
        raise AssemblyError("mesh was built on a different meridian")
    _check_tags(mesh)

    params = mesh.element_params
    bt, br = element_operators_batch(geom, params, edge_points)
    blocks = np.concatenate([bt, br], axis=1)

    n_el, n_cols = mesh.n_elements, N_COMPONENTS * mesh.n_nodes
    el_nodes = mesh.element_nodes
    cols = (N_COMPONENTS * el_nodes[:, :, None] + np.arange(N_COMPONENTS)[None, None, :]).reshape(n_el, ELEMENT_COLUMNS)
    rows = 6 * np.arange(n_el)[:, None] + np.arange(6)[None, :]
    B = sp.coo_matrix(
        (
            blocks.ravel(),
            (np.broadcast_to(rows[:, :, None], blocks.shape).ravel(), np.broadcast_to(cols[:, None, :], blocks.shape).ravel()),
        ),
        shape=(6 * n_el, n_cols),
    ).tocsr()
    B.eliminate_zeros()

    resultants = load_resultants_batch(geom, load, params, surface_points)
    bc_index = _boundary_columns(mesh)
    bc_rows = sp.csr_matrix(
        (np.ones(len(bc_index)), (np.arange(len(bc_index)), bc_index)),
        shape=(len(bc_index), n_cols),
    )
    logger.debug("assembled B %s with %d nonzeros, %d boundary rows", B.shape, B.nnz, len(bc_index))
    return StructuralSystem(
        B=B,
        f_dead=resultants.dead.ravel(),
        f_live=resultants.live.ravel(),
        bc_rows=bc_rows,
        bc_index=bc_index,
        n_nodes=mesh.n_nodes,
        n_elements=n_el,
    )


def write_matrix_market(system: StructuralSystem, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    scipy.io.mmwrite(str(path), system.B, comment="element equilibrium operator B (rows: 3 forces + 3 moments per element)")
    return path
