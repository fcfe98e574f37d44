from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError
from .meshing import Mesh
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

ROTATED = "rotated"
STANDARD = "standard"
SQRT2 = math.sqrt(2.0)


class FrictionMode(str, Enum):
    COULOMB = "coulomb"
    NOT_ENFORCED = "not_enforced"
    IN_PLANE_ONLY = "in_plane_only"
    OUT_OF_PLANE_ONLY = "out_of_plane_only"

    @property
    def needs_mu(self) -> bool:
        return self is not FrictionMode.NOT_ENFORCED


@dataclass(frozen=True)
class UnilateralMatrices:
    A_plus: np.ndarray
    A_minus: np.ndarray


@dataclass(frozen=True)
class FrictionMatrices:
    angles: np.ndarray
    F: np.ndarray  # (n_alpha, 3, 9)

    @property
    def n_alpha(self) -> int:
        return len(self.angles)


@dataclass(frozen=True)
class ConeConstraint:
    node: int
    matrix: np.ndarray
    kind: str
    label: str


def unilateral_matrices(t: float) -> UnilateralMatrices:
    if not t > 0:
        raise ConfigurationError(f"thickness must be positive, got {t}")

    def build(sign: float) -> np.ndarray:
        a = np.zeros((3, N_COMPONENTS))
        a[0, N_PHI], a[0, M_PHI] = -t / 2.0, sign
        a[1, N_THETA], a[1, M_THETA] = -t / 2.0, sign
        a[2, N_THETA_PHI] = a[2, N_PHI_THETA] = -SQRT2 * t / 4.0
        a[2, M_PHI_THETA] = sign * SQRT2
        return a

    return UnilateralMatrices(A_plus=build(1.0), A_minus=build(-1.0))


def friction_angles(n_alpha: int) -> np.ndarray:
    # half-open grid on [0, pi): the condition is even in the plane normal
    return np.arange(n_alpha) * math.pi / n_alpha


def friction_matrices(mu: float | None, n_alpha: int, mode: FrictionMode | str) -> FrictionMatrices:
    mode = FrictionMode(mode)
    if mode is FrictionMode.NOT_ENFORCED:
        return FrictionMatrices(angles=np.zeros(0), F=np.zeros((0, 3, N_COMPONENTS)))
    if mu is None or not mu > 0:
        raise ConfigurationError(f"friction coefficient must be positive for mode {mode.value}, got {mu}")
    if n_alpha < 2:
        raise ConfigurationError(f"need at least 2 friction directions, got {n_alpha}")

    angles = friction_angles(n_alpha)
    c, s = np.cos(angles), np.sin(angles)
    F = np.zeros((n_alpha, 3, N_COMPONENTS))
    F[:, 0, N_PHI] = -mu * c**2
    F[:, 0, N_THETA_PHI] = -mu * s * c
    F[:, 0, N_PHI_THETA] = -mu * s * c
    F[:, 0, N_THETA] = -mu * s**2
    if mode is not FrictionMode.OUT_OF_PLANE_ONLY:
        F[:, 1, N_PHI] = -s * c
        F[:, 1, N_THETA_PHI] = c**2
        F[:, 1, N_PHI_THETA] = -(s**2)
        F[:, 1, N_THETA] = s * c
    if mode is not FrictionMode.IN_PLANE_ONLY:
        F[:, 2, T_PHI] = c
        F[:, 2, T_THETA] = s
    return FrictionMatrices(angles=angles, F=F)


def build_cone_constraints(
    mesh: Mesh,
    t: float,
    mu: float | None,
    n_alpha: int,
    mode: FrictionMode | str,
) -> list[ConeConstraint]:
    uni = unilateral_matrices(t)
    fric = friction_matrices(mu, n_alpha, mode)
    cones: list[ConeConstraint] = []
    for node in mesh.nodes:
        cones.append(ConeConstraint(node.index, uni.A_plus, ROTATED, "plus"))
        cones.append(ConeConstraint(node.index, uni.A_minus, ROTATED, "minus"))
        for j in range(fric.n_alpha):
            cones.append(ConeConstraint(node.index, fric.F[j], STANDARD, f"alpha_{j}"))
    return cones


@dataclass(frozen=True)
class ConeBlocks:
    """Stacked cone rows; cone k of a family occupies rows 3k..3k+2.

    Rotated cones are ordered node-major as (plus, minus); standard cones node-major
    over the friction angles.
    """

    rotated: sp.csr_matrix
    standard: sp.csr_matrix
    n_nodes: int
    n_alpha: int
    angles: np.ndarray

    @property
    def n_rotated(self) -> int:
        return self.rotated.shape[0] // 3

    @property
    def n_standard(self) -> int:
        return self.standard.shape[0] // 3

    @property
    def n_cones(self) -> int:
        return self.n_rotated + self.n_standard


def cone_blocks(
    n_nodes: int,
    t: float,
    mu: float | None,
    n_alpha: int,
    mode: FrictionMode | str,
) -> ConeBlocks:
    uni = unilateral_matrices(t)
    fric = friction_matrices(mu, n_alpha, mode)
    eye = sp.identity(n_nodes, format="csr")
    rotated = sp.kron(eye, np.vstack([uni.A_plus, uni.A_minus]), format="csr")
    if fric.n_alpha:
        standard = sp.kron(eye, fric.F.reshape(3 * fric.n_alpha, N_COMPONENTS), format="csr")
    else:
        standard = sp.csr_matrix((0, N_COMPONENTS * n_nodes))
    rotated.eliminate_zeros()
    standard.eliminate_zeros()
    logger.debug("cones: %d rotated, %d standard", rotated.shape[0] // 3, standard.shape[0] // 3)
    return ConeBlocks(rotated=rotated, standard=standard, n_nodes=n_nodes, n_alpha=fric.n_alpha, angles=fric.angles)


def rotated_margin(xi: np.ndarray) -> np.ndarray:
    """Smallest eigenvalue of [[x1, x3/sqrt2], [x3/sqrt2, x2]]; >= 0 inside K_r."""
    xi = np.asarray(xi, dtype=float)
    return 0.5 * (xi[..., 0] + xi[..., 1] - np.hypot(xi[..., 0] - xi[..., 1], SQRT2 * xi[..., 2]))


def standard_margin(xi: np.ndarray) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    return xi[..., 0] - np.hypot(xi[..., 1], xi[..., 2])
