from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Any

import numpy as np

# nodal unknown layout
STRESS_COMPONENTS = (
    "N_phi",
    "N_theta_phi",
    "N_phi_theta",
    "N_theta",
    "T_phi",
    "T_theta",
    "M_phi",
    "M_phi_theta",
    "M_theta",
)
N_PHI, N_THETA_PHI, N_PHI_THETA, N_THETA, T_PHI, T_THETA, M_PHI, M_PHI_THETA, M_THETA = range(9)
N_COMPONENTS = len(STRESS_COMPONENTS)


@dataclass
class NodalStress:
    """Shell stress resultants at a node in the local basis (t_phi, e_theta, n).

    N maps t_phi to N_phi t_phi + N_theta_phi e_theta and e_theta to
    N_phi_theta t_phi + N_theta e_theta; M is symmetric.
    """

    N_phi: float = 0.0
    N_theta_phi: float = 0.0
    N_phi_theta: float = 0.0
    N_theta: float = 0.0
    T_phi: float = 0.0
    T_theta: float = 0.0
    M_phi: float = 0.0
    M_phi_theta: float = 0.0
    M_theta: float = 0.0

    @classmethod
    def from_vector(cls, values: np.ndarray) -> NodalStress:
        arr = np.asarray(values, dtype=float).reshape(N_COMPONENTS)
        return cls(**{name: float(v) for name, v in zip(STRESS_COMPONENTS, arr)})

    def to_vector(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in STRESS_COMPONENTS])

    @property
    def membrane(self) -> np.ndarray:
        return np.array([[self.N_phi, self.N_phi_theta], [self.N_theta_phi, self.N_theta]])

    @property
    def shear(self) -> np.ndarray:
        return np.array([self.T_phi, self.T_theta])

    @property
    def bending(self) -> np.ndarray:
        return np.array([[self.M_phi, self.M_phi_theta], [self.M_phi_theta, self.M_theta]])

    def unilateral_matrix(self, thickness: float, sign: int) -> np.ndarray:
        """sign * M - sym(N) t / 2; admissible when positive semidefinite."""
        n_sym = 0.5 * (self.membrane + self.membrane.T)
        return sign * self.bending - 0.5 * thickness * n_sym

    def friction_margin(self, mu: float, alpha: float) -> float:
        """-mu (N n.n) minus the shear traction magnitude on the plane of normal angle alpha."""
        normal = np.array([np.cos(alpha), np.sin(alpha)])
        tangent = np.array([-np.sin(alpha), np.cos(alpha)])
        traction = self.membrane @ normal
        shear = np.hypot(tangent @ traction, self.shear @ normal)
        return float(-mu * (normal @ traction) - shear)

    def to_dict(self) -> dict[str, float]:
        return asdict(self)


@dataclass
class StudyRow:
    series: str
    variable: str
    value: float
    lam: float | None
    status: str

    @property
    def stable(self) -> bool:
        return self.status == "optimal" and self.lam is not None

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)
