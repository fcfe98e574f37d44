from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike

from .errors import ConfigurationError
from .geometry import K_AXIS, MeridianGeometry, frame_field, gauss_legendre
from .meshing import Element

logger = logging.getLogger(__name__)

DEFAULT_SURFACE_POINTS = 4


@dataclass(frozen=True)
class LoadCase:
    gamma: float
    live_dir: tuple[float, float, float]
    thickness: float

    def __post_init__(self) -> None:
        d = np.asarray(self.live_dir, dtype=float)
        if d.shape != (3,):
            raise ConfigurationError("live direction must be a 3-vector")
        if not self.gamma > 0:
            raise ConfigurationError(f"unit weight must be positive, got {self.gamma}")
        if not self.thickness > 0:
            raise ConfigurationError(f"thickness must be positive, got {self.thickness}")
        if abs(d[2]) > 1e-12 or abs(np.linalg.norm(d) - 1.0) > 1e-9:
            raise ConfigurationError(f"live direction must be a horizontal unit vector, got {self.live_dir}")

    @classmethod
    def horizontal(cls, gamma: float, direction: Sequence[float], thickness: float) -> LoadCase:
        d = np.asarray(direction, dtype=float)
        norm = float(np.linalg.norm(d))
        if d.shape != (3,) or norm == 0.0:
            raise ConfigurationError("live direction must be a nonzero 3-vector")
        d = d / norm
        return cls(gamma=float(gamma), live_dir=(float(d[0]), float(d[1]), float(d[2])), thickness=float(thickness))

    @property
    def direction(self) -> np.ndarray:
        return np.asarray(self.live_dir, dtype=float)


@dataclass(frozen=True)
class SurfaceLoadDensity:
    f_c: np.ndarray | float
    c_c: np.ndarray | float


def _densities(rho_c: np.ndarray, ssr: np.ndarray, load: LoadCase) -> tuple[np.ndarray, np.ndarray]:
    t, gamma = load.thickness, load.gamma
    f_c = (1.0 + t**2 / (12.0 * rho_c) * ssr) * gamma * t
    c_c = (1.0 / rho_c + ssr) * gamma * t**3 / 12.0
    return f_c, c_c


def surface_load_density(geom: MeridianGeometry, load: LoadCase, phi: ArrayLike) -> SurfaceLoadDensity:
    sample = geom.meridian(phi)
    f_c, c_c = _densities(sample.rho_c, sample.sin_sigma_over_r, load)
    if np.ndim(f_c) == 0:
        return SurfaceLoadDensity(f_c=float(f_c), c_c=float(c_c))
    return SurfaceLoadDensity(f_c=f_c, c_c=c_c)


@dataclass(frozen=True)
class SurfaceLoadField:
    """Dead/live surface force and couple densities at given points (trailing axis 3)."""

    f_dead: np.ndarray
    f_live: np.ndarray
    c_dead: np.ndarray
    c_live: np.ndarray


def surface_load_field(geom: MeridianGeometry, load: LoadCase, phi: ArrayLike, theta: ArrayLike) -> SurfaceLoadField:
    frames = frame_field(geom, phi, theta)
    f_c, c_c = _densities(frames.rho_c, frames.sin_sigma_over_r, load)
    d = np.broadcast_to(load.direction, frames.n.shape)
    down = np.broadcast_to(-K_AXIS, frames.n.shape)
    return SurfaceLoadField(
        f_dead=f_c[..., None] * down,
        f_live=f_c[..., None] * d,
        c_dead=c_c[..., None] * np.cross(frames.n, down),
        c_live=c_c[..., None] * np.cross(frames.n, d),
    )


@dataclass(frozen=True)
class ElementLoadResultants:
    f_d: np.ndarray
    f_l: np.ndarray
    c_d: np.ndarray
    c_l: np.ndarray

    @property
    def dead(self) -> np.ndarray:
        return np.concatenate([self.f_d, self.c_d], axis=-1)

    @property
    def live(self) -> np.ndarray:
        return np.concatenate([self.f_l, self.c_l], axis=-1)


def load_resultants_batch(
    geom: MeridianGeometry,
    load: LoadCase,
    params: np.ndarray,
    n_points: int = DEFAULT_SURFACE_POINTS,
) -> ElementLoadResultants:
    """Resultants for a stack of elements; ``params`` has shape (E, 4, 2)."""
    params = np.asarray(params, dtype=float)
    phi1, phi2 = params[:, :, 0].min(axis=1), params[:, :, 0].max(axis=1)
    th1, th2 = params[:, :, 1].min(axis=1), params[:, :, 1].max(axis=1)
    xi, w = gauss_legendre(n_points)

    # (E, q, q) tensor-product points on the parent square
    phi = 0.5 * (phi1 + phi2)[:, None, None] + 0.5 * (phi2 - phi1)[:, None, None] * xi[None, :, None]
    theta = 0.5 * (th1 + th2)[:, None, None] + 0.5 * (th2 - th1)[:, None, None] * xi[None, None, :]
    phi, theta = np.broadcast_arrays(phi, theta)

    frames = frame_field(geom, phi, theta)
    loads = surface_load_field(geom, load, phi, theta)
    j0 = frames.r * frames.speed
    ref = 0.25 * (phi2 - phi1) * (th2 - th1)
    weight = (w[:, None] * w[None, :])[None, :, :] * j0 * ref[:, None, None]

    def integrate(values: np.ndarray) -> np.ndarray:
        return np.einsum("eij,eijk->ek", weight, values)

    pos = frames.position
    return ElementLoadResultants(
        f_d=integrate(loads.f_dead),
        f_l=integrate(loads.f_live),
        c_d=integrate(np.cross(pos, loads.f_dead) + loads.c_dead),
        c_l=integrate(np.cross(pos, loads.f_live) + loads.c_live),
    )


def element_load_resultants(
    geom: MeridianGeometry,
    load: LoadCase,
    element: Element,
    n_points: int = DEFAULT_SURFACE_POINTS,
) -> ElementLoadResultants:
    batch = load_resultants_batch(geom, load, np.asarray([element.params]), n_points)
    return ElementLoadResultants(f_d=batch.f_d[0], f_l=batch.f_l[0], c_d=batch.c_d[0], c_l=batch.c_l[0])


def spherical_shell_volume(
    radius: float,
    thickness: float,
    half_embrace: float,
    opening: float = 0.0,
    theta_span: float = 2.0 * math.pi,
) -> float:
    """Exact volume of a spherical shell zone of uniform normal thickness."""
    zone = math.cos(opening) - math.cos(half_embrace)
    return theta_span * zone * (radius**2 * thickness + thickness**3 / 12.0)
