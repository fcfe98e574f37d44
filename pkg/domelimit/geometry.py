from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.typing import ArrayLike
from scipy.interpolate import PchipInterpolator

from .errors import GeometryDomainError

logger = logging.getLogger(__name__)

SPHERE = "sphere"
ELLIPSOID = "ellipsoid"
TABULATED = "tabulated"
GEOMETRY_KINDS = (SPHERE, ELLIPSOID, TABULATED)

K_AXIS = np.array([0.0, 0.0, 1.0])

# relative slack on the meridian range and the apex radius
_RANGE_SLACK = 1e-12
_APEX_TOL = 1e-12
# central-difference step for tabulated meridians, relative to the parameter span
_TABLE_FD_STEP = 1e-5


@dataclass(frozen=True)
class MeridianGeometry:
    """Generatrix of an axisymmetric mid-surface.

    The meridian parameter ``phi`` is the colatitude for the sphere, the eccentric
    anomaly for the ellipsoid (r = R sin u, z = b cos u) and the chord length for
    tabulated samples.
    """

    kind: str
    R: float
    b: float | None = None
    phi_range: tuple[float, float] = (0.0, math.pi / 2)
    table_r: tuple[float, ...] = ()
    table_z: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in GEOMETRY_KINDS:
            raise GeometryDomainError(f"unknown meridian kind: {self.kind!r}")
        if not self.R > 0:
            raise GeometryDomainError(f"R must be positive, got {self.R}")
        if self.kind == ELLIPSOID and (self.b is None or not self.b > 0):
            raise GeometryDomainError("ellipsoid needs a positive rise semi-diameter b")
        phi_in, phi_fin = self.phi_range
        if not 0.0 <= phi_in < phi_fin:
            raise GeometryDomainError(f"invalid meridian range {self.phi_range}")
        if self.kind in (SPHERE, ELLIPSOID) and phi_fin >= math.pi:
            raise GeometryDomainError("meridian must stop before the bottom pole")
        if self.kind == TABULATED:
            if len(self.table_r) != len(self.table_z) or len(self.table_r) < 4:
                raise GeometryDomainError("tabulated meridian needs at least 4 (r, z) samples")
            if min(self.table_r) < 0:
                raise GeometryDomainError("tabulated meridian has negative radius")

    @classmethod
    def sphere(cls, radius: float = 1.0, half_embrace: float = math.pi / 2, opening: float = 0.0) -> MeridianGeometry:
        return cls(kind=SPHERE, R=float(radius), b=float(radius), phi_range=(float(opening), float(half_embrace)))

    @classmethod
    def ellipsoid(cls, radius: float, rise: float, opening: float = 0.0) -> MeridianGeometry:
        return cls(kind=ELLIPSOID, R=float(radius), b=float(rise), phi_range=(float(opening), math.pi / 2))

    @classmethod
    def tabulated(cls, r: ArrayLike, z: ArrayLike) -> MeridianGeometry:
        """Experimental: meridian through sampled points ordered from the top down."""
        r_arr = np.asarray(r, dtype=float)
        z_arr = np.asarray(z, dtype=float)
        chord = np.hypot(np.diff(r_arr), np.diff(z_arr))
        if np.any(chord <= 0):
            raise GeometryDomainError("tabulated meridian has repeated samples")
        logger.warning("tabulated meridians are experimental (finite-difference curvature)")
        span = float(chord.sum())
        return cls(
            kind=TABULATED,
            R=float(r_arr.max()),
            phi_range=(0.0, span),
            table_r=tuple(r_arr.tolist()),
            table_z=tuple(z_arr.tolist()),
        )

    @property
    def phi_in(self) -> float:
        return self.phi_range[0]

    @property
    def phi_fin(self) -> float:
        return self.phi_range[1]

    @property
    def closed_apex(self) -> bool:
        return self.phi_in == 0.0 and abs(float(self.meridian(0.0).r)) <= _APEX_TOL * self.R

    @cached_property
    def _table_splines(self) -> tuple[PchipInterpolator, PchipInterpolator]:
        r_arr = np.asarray(self.table_r)
        z_arr = np.asarray(self.table_z)
        s = np.concatenate([[0.0], np.cumsum(np.hypot(np.diff(r_arr), np.diff(z_arr)))])
        return PchipInterpolator(s, r_arr), PchipInterpolator(s, z_arr)

    def check_range(self, phi: ArrayLike) -> np.ndarray:
        phi_arr = np.asarray(phi, dtype=float)
        slack = _RANGE_SLACK * max(1.0, abs(self.phi_fin))
        if np.any(phi_arr < self.phi_in - slack) or np.any(phi_arr > self.phi_fin + slack):
            raise GeometryDomainError(f"phi outside meridian range {self.phi_range}")
        return np.clip(phi_arr, self.phi_in, self.phi_fin)

    def meridian(self, phi: ArrayLike) -> MeridianSample:
        phi_arr = self.check_range(phi)
        if self.kind == TABULATED:
            return self._tabulated_sample(phi_arr)
        b = float(self.b if self.b is not None else self.R)
        s, c = np.sin(phi_arr), np.cos(phi_arr)
        return MeridianSample(
            phi=phi_arr,
            r=self.R * s,
            z=b * c,
            dr=self.R * c,
            dz=-b * s,
            d2r=-self.R * s,
            d2z=-b * c,
        )

    def _tabulated_sample(self, phi: np.ndarray) -> MeridianSample:
        r_spl, z_spl = self._table_splines
        dr_spl, dz_spl = r_spl.derivative(), z_spl.derivative()
        h = _TABLE_FD_STEP * (self.phi_fin - self.phi_in)
        lo = np.clip(phi - h, self.phi_in, self.phi_fin)
        hi = np.clip(phi + h, self.phi_in, self.phi_fin)
        return MeridianSample(
            phi=phi,
            r=np.maximum(r_spl(phi), 0.0),
            z=z_spl(phi),
            dr=dr_spl(phi),
            dz=dz_spl(phi),
            d2r=(dr_spl(hi) - dr_spl(lo)) / (hi - lo),
            d2z=(dz_spl(hi) - dz_spl(lo)) / (hi - lo),
        )


@dataclass(frozen=True)
class MeridianSample:
    phi: np.ndarray
    r: np.ndarray
    z: np.ndarray
    dr: np.ndarray
    dz: np.ndarray
    d2r: np.ndarray
    d2z: np.ndarray

    @property
    def speed(self) -> np.ndarray:
        return np.hypot(self.dr, self.dz)

    @property
    def sigma(self) -> np.ndarray:
        return np.arctan2(-self.dz, self.dr)

    @property
    def rho_c(self) -> np.ndarray:
        return self.speed**3 / (self.dz * self.d2r - self.dr * self.d2z)

    @property
    def sin_sigma_over_r(self) -> np.ndarray:
        # apex limit: sin(sigma)/r -> 1/rho_c
        r = self.r
        safe_r = np.where(r > _APEX_TOL, r, 1.0)
        return np.where(r > _APEX_TOL, -self.dz / (self.speed * safe_r), 1.0 / self.rho_c)


@dataclass(frozen=True)
class SurfaceFrame:
    position: np.ndarray
    t_phi: np.ndarray
    e_theta: np.ndarray
    n: np.ndarray
    r: float
    rho_c: float
    sigma: float
    speed: float


@dataclass(frozen=True)
class FrameField:
    """Vectorized frames: vector fields carry a trailing axis of length 3."""

    position: np.ndarray
    t_phi: np.ndarray
    e_theta: np.ndarray
    n: np.ndarray
    r: np.ndarray
    rho_c: np.ndarray
    sigma: np.ndarray
    speed: np.ndarray
    sin_sigma_over_r: np.ndarray


def frame_field(geom: MeridianGeometry, phi: ArrayLike, theta: ArrayLike) -> FrameField:
    phi_arr, theta_arr = np.broadcast_arrays(np.asarray(phi, dtype=float), np.asarray(theta, dtype=float))
    sample = geom.meridian(phi_arr)
    cos_t, sin_t = np.cos(theta_arr), np.sin(theta_arr)
    zero = np.zeros_like(cos_t)
    e_r = np.stack([cos_t, sin_t, zero], axis=-1)
    e_theta = np.stack([-sin_t, cos_t, zero], axis=-1)
    k = np.broadcast_to(K_AXIS, e_r.shape)

    speed = sample.speed
    dr = (sample.dr / speed)[..., None]
    dz = (sample.dz / speed)[..., None]
    return FrameField(
        position=sample.r[..., None] * e_r + sample.z[..., None] * k,
        t_phi=dr * e_r + dz * k,
        e_theta=e_theta,
        n=-dz * e_r + dr * k,
        r=sample.r,
        rho_c=sample.rho_c,
        sigma=sample.sigma,
        speed=speed,
        sin_sigma_over_r=sample.sin_sigma_over_r,
    )


def meridian_frame(geom: MeridianGeometry, phi: float, theta: float) -> SurfaceFrame:
    if not -_RANGE_SLACK <= theta <= 2.0 * math.pi * (1.0 + _RANGE_SLACK):
        raise GeometryDomainError(f"theta outside [0, 2 pi]: {theta}")
    field = frame_field(geom, phi, theta)
    return SurfaceFrame(
        position=field.position,
        t_phi=field.t_phi,
        e_theta=field.e_theta,
        n=field.n,
        r=float(field.r),
        rho_c=float(field.rho_c),
        sigma=float(field.sigma),
        speed=float(field.speed),
    )


@dataclass(frozen=True)
class JacobianFactors:
    j0: float
    rho_c: float
    sin_sigma_over_r: float

    def jn(self, zeta: ArrayLike) -> np.ndarray | float:
        zeta_arr = np.asarray(zeta, dtype=float)
        value = (1.0 + zeta_arr / self.rho_c) * (1.0 + zeta_arr * self.sin_sigma_over_r)
        return float(value) if value.ndim == 0 else value


def jacobian_factors(geom: MeridianGeometry, phi: float) -> JacobianFactors:
    sample = geom.meridian(phi)
    return JacobianFactors(
        j0=float(sample.r * sample.speed),
        rho_c=float(sample.rho_c),
        sin_sigma_over_r=float(sample.sin_sigma_over_r),
    )


def gauss_legendre(n_points: int) -> tuple[np.ndarray, np.ndarray]:
    if n_points < 1:
        raise ValueError(f"quadrature needs at least one point, got {n_points}")
    return np.polynomial.legendre.leggauss(n_points)
