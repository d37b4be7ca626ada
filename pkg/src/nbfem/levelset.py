"""Analytic signed-distance geometry for the built-in surfaces.

Every routine is vectorised over a trailing coordinate axis: ``x`` may be a
single point of shape ``(dim,)`` or a batch ``(..., dim)``.  The sign
convention is negative inside the surface and positive outside.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import InadmissibleBand, OutsideBand

# relative slack on the reach 1/max|kappa_i|
BAND_SLACK = 1e-9


class CoefficientMode(enum.Enum):
    EXACT = "exact"
    ZERO = "zero"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        return cls(str(value).lower())


@dataclass(frozen=True)
class Circle:
    radius: float = 1.0

    dim = 2

    @property
    def curvature_bound(self) -> float:
        return 1.0 / self.radius

    @property
    def reach(self) -> float:
        return self.radius

    @property
    def measure(self) -> float:
        return 2.0 * np.pi * self.radius

    def phi(self, x):
        return np.linalg.norm(x, axis=-1) - self.radius

    def grad(self, x):
        return x / np.linalg.norm(x, axis=-1)[..., None]

    def hess(self, x):
        return _radial_hessian(x)


@dataclass(frozen=True)
class Sphere:
    radius: float = 1.0

    dim = 3

    @property
    def curvature_bound(self) -> float:
        return 2.0 / self.radius

    @property
    def reach(self) -> float:
        return self.radius

    @property
    def measure(self) -> float:
        return 4.0 * np.pi * self.radius**2

    def phi(self, x):
        return np.linalg.norm(x, axis=-1) - self.radius

    def grad(self, x):
        return x / np.linalg.norm(x, axis=-1)[..., None]

    def hess(self, x):
        return _radial_hessian(x)


@dataclass(frozen=True)
class Torus:
    """Torus around the x3 axis with tube centre-line radius ``major``."""

    major: float = 1.0
    minor: float = 0.6

    dim = 3

    @property
    def curvature_bound(self) -> float:
        return 1.0 / self.minor + 1.0 / (self.major - self.minor)

    @property
    def reach(self) -> float:
        # 1 / max |kappa_i|: tube radius or distance of the inner equator to the axis
        return min(self.minor, self.major - self.minor)

    @property
    def measure(self) -> float:
        return 4.0 * np.pi**2 * self.major * self.minor

    def _tube(self, x):
        rho = np.hypot(x[..., 0], x[..., 1])
        e_r = np.zeros_like(x)
        e_r[..., 0] = x[..., 0] / rho
        e_r[..., 1] = x[..., 1] / rho
        q = x - self.major * e_r
        s = np.linalg.norm(q, axis=-1)
        return rho, e_r, q, s

    def phi(self, x):
        rho = np.hypot(x[..., 0], x[..., 1])
        return np.hypot(rho - self.major, x[..., 2]) - self.minor

    def grad(self, x):
        _, _, q, s = self._tube(x)
        return q / s[..., None]

    def hess(self, x):
        rho, e_r, q, s = self._tube(x)
        n = q / s[..., None]
        e_phi = np.zeros_like(x)
        e_phi[..., 0] = -e_r[..., 1]
        e_phi[..., 1] = e_r[..., 0]
        eye = np.eye(3)
        proj = eye - n[..., :, None] * n[..., None, :]
        ring = (self.major / rho)[..., None, None] * e_phi[..., :, None] * e_phi[..., None, :]
        return (proj - ring) / s[..., None, None]

    def angles(self, x):
        """Return (toroidal angle, poloidal angle) of points, matching the
        parametrisation x = R(cos a, sin a, 0) + rho(cos a cos b, sin a cos b, sin b)."""
        a = np.arctan2(x[..., 1], x[..., 0])
        rho = np.hypot(x[..., 0], x[..., 1])
        b = np.arctan2(x[..., 2], rho - self.major)
        return a, b


def _radial_hessian(x):
    r = np.linalg.norm(x, axis=-1)
    n = x / r[..., None]
    dim = x.shape[-1]
    proj = np.eye(dim) - n[..., :, None] * n[..., None, :]
    return proj / r[..., None, None]


SurfaceField = Circle | Sphere | Torus


def admissible_radius(s) -> float:
    """Largest |phi| where I - phi H stays invertible: 1 / max |kappa_i|."""
    return s.reach


def _check_band(s, x):
    x = np.asarray(x, dtype=float)
    phi = s.phi(x)
    limit = admissible_radius(s) * (1.0 + BAND_SLACK)
    bad = ~(np.abs(phi) <= limit)
    if np.any(bad):
        worst = np.max(np.abs(np.where(np.isfinite(phi), phi, np.inf)))
        raise OutsideBand(
            f"|phi|={worst:.6g} exceeds admissible radius {limit:.6g} "
            f"(1/max principal curvature)"
        )
    with np.errstate(invalid="ignore", divide="ignore"):
        n = s.grad(x)
    if not np.all(np.isfinite(n)):
        raise OutsideBand("point on the medial axis, normal undefined")
    return x, phi


def signed_distance(s, x):
    return s.phi(np.asarray(x, dtype=float))


def normal(s, x):
    x, _ = _check_band(s, x)
    return s.grad(x)


def hessian(s, x):
    x, _ = _check_band(s, x)
    return s.hess(x)


def closest_point(s, x):
    """Foot point p(x) = x - phi(x) n(x)."""
    x, phi = _check_band(s, x)
    return x - phi[..., None] * s.grad(x)


def normal_extend(g, s, x):
    """Value of the surface function ``g`` transported along normals: g(p(x))."""
    return g(closest_point(s, x))


def coefficient(s, mode, x):
    """Diffusion tensor A = mu (I - phi H)^-2 and scalar mu = det(I - phi H).

    In ZERO mode the discrete Hessian vanishes, so (I, 1) is returned.
    """
    mode = CoefficientMode.parse(mode)
    x, phi = _check_band(s, x)
    dim = x.shape[-1]
    eye = np.eye(dim)
    if mode is CoefficientMode.ZERO:
        return np.broadcast_to(eye, x.shape[:-1] + (dim, dim)).copy(), np.ones(x.shape[:-1])
    m = eye - phi[..., None, None] * s.hess(x)
    mu = np.linalg.det(m)
    minv = np.linalg.inv(m)
    a = mu[..., None, None] * (minv @ minv)
    return a, mu


def area_factor(s, x):
    """mu(x) = det(I - phi H); maps level-set area elements back onto the surface."""
    x, phi = _check_band(s, x)
    dim = x.shape[-1]
    return np.linalg.det(np.eye(dim) - phi[..., None, None] * s.hess(x))


def band_admissible(s, d) -> bool:
    return bool(d * s.curvature_bound <= 0.5)


@dataclass(frozen=True)
class BandSpec:
    gamma: float
    d: float

    @classmethod
    def for_mesh(cls, s, gamma: float, h: float) -> "BandSpec":
        if gamma <= 0:
            raise InadmissibleBand(f"band factor gamma must be positive, got {gamma}")
        d = gamma * h
        if not band_admissible(s, d):
            raise InadmissibleBand(
                f"band half-width d={d:.6g} violates d*curvature_bound <= 1/2 "
                f"(curvature_bound={s.curvature_bound:.6g}, max d={0.5 / s.curvature_bound:.6g})"
            )
        return cls(gamma=gamma, d=d)
