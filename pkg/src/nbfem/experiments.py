"""Manufactured surface problems bundled as named presets.

Each preset carries the exact solution ``u``, its surface gradient
``grad_u`` and the right-hand side ``f`` of  -lap_Gamma u + alpha u = f,
all as functions of points on the surface.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError, Unsupported
from .levelset import Circle, CoefficientMode, Sphere, Torus
from .mesh import H0


@dataclass(frozen=True)
class Preset:
    name: str
    surface: object
    alpha: float
    u: Callable
    grad_u: Callable
    f: Callable
    box: tuple = (-2.0, 2.0)
    gamma: float = 1.0
    order: int = 1
    geometry_order: int = 1
    mode: CoefficientMode = CoefficientMode.EXACT
    levels: tuple = (0, 3)
    cg_iter_scale: float = 1.0
    notes: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.surface.dim

    def subcell_size(self, h: float) -> float:
        """Sub-triangulation target h' = h^q / h0^(q-1) for geometry order q."""
        q = self.geometry_order
        return h**q / H0 ** (q - 1)


def _circle_data(radius=1.0, k=5):
    def theta(y):
        return np.arctan2(y[..., 1], y[..., 0])

    def u(y):
        return np.cos(k * theta(y))

    def grad_u(y):
        t = theta(y)
        tangent = np.stack([-np.sin(t), np.cos(t)], axis=-1)
        return (-k * np.sin(k * t) / radius)[..., None] * tangent

    def f(y):
        return (k**2 / radius**2 + 1.0) * u(y)

    return u, grad_u, f


def preset_circle() -> Preset:
    u, grad_u, f = _circle_data()
    return Preset("circle", Circle(1.0), 1.0, u, grad_u, f, gamma=5.0, levels=(2, 8))


def preset_circle_highorder(order: int) -> Preset:
    if order not in (2, 3):
        raise Unsupported(f"high-order circle preset needs order 2 or 3, got {order}")
    u, grad_u, f = _circle_data()
    levels = (1, 4) if order == 2 else (1, 3)
    # small cut cells make high-order systems badly conditioned; Jacobi-CG needs a longer budget
    scale = 4.0 if order == 2 else 64.0
    return Preset(f"circle-p{order}", Circle(1.0), 1.0, u, grad_u, f, gamma=3.0, order=order,
                  geometry_order=order, levels=levels, cg_iter_scale=scale)


def _sphere_poly(y):
    return 3.0 * y[..., 0] ** 2 * y[..., 1] - y[..., 1] ** 3


def preset_sphere() -> Preset:
    def u(y):
        r = np.linalg.norm(y, axis=-1)
        return 12.0 / r**3 * _sphere_poly(y)

    def grad_u(y):
        r = np.linalg.norm(y, axis=-1)
        n = y / r[..., None]
        g = np.stack([6.0 * y[..., 0] * y[..., 1], 3.0 * y[..., 0] ** 2 - 3.0 * y[..., 1] ** 2,
                      np.zeros_like(r)], axis=-1)
        full = 12.0 * (g / r[..., None] ** 3 - 3.0 * (_sphere_poly(y) / r**5)[..., None] * y)
        return full - np.sum(full * n, axis=-1)[..., None] * n

    def f(y):
        # degree-3 spherical harmonic: -lap u = 12 u on the unit sphere, alpha = 1
        return 13.0 * u(y)

    return Preset("sphere", Sphere(1.0), 1.0, u, grad_u, f, gamma=1.0, levels=(0, 3))


def preset_torus(major: float = 1.0, minor: float = 0.6) -> Preset:
    surface = Torus(major, minor)
    R, r = major, minor

    def u(y):
        a, b = surface.angles(y)
        return np.sin(3 * a) * np.cos(3 * b + a)

    def grad_u(y):
        a, b = surface.angles(y)
        du_da = 3 * np.cos(3 * a) * np.cos(3 * b + a) - np.sin(3 * a) * np.sin(3 * b + a)
        du_db = -3 * np.sin(3 * a) * np.sin(3 * b + a)
        e_a = np.stack([-np.sin(a), np.cos(a), np.zeros_like(a)], axis=-1)
        e_b = np.stack([-np.cos(a) * np.sin(b), -np.sin(a) * np.sin(b), np.cos(b)], axis=-1)
        return (du_da / (R + r * np.cos(b)))[..., None] * e_a + (du_db / r)[..., None] * e_b

    def f(y):
        a, b = surface.angles(y)
        s3, c3 = np.sin(3 * a), np.cos(3 * a)
        cc, ss = np.cos(3 * b + a), np.sin(3 * b + a)
        ring = R + r * np.cos(b)
        return (r**-2 * (9 * s3 * cc)
                + ring**-2 * (10 * s3 * cc + 6 * c3 * ss)
                - (r * ring) ** -1 * (3 * np.sin(b) * s3 * ss)
                + s3 * cc)

    return Preset("torus", surface, 1.0, u, grad_u, f, gamma=1.0, levels=(1, 3))


PRESETS = {
    "circle": preset_circle,
    "sphere": preset_sphere,
    "torus": preset_torus,
    "circle-p2": lambda: preset_circle_highorder(2),
    "circle-p3": lambda: preset_circle_highorder(3),
}


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None


# ---------------------------------------------------------------------------
# finite-difference residual oracles, independent of the closed forms above


def surface_residual(preset: Preset, n: int = 1000, seed: int = 0, step: float | None = None):
    """max |-lap_Gamma u + alpha u - f| at random surface points.

    The Laplace-Beltrami operator is approximated by 5-point differences in an
    intrinsic chart (arclength, spherical angles or torus angles) using only
    evaluations of ``u``.  Runs in extended precision so that round-off stays
    below 1e-10 for the circle.
    """
    rng = np.random.default_rng(seed)
    ld = np.longdouble
    s = preset.surface
    if step is None:
        step = 6e-4 if isinstance(s, Circle) else 1e-3
    step = ld(step)
    if isinstance(s, Circle):
        t = rng.uniform(0, 2 * np.pi, n).astype(ld)
        pt = lambda tt: s.radius * np.stack([np.cos(tt), np.sin(tt)], axis=-1)
        k = step
        uu = [preset.u(pt(t + j * k / s.radius)) for j in (-2, -1, 0, 1, 2)]
        d2 = (-uu[0] + 16 * uu[1] - 30 * uu[2] + 16 * uu[3] - uu[4]) / (12 * k**2)
        lap = d2
        y = pt(t)
    elif isinstance(s, Sphere):
        # polar angle away from the poles
        th = rng.uniform(0.3, np.pi - 0.3, n).astype(ld)
        ph = rng.uniform(0, 2 * np.pi, n).astype(ld)
        pt = lambda a, b: s.radius * np.stack([np.sin(a) * np.cos(b), np.sin(a) * np.sin(b), np.cos(a)], axis=-1)
        k = step
        d_th = [preset.u(pt(th + j * k, ph)) for j in (-2, -1, 0, 1, 2)]
        d_ph = [preset.u(pt(th, ph + j * k)) for j in (-2, -1, 0, 1, 2)]
        c5 = np.array([-1, 16, -30, 16, -1], dtype=ld) / (12 * k**2)
        c1 = np.array([1, -8, 0, 8, -1], dtype=ld) / (12 * k)
        u_tt = sum(c * v for c, v in zip(c5, d_th))
        u_t = sum(c * v for c, v in zip(c1, d_th))
        u_pp = sum(c * v for c, v in zip(c5, d_ph))
        lap = (u_tt + np.cos(th) / np.sin(th) * u_t + u_pp / np.sin(th) ** 2) / s.radius**2
        y = pt(th, ph)
    else:
        R, r = s.major, s.minor
        a = rng.uniform(0, 2 * np.pi, n).astype(ld)
        b = rng.uniform(0, 2 * np.pi, n).astype(ld)
        pt = lambda aa, bb: np.stack([(R + r * np.cos(bb)) * np.cos(aa), (R + r * np.cos(bb)) * np.sin(aa),
                                      r * np.sin(bb)], axis=-1)
        k = step
        da = [preset.u(pt(a + j * k, b)) for j in (-2, -1, 0, 1, 2)]
        db = [preset.u(pt(a, b + j * k)) for j in (-2, -1, 0, 1, 2)]
        c5 = np.array([-1, 16, -30, 16, -1], dtype=ld) / (12 * k**2)
        c1 = np.array([1, -8, 0, 8, -1], dtype=ld) / (12 * k)
        u_aa = sum(c * v for c, v in zip(c5, da))
        u_bb = sum(c * v for c, v in zip(c5, db))
        u_b = sum(c * v for c, v in zip(c1, db))
        ring = R + r * np.cos(b)
        lap = u_aa / ring**2 + u_bb / r**2 - np.sin(b) / (r * ring) * u_b
        y = pt(a, b)
    res = -lap + preset.alpha * preset.u(y) - preset.f(y)
    return float(np.max(np.abs(res)))


def sphere_eigen_residual(n: int = 1000, seed: int = 0) -> float:
    """max |-lap_Gamma u - 12 u| for the sphere preset (alpha-free check)."""
    p = preset_sphere()
    shifted = Preset("sphere-eig", p.surface, 0.0, p.u, p.grad_u, lambda y: 12.0 * p.u(y))
    return surface_residual(shifted, n=n, seed=seed)
