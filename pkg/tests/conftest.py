import numpy as np
import pytest

from nbfem.levelset import Circle, Sphere, Torus

SURFACES = {"circle": Circle(1.0), "sphere": Sphere(1.0), "torus": Torus(1.0, 0.6)}


def band_points(surface, n, seed=0, frac=0.5):
    """Random points with |phi| < frac / curvature_bound, placed along normals."""
    rng = np.random.default_rng(seed)
    width = frac / surface.curvature_bound
    if surface.dim == 2:
        t = rng.uniform(0, 2 * np.pi, n)
        foot = surface.radius * np.stack([np.cos(t), np.sin(t)], axis=1)
    elif isinstance(surface, Sphere):
        v = rng.normal(size=(n, 3))
        foot = surface.radius * v / np.linalg.norm(v, axis=1, keepdims=True)
    else:
        a, b = rng.uniform(0, 2 * np.pi, (2, n))
        ring = surface.major + surface.minor * np.cos(b)
        foot = np.stack([ring * np.cos(a), ring * np.sin(a), surface.minor * np.sin(b)], axis=1)
    off = rng.uniform(-width, width, n)
    return foot + off[:, None] * surface.grad(foot), off


@pytest.fixture(params=sorted(SURFACES))
def surface(request):
    return SURFACES[request.param]
