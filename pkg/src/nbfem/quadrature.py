"""Reference quadrature rules on simplices in barycentric form.

Rules are returned as ``(lam, w)`` with ``lam`` of shape (nq, dim+1) and
weights normalised to sum to one; multiply by the simplex measure to map.
Low degrees use the classical symmetric rules, everything else the collapsed
(Stroud conical product) Gauss-Jacobi construction.
"""

from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

from .errors import UnsupportedDegree

MAX_DEGREE = 6
# Gauss-Legendre on segments (2D trace facets) has no practical cap
MAX_SEGMENT_DEGREE = 21


def _gauss_jacobi01(n, alpha):
    """n-point rule on [0,1] for weight (1-t)^alpha, weights normalised to sum 1."""
    x, w = roots_jacobi(n, alpha, 0.0)
    t = 0.5 * (1.0 + x)
    return t, w / w.sum()


@lru_cache(maxsize=None)
def simplex_rule(dim: int, degree: int):
    cap = MAX_SEGMENT_DEGREE if dim == 1 else MAX_DEGREE
    if degree < 0 or degree > cap:
        raise UnsupportedDegree(f"quadrature degree {degree} not in [0, {cap}] for dim={dim}")
    degree = max(degree, 1)
    if dim == 1:
        n = (degree + 2) // 2
        x, w = np.polynomial.legendre.leggauss(n)
        t = 0.5 * (1.0 + x)
        lam = np.stack([1.0 - t, t], axis=1)
        out = lam, w / w.sum()
    elif degree == 1:
        out = np.full((1, dim + 1), 1.0 / (dim + 1)), np.ones(1)
    elif degree == 2 and dim == 2:
        lam = np.full((3, 3), 1.0 / 6.0)
        np.fill_diagonal(lam, 2.0 / 3.0)
        out = lam, np.full(3, 1.0 / 3.0)
    elif degree == 2 and dim == 3:
        a = (5.0 + 3.0 * np.sqrt(5.0)) / 20.0
        lam = np.full((4, 4), (1.0 - a) / 3.0)
        np.fill_diagonal(lam, a)
        out = lam, np.full(4, 0.25)
    else:
        out = _conical(dim, degree)
    lam, w = out
    lam.setflags(write=False)
    w.setflags(write=False)
    return lam, w


def _conical(dim, degree):
    n = (degree + 2) // 2
    if dim == 2:
        u, wu = _gauss_jacobi01(n, 1.0)
        v, wv = _gauss_jacobi01(n, 0.0)
        U, V = np.meshgrid(u, v, indexing="ij")
        x = U.ravel()
        y = ((1 - U) * V).ravel()
        w = np.outer(wu, wv).ravel()
        lam = np.stack([1 - x - y, x, y], axis=1)
    elif dim == 3:
        u, wu = _gauss_jacobi01(n, 2.0)
        v, wv = _gauss_jacobi01(n, 1.0)
        s, ws = _gauss_jacobi01(n, 0.0)
        U, V, S = np.meshgrid(u, v, s, indexing="ij")
        x = U.ravel()
        y = ((1 - U) * V).ravel()
        z = ((1 - U) * (1 - V) * S).ravel()
        w = np.einsum("i,j,k->ijk", wu, wv, ws).ravel()
        lam = np.stack([1 - x - y - z, x, y, z], axis=1)
    else:
        raise UnsupportedDegree(f"no simplex rule for dim={dim}")
    return lam, w / w.sum()


def simplex_measure(verts: np.ndarray) -> np.ndarray:
    """Unsigned measure of simplices (M, k+1, dim) for k = dim or dim - 1."""
    e = verts[:, 1:, :] - verts[:, :1, :]
    k = e.shape[1]
    if k == 1:
        return np.linalg.norm(e[:, 0], axis=-1)
    if k == verts.shape[-1]:
        return np.abs(np.linalg.det(e)) / (1.0 if k == 1 else (2.0 if k == 2 else 6.0))
    # triangle embedded in 3D
    return 0.5 * np.linalg.norm(np.cross(e[:, 0], e[:, 1]), axis=-1)


def map_rule(verts: np.ndarray, degree: int):
    """Quadrature on a batch of simplices.

    Returns points (M*nq, dim), weights (M*nq,), owner index (M*nq,), grouped
    by simplex in input order.
    """
    k = verts.shape[1] - 1
    lam, w = simplex_rule(k, degree)
    pts = np.einsum("qv,mvd->mqd", lam, verts).reshape(-1, verts.shape[-1])
    wts = (simplex_measure(verts)[:, None] * w[None, :]).ravel()
    owner = np.repeat(np.arange(len(verts)), len(w))
    return pts, wts, owner
