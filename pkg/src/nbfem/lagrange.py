"""Lagrange simplex elements written in barycentric coordinates.

Local node ``k`` of an order-``r`` element sits at the barycentric point
``alpha_k / r`` where ``alpha_k`` is a multi-index of length dim+1 summing to
``r``.  On a lattice-aligned cell with integer vertex indices ``V_i`` (in
units of h), that node has the integer index ``sum_i alpha_k[i] * V_i`` on the
lattice of spacing h/r.  This makes nodes coincide between neighbouring cells,
which is what gives C0 continuity in :mod:`nbfem.fem`.
"""

from functools import lru_cache
from itertools import product

import numpy as np


@lru_cache(maxsize=None)
def multi_indices(dim: int, order: int) -> np.ndarray:
    """Node multi-indices: vertices first, then the rest in lexicographic order."""
    verts = [tuple(order if i == j else 0 for i in range(dim + 1)) for j in range(dim + 1)]
    rest = []
    for alpha in product(range(order + 1), repeat=dim + 1):
        if sum(alpha) == order and alpha not in verts:
            rest.append(alpha)
    rest.sort(reverse=True)
    out = np.array(verts + rest, dtype=np.int64)
    out.setflags(write=False)
    return out


def num_nodes(dim: int, order: int) -> int:
    return len(multi_indices(dim, order))


def _factor_terms(lam, a, order):
    """prod_{m<a} (order*lam - m)/(m+1) and its derivative in lam."""
    val = np.ones_like(lam)
    der = np.zeros_like(lam)
    for m in range(a):
        t = (order * lam - m) / (m + 1)
        der = der * t + val * (order / (m + 1))
        val = val * t
    return val, der


def basis(lam: np.ndarray, order: int):
    """Evaluate basis functions and barycentric derivatives.

    Parameters
    ----------
    lam : (Q, dim+1) barycentric coordinates.

    Returns
    -------
    values : (Q, nloc)
    dlam : (Q, nloc, dim+1) partial derivatives w.r.t. each barycentric coordinate
    """
    lam = np.asarray(lam, dtype=float)
    nb = lam.shape[-1]
    alphas = multi_indices(nb - 1, order)
    if order == 1:
        q = lam.shape[0]
        return lam.copy(), np.broadcast_to(np.eye(nb), (q, nb, nb)).copy()
    # factor tables: fac[i][a] -> (val, der) of the i-th barycentric factor of degree a
    fac = [[_factor_terms(lam[:, i], a, order) for a in range(order + 1)] for i in range(nb)]
    q = lam.shape[0]
    vals = np.empty((q, len(alphas)))
    dlam = np.empty((q, len(alphas), nb))
    for k, alpha in enumerate(alphas):
        parts = [fac[i][alpha[i]] for i in range(nb)]
        v = np.ones(q)
        for p in parts:
            v = v * p[0]
        vals[:, k] = v
        for i in range(nb):
            d = parts[i][1]
            for j in range(nb):
                if j != i:
                    d = d * parts[j][0]
            dlam[:, k, i] = d
    return vals, dlam


def barycentric_gradients(verts: np.ndarray):
    """Constant gradients of barycentric coordinates per cell.

    verts : (M, dim+1, dim) -> (M, dim+1, dim), plus signed measure (M,)
    """
    dim = verts.shape[-1]
    jac = np.swapaxes(verts[:, 1:, :] - verts[:, :1, :], 1, 2)  # (M, dim, dim), columns = edges
    inv = np.linalg.inv(jac)  # rows give grad of lam_1..lam_dim
    g = np.empty(verts.shape[:1] + (dim + 1, dim))
    g[:, 1:, :] = inv
    g[:, 0, :] = -inv.sum(axis=1)
    fact = float(np.prod(np.arange(1, dim + 1)))
    return g, np.linalg.det(jac) / fact


def barycentric_coords(verts: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Barycentric coordinates of points ``x`` (Q, dim) in cells ``verts`` (Q, dim+1, dim)."""
    jac = np.swapaxes(verts[:, 1:, :] - verts[:, :1, :], 1, 2)
    rhs = (x - verts[:, 0, :])[..., None]
    tail = np.linalg.solve(jac, rhs)[..., 0]
    return np.concatenate([1.0 - tail.sum(axis=1, keepdims=True), tail], axis=1)


def node_lattice_offsets(dim: int, order: int, vertex_index: np.ndarray) -> np.ndarray:
    """Integer node indices on the h/order lattice.

    vertex_index : (M, dim+1, dim) integer grid coordinates of cell vertices.
    Returns (M, nloc, dim).
    """
    alphas = multi_indices(dim, order)
    return np.einsum("kv,mvd->mkd", alphas, vertex_index)
