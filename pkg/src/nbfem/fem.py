"""Lagrange spaces on the active cells and assembly of the band problem.

The discrete problem is

    int_{Omega_h} [ A grad u . grad v + alpha^e mu u v ] dx = int_{Omega_h} f^e mu v dx

with A = mu (I - phi H)^-2 and mu = det(I - phi H) from
:func:`nbfem.levelset.coefficient`.  No boundary terms appear: the band
boundary condition is natural.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import lagrange, levelset
from .errors import PointOutsideCell, Unsupported
from .linalg import SparseSym

CHUNK = 8192
QP_CHUNK = 131072


@dataclass
class FeSpace:
    active: object
    order: int
    cell_dofs: np.ndarray
    dof_coords: np.ndarray
    lattice_ids: np.ndarray

    @property
    def num_dofs(self) -> int:
        return len(self.dof_coords)

    @property
    def dim(self) -> int:
        return self.dof_coords.shape[1]


def build_space(active, order: int = 1) -> FeSpace:
    """Continuous P_order space over the active cells.

    Global numbering follows the lattice id of each Lagrange node, so it is
    independent of how the active set was produced.
    """
    dim = active.dim
    if order not in (1, 2, 3) or (dim == 3 and order > 1):
        raise Unsupported(f"P{order} elements are not available in {dim}D")
    mesh = active.parent
    idx = lagrange.node_lattice_offsets(dim, order, mesh.cell_vertex_grid(active.cells))
    ids = mesh.lattice_id(idx, order)
    uniq, first, inverse = np.unique(ids.ravel(), return_index=True, return_inverse=True)
    flat_idx = idx.reshape(-1, dim)[first]
    return FeSpace(active=active, order=order, cell_dofs=inverse.reshape(ids.shape),
                   dof_coords=mesh.grid_coords(flat_idx, order), lattice_ids=uniq)


def interpolate(space: FeSpace, g) -> np.ndarray:
    """Nodal interpolant of a function of physical coordinates."""
    return np.asarray(g(space.dof_coords), dtype=float)


def _local_basis(space, cells_local, points):
    """Basis values (Q, nloc) and physical gradients (Q, nloc, dim) at points."""
    uniq, inv = np.unique(cells_local, return_inverse=True)
    verts = space.active.parent.cell_coords(space.active.cells[uniq])
    glam, _ = lagrange.barycentric_gradients(verts)
    glam = glam[inv]
    lam = np.einsum("qvd,qd->qv", glam, points - verts[inv, 0, :])
    lam[:, 0] += 1.0
    vals, dlam = lagrange.basis(lam, space.order)
    grads = np.matmul(dlam, glam)
    return vals, grads, lam


def evaluate_points(space: FeSpace, coeffs, cells_local, points):
    """Values (Q,) and gradients (Q, dim) of a discrete function at points."""
    cells_local = np.asarray(cells_local)
    vals, grads, _ = _local_basis(space, cells_local, np.asarray(points, dtype=float))
    c = np.asarray(coeffs)[space.cell_dofs[cells_local]]
    return np.einsum("qk,qk->q", vals, c), np.einsum("qkd,qk->qd", grads, c)


def evaluate(space: FeSpace, coeffs, cell: int, x):
    """Value and gradient at a point ``x`` of active cell ``cell`` (local index)."""
    x = np.asarray(x, dtype=float)[None]
    _, _, lam = _local_basis(space, np.array([cell]), x)
    if lam.min() < -1e-10:
        raise PointOutsideCell(f"point {x[0]} is outside active cell {cell}")
    v, g = evaluate_points(space, coeffs, np.array([cell]), x)
    return float(v[0]), g[0]


@dataclass
class FeSystem:
    matrix: SparseSym
    rhs: np.ndarray


def _segment_sum(arr, starts, n):
    """Sum consecutive rows of ``arr`` into ``n`` groups beginning at ``starts``."""
    out = np.add.reduceat(arr, starts, axis=0)
    empty = np.diff(np.append(starts, len(arr))) == 0
    out[empty] = 0.0
    return out


def _element_chunk(space, quad, c0, c1, surface, mode, alpha, f, coefficient, stiffness, mass):
    q0, q1 = np.searchsorted(quad.vol_cell, [c0, c1])
    pts = quad.vol_points[q0:q1]
    w = quad.vol_weights[q0:q1]
    owner = quad.vol_cell[q0:q1]
    ncell = c1 - c0
    starts = np.searchsorted(owner, np.arange(c0, c1))
    if coefficient is None:
        a, mu = levelset.coefficient(surface, mode, pts)
    else:
        a, mu = coefficient(pts)
    foot = levelset.closest_point(surface, pts)
    al = alpha(foot) if callable(alpha) else np.full(len(pts), float(alpha))
    fe = f(foot)
    vals, grads, _ = _local_basis(space, owner, pts)
    nloc = vals.shape[1]
    k = np.zeros((ncell, nloc, nloc))
    if stiffness:
        if space.order == 1:
            abar = _segment_sum(w[:, None, None] * a, starts, ncell)
            g = grads[np.minimum(starts, len(pts) - 1)]
            k += np.einsum("cid,cde,cje->cij", g, abar, g)
        else:
            ag = np.matmul(grads, (w[:, None, None] * a))  # (Q, nloc, dim)
            k += _segment_sum(np.matmul(ag, np.swapaxes(grads, 1, 2)), starts, ncell)
    if mass:
        wv = (w * al * mu)[:, None] * vals
        k += _segment_sum(wv[:, :, None] * vals[:, None, :], starts, ncell)
    k = 0.5 * (k + np.swapaxes(k, 1, 2))
    b = _segment_sum((w * fe * mu)[:, None] * vals, starts, ncell)
    return k, b


def chunk_bounds(owner, ncells: int):
    """Cell ranges holding at most CHUNK cells and about QP_CHUNK points.

    Depends only on the quadrature, never on the worker count.
    """
    counts = np.bincount(owner, minlength=ncells)
    csum = np.concatenate([[0], np.cumsum(counts)])
    bounds = []
    c0 = 0
    while c0 < ncells:
        c1 = int(np.searchsorted(csum, csum[c0] + QP_CHUNK, side="right")) - 1
        c1 = min(max(c1, c0 + 1), c0 + CHUNK, ncells)
        bounds.append((c0, c1))
        c0 = c1
    return bounds


def assemble(space: FeSpace, surface, mode, alpha, f, quad, coefficient=None, threads: int = 1,
             stiffness: bool = True, mass: bool = True) -> FeSystem:
    """Assemble matrix and load vector over the band quadrature ``quad``.

    ``coefficient`` overrides the (A, mu) pair, which is how unit tests pin
    A = I or A = 0.  ``alpha`` is a constant or a function on surface points
    and ``f`` a function on surface points; both are lifted by the closest
    point map.
    """
    mode = levelset.CoefficientMode.parse(mode)
    ncells = space.active.num_cells
    bounds = chunk_bounds(quad.vol_cell, ncells)

    def work(b):
        return _element_chunk(space, quad, b[0], b[1], surface, mode, alpha, f, coefficient, stiffness, mass)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(work, bounds))
    else:
        parts = [work(b) for b in bounds]
    kloc = np.concatenate([p[0] for p in parts])
    bloc = np.concatenate([p[1] for p in parts])
    dofs = space.cell_dofs
    nloc = dofs.shape[1]
    rows = np.repeat(dofs, nloc, axis=1).ravel()
    cols = np.tile(dofs, (1, nloc)).ravel()
    n = space.num_dofs
    mat = sp.coo_matrix((kloc.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    mat.sum_duplicates()
    mat.sort_indices()
    rhs = np.bincount(dofs.ravel(), weights=bloc.ravel(), minlength=n)
    return FeSystem(matrix=SparseSym.from_scipy(mat), rhs=rhs)


def residual(system: FeSystem, u) -> np.ndarray:
    return system.matrix.matvec(u) - system.rhs
