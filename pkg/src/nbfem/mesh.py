"""Uniform simplicial background meshes and active-cell selection.

The background mesh is structured and kept implicit: squares (cubes) of side
``h`` are split into 2 triangles along the lower-left/upper-right diagonal
(6 Kuhn tetrahedra around the main diagonal).  Cells are addressed by

    cell_id = box_index * cells_per_box + local_simplex

with ``box_index = i + n*j (+ n*n*k)``.  Only cells near the surface are
ever generated, so fine 3D levels stay affordable.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field

import numpy as np

from . import lagrange
from .errors import ConfigError, EmptyBand, ResourceLimit

H0 = 0.1
TIE_EPS = 1e-12
MATERIALIZE_CAP = 5_000_000


def _kuhn_templates():
    out = []
    for perm in itertools.permutations(range(3)):
        path = [np.zeros(3, dtype=np.int64)]
        for axis in perm:
            nxt = path[-1].copy()
            nxt[axis] = 1
            path.append(nxt)
        tet = np.array(path)
        e = (tet[1:] - tet[0]).astype(float)
        if np.linalg.det(e) < 0:
            tet[[0, 1]] = tet[[1, 0]]
        out.append(tet)
    return np.array(out)


TEMPLATES = {
    2: np.array([[[0, 0], [1, 0], [1, 1]], [[0, 0], [1, 1], [0, 1]]], dtype=np.int64),
    3: _kuhn_templates(),
}


def mesh_size(dim: int, level: int) -> float:
    """Grid spacing h at refinement level ``level``."""
    if dim == 2:
        return H0 * 2.0**-level
    return H0 * 2.0 ** (1 - level)


@dataclass(frozen=True)
class BackgroundMesh:
    dim: int
    lo: float
    hi: float
    level: int
    n: int
    h: float

    @property
    def cells_per_box(self) -> int:
        return len(TEMPLATES[self.dim])

    @property
    def num_cells(self) -> int:
        return self.n**self.dim * self.cells_per_box

    @property
    def num_vertices(self) -> int:
        return (self.n + 1) ** self.dim

    def grid_coords(self, idx, order: int = 1):
        """Coordinates of integer lattice indices on the h/order lattice."""
        return self.lo + np.asarray(idx) * ((self.hi - self.lo) / (self.n * order))

    def lattice_id(self, idx, order: int = 1):
        idx = np.asarray(idx, dtype=np.int64)
        m = self.n * order + 1
        out = np.zeros(idx.shape[:-1], dtype=np.int64)
        for axis in reversed(range(self.dim)):
            out = out * m + idx[..., axis]
        return out

    def cell_vertex_grid(self, cells) -> np.ndarray:
        """Integer grid coordinates of cell vertices, (M, dim+1, dim)."""
        cells = np.asarray(cells, dtype=np.int64)
        box, sub = np.divmod(cells, self.cells_per_box)
        corner = np.empty((len(cells), self.dim), dtype=np.int64)
        rem = box
        for axis in range(self.dim):
            rem, corner[:, axis] = np.divmod(rem, self.n)
        return corner[:, None, :] + TEMPLATES[self.dim][sub]

    def cell_coords(self, cells) -> np.ndarray:
        return self.grid_coords(self.cell_vertex_grid(cells))

    def cell_vertices(self, cells) -> np.ndarray:
        return self.lattice_id(self.cell_vertex_grid(cells))

    @property
    def vertices(self) -> np.ndarray:
        self._check_materialize(self.num_vertices)
        axes = np.indices((self.n + 1,) * self.dim)[::-1]
        grid = np.stack([a.ravel() for a in axes], axis=-1)
        # lattice_id uses x fastest; np.indices reversed gives x fastest after ravel
        order = np.argsort(self.lattice_id(grid), kind="stable")
        return self.grid_coords(grid[order])

    @property
    def cells(self) -> np.ndarray:
        self._check_materialize(self.num_cells)
        return self.cell_vertices(np.arange(self.num_cells))

    def _check_materialize(self, count):
        if count > MATERIALIZE_CAP:
            raise ResourceLimit(f"refusing to materialise {count} entities (cap {MATERIALIZE_CAP})")

    def candidate_cells(self, surface, width: float, block: int = 32) -> np.ndarray:
        """Sorted ids of cells whose box centre satisfies |phi| < width.

        Any cell meeting {|phi| < width - h} is returned.  Blocks of
        ``block**dim`` boxes are discarded first using that phi is
        1-Lipschitz, so the result equals a scan over every box.
        """
        n, dim, h = self.n, self.dim, self.h
        nb = -(-n // block)
        bidx = np.stack(np.meshgrid(*([np.arange(nb)] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
        lo_box = bidx * block
        hi_box = np.minimum(lo_box + block, n)
        centre = self.lo + 0.5 * (lo_box + hi_box) * h
        reach = 0.5 * np.linalg.norm((hi_box - lo_box - 1) * h, axis=1)
        keep = np.abs(surface.phi(centre)) < width + reach + 1e-12
        offs = np.stack(np.meshgrid(*([np.arange(block)] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
        boxes = []
        kept = np.flatnonzero(keep)
        step = max(1, 2**20 // len(offs))
        for s0 in range(0, len(kept), step):
            sel = kept[s0:s0 + step]
            idx = (lo_box[sel][:, None, :] + offs[None]).reshape(-1, dim)
            idx = idx[np.all(idx < hi_box[sel].repeat(len(offs), axis=0), axis=1)]
            pts = self.lo + (idx + 0.5) * h
            hit = np.abs(surface.phi(pts)) < width
            idx = idx[hit]
            box = np.zeros(len(idx), dtype=np.int64)
            for axis in reversed(range(dim)):
                box = box * n + idx[:, axis]
            boxes.append(box)
        boxes = np.sort(np.concatenate(boxes)) if boxes else np.zeros(0, dtype=np.int64)
        per = self.cells_per_box
        return (boxes[:, None] * per + np.arange(per)).ravel()


def build_background_mesh(dim: int, box=(-2.0, 2.0), level: int = 0, max_cells: int = 10**10) -> BackgroundMesh:
    if dim not in (2, 3):
        raise ConfigError(f"dimension must be 2 or 3, got {dim}")
    if level < 0:
        raise ConfigError(f"level must be non-negative, got {level}")
    lo, hi = float(box[0]), float(box[1])
    h = mesh_size(dim, level)
    ratio = (hi - lo) / h
    n = int(round(ratio))
    if n < 1 or abs(ratio - n) > 1e-9 * ratio:
        raise ConfigError(f"box edge {hi - lo} is not a multiple of h={h}")
    mesh = BackgroundMesh(dim=dim, lo=lo, hi=hi, level=level, n=n, h=(hi - lo) / n)
    if mesh.num_cells > max_cells:
        raise ResourceLimit(f"background mesh would have {mesh.num_cells} cells (cap {max_cells})")
    return mesh


def shape_regularity(verts: np.ndarray) -> float:
    """beta = max diameter / min inscribed-ball diameter over the given cells."""
    dim = verts.shape[-1]
    diam = 0.0
    for a, b in itertools.combinations(range(dim + 1), 2):
        diam = np.maximum(diam, np.linalg.norm(verts[:, a] - verts[:, b], axis=-1))
    _, vol = lagrange.barycentric_gradients(verts)
    vol = np.abs(vol)
    faces = 0.0
    for skip in range(dim + 1):
        f = np.delete(verts, skip, axis=1)
        e = f[:, 1:] - f[:, :1]
        if dim == 2:
            faces = faces + np.linalg.norm(e[:, 0], axis=-1)
        else:
            faces = faces + 0.5 * np.linalg.norm(np.cross(e[:, 0], e[:, 1]), axis=-1)
    inradius = dim * vol / faces
    return float(diam.max() / (2 * inradius).min())


def perturb_ties(values: np.ndarray, d: float) -> np.ndarray:
    """Move nodal values within 1e-12*d of 0 or +-d off the level.

    Values near 0 go to +1e-12*d; values near +-d are pushed out of the band
    to +-(d + 1e-12*d).  Exact hits and round-off near-hits (phi evaluated as
    d*(1 - 1e-16)) are treated alike, so no cell is activated by a sliver of
    measure O(1e-24 h^dim).
    """
    out = np.array(values, dtype=float)
    tol = TIE_EPS * d
    hit0 = np.abs(out) <= tol
    hit_hi = np.abs(out - d) <= tol
    hit_lo = np.abs(out + d) <= tol
    out[hit0] = tol
    out[hit_hi] = d + tol
    out[hit_lo] = -d - tol
    return out


@dataclass(frozen=True)
class LevelSetInterpolant:
    """Order-``order`` nodal interpolant of the exact distance on ``mesh``."""

    mesh: BackgroundMesh
    surface: object
    order: int = 1

    def node_index(self, cells) -> np.ndarray:
        vg = self.mesh.cell_vertex_grid(cells)
        return lagrange.node_lattice_offsets(self.mesh.dim, self.order, vg)

    def nodal_values(self, cells, d: float | None = None) -> np.ndarray:
        x = self.mesh.grid_coords(self.node_index(cells), self.order)
        vals = self.surface.phi(x)
        return perturb_ties(vals, d) if d is not None else vals


def interpolate_levelset(mesh: BackgroundMesh, surface, order: int = 1) -> LevelSetInterpolant:
    if order not in (1, 2, 3):
        raise ConfigError(f"level-set interpolation order must be 1, 2 or 3, got {order}")
    return LevelSetInterpolant(mesh, surface, order)


class CellClass(enum.IntEnum):
    CUT = 0
    FULL = 1


@dataclass
class ActiveMesh:
    parent: BackgroundMesh
    levelset: LevelSetInterpolant
    d: float
    cells: np.ndarray
    cell_class: np.ndarray
    phi_nodal: np.ndarray
    surrogate: dict = field(default_factory=dict, repr=False)

    @property
    def dim(self) -> int:
        return self.parent.dim

    @property
    def num_cells(self) -> int:
        return len(self.cells)

    @property
    def coords(self) -> np.ndarray:
        return self.parent.cell_coords(self.cells)

    @property
    def full(self) -> np.ndarray:
        return self.cell_class == CellClass.FULL


def select_active_cells(mesh: BackgroundMesh, levelset: LevelSetInterpolant, d: float,
                        subcell_size: float | None = None, adaptive: bool = True) -> ActiveMesh:
    """Cells with nonempty intersection with {|phi_h| < d}, sorted by cell id.

    For linear level sets the decision uses vertex values.  Higher-order level
    sets are decided on the piecewise-linear surrogate from
    :func:`nbfem.cutgeom.subtriangulate_cells` with sub-cell size ``subcell_size``.
    """
    cand = mesh.candidate_cells(levelset.surface, d + 2 * mesh.h)
    vals = levelset.nodal_values(cand, d)
    nv = mesh.dim + 1
    vmin = vals[:, :nv].min(axis=1) if levelset.order == 1 else vals.min(axis=1)
    vmax = vals[:, :nv].max(axis=1) if levelset.order == 1 else vals.max(axis=1)
    surrogate = {}
    if levelset.order == 1:
        active = (vmin < d) & (vmax > -d)
        full = (vmax < d) & (vmin > -d)
    else:
        from . import cutgeom

        # polynomial may leave the nodal range by O(h^2 * |D^2 phi|)
        margin = 4.0 * levelset.surface.curvature_bound * mesh.h**2
        full = (vmax < d - margin) & (vmin > -d + margin)
        maybe = (vmin < d + margin) & (vmax > -d - margin) & ~full
        active = full.copy()
        idx = np.flatnonzero(maybe)
        if len(idx):
            coords = mesh.cell_coords(cand[idx])
            sub = cutgeom.subtriangulate_cells(
                coords, vals[idx], levelset.order, subcell_size or mesh.h,
                levels=(-d, d), curvature=levelset.surface.curvature_bound, adaptive=adaptive)
            svals = perturb_ties(sub.values, d)
            s_act = (svals.min(axis=1) < d) & (svals.max(axis=1) > -d)
            s_full = (svals.max(axis=1) < d) & (svals.min(axis=1) > -d)
            any_act = np.zeros(len(idx), bool)
            all_full = np.ones(len(idx), bool)
            np.logical_or.at(any_act, sub.parent, s_act)
            np.logical_and.at(all_full, sub.parent, s_full)
            active[idx] = any_act
            full[idx] = all_full
            surrogate = {"subcells": sub.count, "depth": sub.depth}
    if not np.any(active):
        raise EmptyBand(f"no background cell meets the band |phi_h| < {d:.6g}")
    cls = np.where(full[active], CellClass.FULL, CellClass.CUT).astype(np.int8)
    return ActiveMesh(parent=mesh, levelset=levelset, d=d, cells=cand[active],
                      cell_class=cls, phi_nodal=vals[active], surrogate=surrogate)
