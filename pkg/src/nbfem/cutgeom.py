"""Clipping of simplices against the discrete band and cut-cell quadrature.

The band {-d < phi_h < d} is cut out of a cell by two successive half-space
clips with a marching-simplex case table.  Vertices are sorted so that the
kept ones come first, after which every case has a fixed topology and the
whole batch is processed with array operations.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import lagrange
from .errors import DegenerateCut, NoIntersection, ResourceLimit
from .mesh import perturb_ties
from .quadrature import map_rule, simplex_measure

SUBCELL_CAP = 50_000_000
CHUNK = 4096

# Children of a clipped simplex.  An int is a kept vertex (after sorting kept
# vertices first), a pair (i, j) is the crossing on edge i-j.
_PRISM = lambda a0, a1, a2, b0, b1, b2: [(a0, a1, a2, b0), (a1, a2, b0, b1), (a2, b0, b1, b2)]

CLIP_TABLE = {
    (2, 1): [(0, (0, 1), (0, 2))],
    (2, 2): [(0, 1, (1, 2)), (0, (1, 2), (0, 2))],
    (3, 1): [(0, (0, 1), (0, 2), (0, 3))],
    (3, 2): _PRISM(0, (0, 2), (0, 3), 1, (1, 2), (1, 3)),
    (3, 3): _PRISM(0, 1, 2, (0, 3), (1, 3), (2, 3)),
}

# Facets of {phi_h = 0}, negative vertices sorted first.
FACET_TABLE = {
    (2, 1): [((0, 1), (0, 2))],
    (2, 2): [((0, 2), (1, 2))],
    (3, 1): [((0, 1), (0, 2), (0, 3))],
    (3, 2): [((0, 2), (0, 3), (1, 3)), ((0, 2), (1, 3), (1, 2))],
    (3, 3): [((0, 3), (1, 3), (2, 3))],
}


def _sort_first(mask):
    order = np.argsort(~mask, axis=1, kind="stable")
    return order


def _gather(arr, order):
    return np.take_along_axis(arr, order.reshape(order.shape + (1,) * (arr.ndim - 2)), axis=1)


def _build(table, verts, vals, extra):
    """Assemble children from a case table for a batch sharing one case."""
    pts, ext = [], []
    for child in table:
        cp, ce = [], []
        for spec in child:
            if isinstance(spec, tuple):
                i, j = spec
                t = vals[:, i] / (vals[:, i] - vals[:, j])
                cp.append(verts[:, i] + t[:, None] * (verts[:, j] - verts[:, i]))
                ce.append(extra[:, i] + t[:, None] * (extra[:, j] - extra[:, i]))
            else:
                cp.append(verts[:, spec])
                ce.append(extra[:, spec])
        pts.append(np.stack(cp, axis=1))
        ext.append(np.stack(ce, axis=1))
    return pts, ext


def clip_halfspace(verts, vals, extra=None):
    """Keep the part of each simplex where the linear function ``vals`` < 0.

    verts : (M, k+1, dim); vals : (M, k+1); extra : (M, k+1, F) fields
    interpolated linearly onto new vertices.
    Returns (child_verts, child_extra, parent) with children grouped by case.
    """
    m, nv, _ = verts.shape
    if extra is None:
        extra = np.zeros((m, nv, 0))
    inside = vals < 0
    count = inside.sum(axis=1)
    out_v, out_e, out_p = [], [], []
    whole = np.flatnonzero(count == nv)
    out_v.append(verts[whole])
    out_e.append(extra[whole])
    out_p.append(whole)
    for nin in range(1, nv):
        idx = np.flatnonzero(count == nin)
        if len(idx) == 0:
            continue
        order = _sort_first(inside[idx])
        v = _gather(verts[idx], order)
        f = np.take_along_axis(vals[idx], order, axis=1)
        e = _gather(extra[idx], order)
        pts, ext = _build(CLIP_TABLE[(nv - 1, nin)], v, f, e)
        for p, x in zip(pts, ext):
            out_v.append(p)
            out_e.append(x)
            out_p.append(idx)
    child_v = np.concatenate(out_v)
    child_e = np.concatenate(out_e)
    parent = np.concatenate(out_p)
    order = np.argsort(parent, kind="stable")
    return child_v[order], child_e[order], parent[order]


def clip_band(verts, phi, d):
    """Sub-simplices covering {x in T : -d < phi_h(x) < d} for linear phi_h.

    Returns (sub_verts, parent) sorted by parent.
    """
    v1, e1, p1 = clip_halfspace(verts, phi - d, phi[..., None])
    phi1 = e1[..., 0]
    v2, _, p2 = clip_halfspace(v1, -phi1 - d)
    return v2, p1[p2]


def zero_facets(verts, vals):
    """Facets of {phi_h = 0} inside each simplex where phi_h changes sign.

    Returns (facets (F, dim, dim), parent (F,), unit normals (F, dim)).
    """
    m, nv, dim = verts.shape
    neg = vals < 0
    count = neg.sum(axis=1)
    grads, _ = lagrange.barycentric_gradients(verts)
    g = np.einsum("mv,mvd->md", vals, grads)
    nrm = g / np.linalg.norm(g, axis=1, keepdims=True)
    out_f, out_p = [], []
    for nneg in range(1, nv):
        idx = np.flatnonzero(count == nneg)
        if len(idx) == 0:
            continue
        order = _sort_first(neg[idx])
        v = _gather(verts[idx], order)
        f = np.take_along_axis(vals[idx], order, axis=1)
        pts, _ = _build(FACET_TABLE[(nv - 1, nneg)], v, f, np.zeros(v.shape[:2] + (0,)))
        for p in pts:
            out_f.append(p)
            out_p.append(idx)
    if not out_f:
        return np.zeros((0, dim, dim)), np.zeros(0, dtype=np.int64), np.zeros((0, dim))
    facets = np.concatenate(out_f)
    parent = np.concatenate(out_p)
    order = np.argsort(parent, kind="stable")
    parent = parent[order]
    return facets[order], parent, nrm[parent]


@dataclass
class CutRegion:
    cell: int
    sub_simplices: np.ndarray
    volume_quad: tuple | None = None
    trace_quad: tuple | None = None

    @property
    def measure(self) -> float:
        return float(simplex_measure(self.sub_simplices).sum())


def clip_cell(cell_verts, phi_vals, d, cell: int = -1) -> CutRegion:
    """Clip one linear cell against the band; full cells come back unchanged."""
    cell_verts = np.asarray(cell_verts, dtype=float)
    phi_vals = np.asarray(phi_vals, dtype=float)
    if np.all(np.abs(phi_vals) < d):
        return CutRegion(cell, cell_verts[None].copy())
    sub, _ = clip_band(cell_verts[None], phi_vals[None], d)
    if len(sub) and simplex_measure(sub).sum() <= 0.0:
        raise DegenerateCut(f"cell {cell}: clipped polytope has zero measure")
    return CutRegion(cell, sub)


def volume_quadrature(region: CutRegion, degree: int):
    """(points, weights) integrating degree-``degree`` polynomials exactly on the region."""
    pts, wts, _ = map_rule(region.sub_simplices, degree)
    region.volume_quad = (pts, wts)
    return pts, wts


def trace_quadrature(cell_verts, phi_vals, degree: int):
    """(points, weights, normals) on the zero facet(s) of a linear phi_h in one cell."""
    cell_verts = np.asarray(cell_verts, dtype=float)[None]
    phi_vals = np.asarray(phi_vals, dtype=float)[None]
    if not (phi_vals.min() < 0 < phi_vals.max()):
        raise NoIntersection("phi_h does not change sign on the cell")
    facets, _, nrm = zero_facets(cell_verts, phi_vals)
    pts, wts, owner = map_rule(facets, degree)
    return pts, wts, nrm[owner]


# ---------------------------------------------------------------------------
# sub-triangulation for higher-order level sets


@dataclass
class SubTriangulation:
    """Piecewise-linear surrogate of a polynomial phi_h on cut cells.

    ``lam`` holds sub-triangle vertices in barycentric coordinates of the
    parent cell, ``values`` the polynomial sampled at those vertices.
    """

    parent: np.ndarray
    lam: np.ndarray
    coords: np.ndarray
    values: np.ndarray
    depth: int

    @property
    def count(self) -> int:
        return len(self.parent)


_RED = [(0, 3, 5), (3, 1, 4), (5, 4, 2), (3, 4, 5)]


def _red_refine(lam):
    a, b, c = lam[:, 0], lam[:, 1], lam[:, 2]
    pts = np.stack([a, b, c, 0.5 * (a + b), 0.5 * (b + c), 0.5 * (c + a)], axis=1)
    children = np.stack([pts[:, list(t)] for t in _RED], axis=1)
    return children.reshape(-1, 3, lam.shape[-1])


def refinement_depth(h: float, target: float) -> int:
    if target >= h:
        return 0
    return int(math.ceil(math.log2(h / target) - 1e-9))


def subtriangulate_cells(coords, nodal, order, target, levels=(0.0,), curvature=1.0,
                         adaptive=True, h=None):
    """Locally refine cells so every sub-triangle crossing a level has size <= target.

    coords : (M, 3, 2) parent vertices; nodal : (M, nloc) Lagrange values of
    order ``order``.  ``h`` is the parent leg length (defaults to the shortest
    edge).  With ``adaptive`` only sub-triangles that may meet one of
    ``levels`` are refined; the others are already exact for the surrogate.
    """
    coords = np.asarray(coords, dtype=float)
    nodal = np.asarray(nodal, dtype=float)
    m = len(coords)
    if h is None:
        h = float(np.min(np.linalg.norm(coords[:, 1] - coords[:, 0], axis=-1))) if m else 1.0
    depth = refinement_depth(h, target)
    levels = np.asarray(levels, dtype=float)
    est = m * (2 ** depth * 4 if adaptive else 4 ** depth)
    if est > SUBCELL_CAP:
        raise ResourceLimit(f"sub-triangulation needs ~{est} sub-cells (cap {SUBCELL_CAP})")

    def sample(parent, lam):
        vals, _ = lagrange.basis(lam.reshape(-1, 3), order)
        vals = vals.reshape(lam.shape[0], 3, -1)
        return np.einsum("svk,sk->sv", vals, nodal[parent])

    done_p, done_l = [], []
    parent = np.arange(m)
    lam = np.broadcast_to(np.eye(3), (m, 3, 3)).copy()
    size = h
    for _ in range(depth):
        if adaptive:
            v = sample(parent, lam)
            margin = 2.0 * curvature * 2.0 * size**2
            lo = v.min(axis=1)[:, None] - margin
            hi = v.max(axis=1)[:, None] + margin
            need = np.any((lo < levels) & (hi > levels), axis=1)
            done_p.append(parent[~need])
            done_l.append(lam[~need])
            parent, lam = parent[need], lam[need]
        lam = _red_refine(lam)
        parent = np.repeat(parent, 4)
        size *= 0.5
    done_p.append(parent)
    done_l.append(lam)
    parent = np.concatenate(done_p)
    lam = np.concatenate(done_l)
    order_ = np.argsort(parent, kind="stable")
    parent, lam = parent[order_], lam[order_]
    values = sample(parent, lam) if len(parent) else np.zeros((0, 3))
    xy = np.einsum("svk,skd->svd", lam, coords[parent])
    return SubTriangulation(parent=parent, lam=lam, coords=xy, values=values, depth=depth)


def subtriangulate(cell_coords, nodal, order, target, levels=(0.0,), curvature=1.0, adaptive=False):
    """Single-cell convenience wrapper around :func:`subtriangulate_cells`."""
    return subtriangulate_cells(np.asarray(cell_coords)[None], np.asarray(nodal)[None], order,
                                target, levels=levels, curvature=curvature, adaptive=adaptive)


# ---------------------------------------------------------------------------
# batched quadrature over an active mesh


@dataclass
class BandQuadrature:
    """Volume quadrature on T cap Omega_h and trace quadrature on Gamma_h.

    ``*_cell`` entries index ``ActiveMesh.cells`` and are sorted.
    """

    vol_points: np.ndarray
    vol_weights: np.ndarray
    vol_cell: np.ndarray
    trace_points: np.ndarray
    trace_weights: np.ndarray
    trace_normals: np.ndarray
    trace_cell: np.ndarray

    @property
    def band_measure(self) -> float:
        return float(self.vol_weights.sum())

    @property
    def surface_measure(self) -> float:
        return float(self.trace_weights.sum())


def _linear_chunk(coords, phi, full, d, vol_degree, trace_degree):
    out_p, out_w, out_c = [], [], []
    fidx = np.flatnonzero(full)
    if len(fidx):
        p, w, o = map_rule(coords[fidx], vol_degree)
        out_p.append(p), out_w.append(w), out_c.append(fidx[o])
    cidx = np.flatnonzero(~full)
    if len(cidx):
        sub, par = clip_band(coords[cidx], phi[cidx], d)
        meas = np.bincount(par, weights=simplex_measure(sub), minlength=len(cidx))
        if np.any(meas <= 0.0):
            raise DegenerateCut("active cut cell with zero clipped measure")
        p, w, o = map_rule(sub, vol_degree)
        out_p.append(p), out_w.append(w), out_c.append(cidx[par[o]])
    dim = coords.shape[-1]
    tp, tw, tn, tc = np.zeros((0, dim)), np.zeros(0), np.zeros((0, dim)), np.zeros(0, dtype=np.int64)
    tidx = np.flatnonzero((phi.min(axis=1) < 0) & (phi.max(axis=1) > 0))
    if len(tidx):
        facets, fpar, nrm = zero_facets(coords[tidx], phi[tidx])
        tp, tw, to = map_rule(facets, trace_degree)
        tn = nrm[to]
        tc = tidx[fpar[to]]
    return (out_p, out_w, out_c), (tp, tw, tn, tc)


def _highorder_chunk(coords, nodal, full, d, vol_degree, trace_degree, order, target, curvature, h, adaptive):
    out_p, out_w, out_c = [], [], []
    fidx = np.flatnonzero(full)
    if len(fidx):
        p, w, o = map_rule(coords[fidx], vol_degree)
        out_p.append(p), out_w.append(w), out_c.append(fidx[o])
    cidx = np.flatnonzero(~full)
    if len(cidx):
        sub = subtriangulate_cells(coords[cidx], nodal[cidx], order, target, levels=(-d, d),
                                   curvature=curvature, adaptive=adaptive, h=h)
        pieces, par = clip_band(sub.coords, perturb_ties(sub.values, d), d)
        p, w, o = map_rule(pieces, vol_degree)
        out_p.append(p), out_w.append(w), out_c.append(cidx[sub.parent[par[o]]])
    margin = 4.0 * curvature * h**2
    tidx = np.flatnonzero((nodal.min(axis=1) < margin) & (nodal.max(axis=1) > -margin))
    dim = coords.shape[-1]
    tp, tw, tn, tc = np.zeros((0, dim)), np.zeros(0), np.zeros((0, dim)), np.zeros(0, dtype=np.int64)
    if len(tidx):
        sub = subtriangulate_cells(coords[tidx], nodal[tidx], order, target, levels=(0.0,),
                                   curvature=curvature, adaptive=adaptive, h=h)
        facets, fpar, nrm = zero_facets(sub.coords, perturb_ties(sub.values, d))
        if len(facets):
            tp, tw, to = map_rule(facets, trace_degree)
            tn = nrm[to]
            tc = tidx[sub.parent[fpar[to]]]
    return (out_p, out_w, out_c), (tp, tw, tn, tc)


def build_band_quadrature(active, vol_degree: int, trace_degree: int, subcell_size: float | None = None,
                          adaptive: bool = True, threads: int = 1) -> BandQuadrature:
    """Quadrature for every active cell, processed in fixed-size chunks.

    Chunk boundaries do not depend on ``threads``, so results are identical
    for any worker count.
    """
    coords_all = active.coords
    full_all = active.full
    phi_all = active.phi_nodal
    order = active.levelset.order
    d = active.d
    h = active.parent.h
    curvature = active.levelset.surface.curvature_bound
    starts = list(range(0, active.num_cells, CHUNK))

    def work(s):
        sl = slice(s, s + CHUNK)
        if order == 1:
            nv = active.dim + 1
            res = _linear_chunk(coords_all[sl], phi_all[sl, :nv], full_all[sl], d, vol_degree, trace_degree)
        else:
            res = _highorder_chunk(coords_all[sl], phi_all[sl], full_all[sl], d, vol_degree, trace_degree,
                                   order, subcell_size or h, curvature, h, adaptive)
        (vp, vw, vc), (tp, tw, tn, tc) = res
        vc = [c + s for c in vc]
        return (vp, vw, vc), (tp, tw, tn, tc + s)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(work, starts))
    else:
        results = [work(s) for s in starts]

    dim = active.dim
    vp = [a for r in results for a in r[0][0]] or [np.zeros((0, dim))]
    vw = [a for r in results for a in r[0][1]] or [np.zeros(0)]
    vc = [a for r in results for a in r[0][2]] or [np.zeros(0, dtype=np.int64)]
    vp, vw, vc = np.concatenate(vp), np.concatenate(vw), np.concatenate(vc)
    o = np.argsort(vc, kind="stable")
    tp = np.concatenate([r[1][0] for r in results] or [np.zeros((0, dim))])
    tw = np.concatenate([r[1][1] for r in results] or [np.zeros(0)])
    tn = np.concatenate([r[1][2] for r in results] or [np.zeros((0, dim))])
    tc = np.concatenate([r[1][3] for r in results] or [np.zeros(0, dtype=np.int64)])
    return BandQuadrature(vp[o], vw[o], vc[o], tp, tw, tn, tc)
