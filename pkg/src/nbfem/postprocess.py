"""Error norms, convergence orders, report tables and legacy-VTK output."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import levelset
from .errors import IoError, NoTraceCells, NonPositiveError
from .fem import evaluate_points


@dataclass
class ErrorNorms:
    l2_gamma: float
    h1_gamma: float
    h1_band: float = float("nan")


def _extension_gradient(surface, x, grad_u):
    """grad u^e(x) = (I - phi H) grad_Gamma u(p(x))."""
    phi = surface.phi(x)
    dim = x.shape[-1]
    m = np.eye(dim) - phi[:, None, None] * surface.hess(x)
    foot = levelset.closest_point(surface, x)
    return np.einsum("qij,qj->qi", m, grad_u(foot)), foot


def surface_errors(u_h, space, quad, surface, u, grad_u) -> ErrorNorms:
    """L2(Gamma) and H1(Gamma) errors measured on Gamma_h with the mu lift.

    The H1 value is the full norm: sqrt(l2^2 + |P(grad u^e - grad u_h)|^2).
    """
    if len(quad.trace_weights) == 0:
        raise NoTraceCells("no active cell carries a piece of Gamma_h")
    x = quad.trace_points
    vh, gh = evaluate_points(space, u_h, quad.trace_cell, x)
    gue, foot = _extension_gradient(surface, x, grad_u)
    ue = u(foot)
    n = surface.grad(x)
    diff = gue - gh
    tang = diff - np.sum(diff * n, axis=1)[:, None] * n
    w = quad.trace_weights * levelset.area_factor(surface, x)
    l2sq = float(np.sum(w * (ue - vh) ** 2))
    semi = float(np.sum(w * np.sum(tang**2, axis=1)))
    return ErrorNorms(l2_gamma=math.sqrt(l2sq), h1_gamma=math.sqrt(l2sq + semi))


def band_h1_error(u_h, space, quad, surface, u, grad_u) -> float:
    """||u^e - u_h||_{H1(Omega_h)} with the normal extension of the exact solution."""
    x = quad.vol_points
    vh, gh = evaluate_points(space, u_h, quad.vol_cell, x)
    gue, foot = _extension_gradient(surface, x, grad_u)
    ue = u(foot)
    val = np.sum(quad.vol_weights * ((ue - vh) ** 2 + np.sum((gue - gh) ** 2, axis=1)))
    return float(math.sqrt(val))


def compute_eoc(errors, hs):
    """Orders log(e_{k-1}/e_k) / log(h_{k-1}/h_k) for k >= 1."""
    errors = [float(e) for e in errors]
    hs = [float(h) for h in hs]
    if len(errors) != len(hs) or len(errors) < 2:
        raise ValueError("need matching error and mesh-size lists of length >= 2")
    if min(errors) <= 0 or min(hs) <= 0:
        raise NonPositiveError("errors and mesh sizes must be positive")
    return [math.log(errors[k - 1] / errors[k]) / math.log(hs[k - 1] / hs[k]) for k in range(1, len(errors))]


@dataclass
class LevelRow:
    level: int
    h: float
    d: float
    dofs: int
    l2_gamma: float
    h1_gamma: float
    h1_band: float
    cg_iters: int
    residual: float
    seconds: float
    eoc_l2: float | None = None
    eoc_h1: float | None = None
    eoc_band: float | None = None


CSV_COLUMNS = ["level", "h", "d", "dofs", "l2_gamma", "eoc_l2", "h1_gamma", "eoc_h1", "h1_band",
               "cg_iters", "seconds"]


@dataclass
class ConvergenceReport:
    rows: list = field(default_factory=list)
    header: dict = field(default_factory=dict)

    def add(self, row: LevelRow) -> None:
        self.rows.append(row)
        self._fill_eoc()

    def _fill_eoc(self):
        for col, eoc in (("l2_gamma", "eoc_l2"), ("h1_gamma", "eoc_h1"), ("h1_band", "eoc_band")):
            for k, row in enumerate(self.rows):
                if k == 0:
                    setattr(row, eoc, None)
                    continue
                prev = self.rows[k - 1]
                a, b = getattr(prev, col), getattr(row, col)
                if a > 0 and b > 0:
                    setattr(row, eoc, compute_eoc([a, b], [prev.h, row.h])[0])

    def column(self, name):
        return [getattr(r, name) for r in self.rows]

    def to_csv(self, timing: bool = True) -> str:
        buf = io.StringIO()
        cols = CSV_COLUMNS if timing else [c for c in CSV_COLUMNS if c != "seconds"]
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in self.rows:
            d = asdict(r)
            w.writerow([_fmt_csv(d[c]) for c in cols])
        return buf.getvalue()

    def to_markdown(self) -> str:
        lines = []
        for k, v in self.header.items():
            lines.append(f"<!-- {k}: {v} -->")
        lines.append("| level | h | d | #dof | L2(Gamma) | eoc | H1(Gamma) | eoc | H1(band) | eoc | CG it | s |")
        lines.append("|---|---|---|---|---|---|---|---|---|---|---|---|")
        for r in self.rows:
            lines.append(
                f"| {r.level} | {r.h:.3e} | {r.d:.3e} | {r.dofs} | {r.l2_gamma:.2e} | {_fmt_eoc(r.eoc_l2)} "
                f"| {r.h1_gamma:.2e} | {_fmt_eoc(r.eoc_h1)} | {r.h1_band:.2e} | {_fmt_eoc(r.eoc_band)} "
                f"| {r.cg_iters} | {r.seconds:.1f} |")
        return "\n".join(lines)


def _fmt_csv(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.12e}"
    return str(v)


def _fmt_eoc(v):
    return "" if v is None else f"{v:.2f}"


# ---------------------------------------------------------------------------
# legacy VTK

VTK_CELL_TYPE = {2: 5, 3: 10}


def write_vtk(path, points, cells, point_data=None, cell_data=None, title="nbfem"):
    """Write an ASCII legacy-VTK unstructured grid of simplices."""
    points = np.asarray(points, dtype=float).reshape(-1, np.shape(points)[-1] if np.size(points) else 3)
    cells = np.asarray(cells, dtype=np.int64)
    if points.shape[1] < 3:
        points = np.hstack([points, np.zeros((len(points), 3 - points.shape[1]))])
    npts = len(points)
    ncells = len(cells)
    nv = cells.shape[1] if cells.ndim == 2 and ncells else 3
    ctype = VTK_CELL_TYPE.get(nv - 1, 5)
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(f"{title}\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {npts} double\n")
        np.savetxt(fh, points, fmt="%.17g")
        fh.write(f"CELLS {ncells} {ncells * (nv + 1)}\n")
        if ncells:
            np.savetxt(fh, np.hstack([np.full((ncells, 1), nv), cells]), fmt="%d")
        fh.write(f"CELL_TYPES {ncells}\n")
        if ncells:
            np.savetxt(fh, np.full(ncells, ctype), fmt="%d")
        if point_data:
            fh.write(f"POINT_DATA {npts}\n")
            for name, vals in point_data.items():
                fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                np.savetxt(fh, np.asarray(vals, dtype=float), fmt="%.17g")
        if cell_data:
            fh.write(f"CELL_DATA {ncells}\n")
            for name, vals in cell_data.items():
                fh.write(f"SCALARS {name} int 1\nLOOKUP_TABLE default\n")
                np.savetxt(fh, np.asarray(vals, dtype=np.int64), fmt="%d")


def read_vtk(path):
    """Parse files produced by :func:`write_vtk`; returns a dict of arrays."""
    with open(path) as fh:
        tokens = fh.read().split()
    out = {"point_data": {}, "cell_data": {}}
    i = tokens.index("POINTS")
    npts = int(tokens[i + 1])
    i += 3
    out["points"] = np.array(tokens[i:i + 3 * npts], dtype=float).reshape(npts, 3)
    i = tokens.index("CELLS", i)
    ncells, size = int(tokens[i + 1]), int(tokens[i + 2])
    raw = np.array(tokens[i + 3:i + 3 + size], dtype=np.int64)
    nv = raw[0] if ncells else 0
    out["cells"] = raw.reshape(ncells, nv + 1)[:, 1:] if ncells else np.zeros((0, 0), dtype=np.int64)
    i = tokens.index("CELL_TYPES", i)
    out["cell_types"] = np.array(tokens[i + 2:i + 2 + ncells], dtype=np.int64)
    i += 2 + ncells
    section, count = None, 0
    while i < len(tokens):
        tok = tokens[i]
        if tok in ("POINT_DATA", "CELL_DATA"):
            section = "point_data" if tok == "POINT_DATA" else "cell_data"
            count = int(tokens[i + 1])
            i += 2
        elif tok == "SCALARS":
            name, dtype = tokens[i + 1], tokens[i + 2]
            i += 4 if tokens[i + 3] != "LOOKUP_TABLE" else 3
            i += 2  # LOOKUP_TABLE default
            out[section][name] = np.array(tokens[i:i + count], dtype=float if dtype == "double" else np.int64)
            i += count
        else:
            i += 1
    return out


def export_vtk(path, space, u_h, active=None):
    """Active cells with point fields u_h and phi and cell field ``class``.

    Only cell vertices are written; for P1 they are exactly the dofs.
    """
    if space is None:
        _write(path, np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64), None, None)
        return
    active = active if active is not None else space.active
    dim = active.dim
    nv = dim + 1
    vdofs = space.cell_dofs[:, :nv]
    used = np.unique(vdofs)
    remap = np.full(space.num_dofs, -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    pts = space.dof_coords[used]
    phi = active.levelset.surface.phi(pts)
    _write(path, pts, remap[vdofs], point_data={"u_h": np.asarray(u_h)[used], "phi": phi},
           cell_data={"class": active.cell_class.astype(np.int64)})


def _write(path, pts, cells, point_data, cell_data):
    try:
        write_vtk(path, pts, cells, point_data=point_data, cell_data=cell_data)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
