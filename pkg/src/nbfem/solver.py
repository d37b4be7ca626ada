"""Run configuration and the per-level solve pipeline.

One level is: background mesh -> active cells -> band quadrature -> space ->
assembly -> CG -> error norms.  :func:`run_convergence` loops over levels and
collects a :class:`~nbfem.postprocess.ConvergenceReport`.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
import time
from dataclasses import dataclass

import numpy as np

from . import cutgeom, fem, mesh, postprocess
from .errors import ConfigError, NotConverged, ResourceLimit
from .experiments import get_preset
from .levelset import BandSpec, CoefficientMode
from .linalg import cg_solve, default_max_iter

MAX_LEVEL = {2: 10, 3: 5}
ACTIVE_CELL_CAP = 4_000_000


def default_threads() -> int:
    raw = os.environ.get("NBFEM_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"NBFEM_THREADS must be an integer, got {raw!r}") from None


@dataclass
class RunConfig:
    preset: str = "circle"
    levels: tuple | None = None
    gamma: float | None = None
    mode: str | None = None
    order: int | None = None
    vol_degree: int | None = None
    trace_degree: int | None = None
    cg_tol: float = 1e-12
    cg_max_iter: int | None = None
    csv: str | None = None
    markdown: str | None = None
    vtk: str | None = None
    threads: int = 1
    subcell_adaptive: bool = True
    subcell_factor: float = 1.0

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        data = dict(data)
        if isinstance(data.get("levels"), str):
            data["levels"] = parse_levels(data["levels"])
        elif data.get("levels") is not None:
            data["levels"] = tuple(int(v) for v in data["levels"])
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        try:
            with open(path) as fh:
                return cls.from_dict(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc

    def resolved(self) -> "RunConfig":
        """Fill unset fields from the preset defaults and validate."""
        p = get_preset(self.preset)
        order = self.order if self.order is not None else p.order
        cfg = dataclasses.replace(
            self,
            levels=tuple(self.levels) if self.levels is not None else tuple(p.levels),
            gamma=float(self.gamma) if self.gamma is not None else p.gamma,
            mode=CoefficientMode.parse(self.mode if self.mode is not None else p.mode).value,
            order=order,
            vol_degree=self.vol_degree if self.vol_degree is not None else 2 * order,
            trace_degree=self.trace_degree if self.trace_degree is not None else 2 * order + 2,
        )
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        if out["levels"] is not None:
            out["levels"] = list(out["levels"])
        return out

    def validate(self) -> None:
        """Checks that need no mesh allocation."""
        p = get_preset(self.preset)
        dim = p.dim
        lo, hi = self.levels
        if lo < 0 or hi < lo:
            raise ConfigError(f"invalid level range {lo}..{hi}")
        if hi > MAX_LEVEL[dim]:
            raise ResourceLimit(f"level {hi} exceeds the cap {MAX_LEVEL[dim]} for {dim}D runs")
        if self.order not in (1, 2, 3) or (dim == 3 and self.order != 1):
            raise ConfigError(f"element order {self.order} is not supported in {dim}D")
        if self.order > 1 and p.geometry_order < self.order:
            raise ConfigError(f"P{self.order} needs a geometry order >= {self.order}")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if not self.cg_tol > 0:
            raise ConfigError("cg_tol must be positive")
        for lev in range(lo, hi + 1):
            h = mesh.mesh_size(dim, lev)
            BandSpec.for_mesh(p.surface, self.gamma, h)
            est = estimated_active_cells(p, h, self.gamma * h)
            if est > ACTIVE_CELL_CAP:
                raise ResourceLimit(f"level {lev}: about {est:.3g} active cells (cap {ACTIVE_CELL_CAP})")


def parse_levels(text: str) -> tuple:
    try:
        if ".." in text:
            a, b = text.split("..")
            return int(a), int(b)
        v = int(text)
        return v, v
    except ValueError:
        raise ConfigError(f"levels must look like 'a..b', got {text!r}") from None


def estimated_active_cells(preset, h: float, d: float) -> float:
    """Band volume |Gamma| * 2(d + h*sqrt(dim)) over the cell volume."""
    dim = preset.dim
    per = len(mesh.TEMPLATES[dim])
    width = 2.0 * (d + h * math.sqrt(dim))
    return preset.surface.measure * width / h**dim * per


@dataclass
class LevelResult:
    row: postprocess.LevelRow
    space: object
    solution: np.ndarray
    quad: object
    stats: object


def solve_level(cfg: RunConfig, level: int) -> LevelResult:
    """Full pipeline for one refinement level of a resolved config."""
    t0 = time.perf_counter()
    p = get_preset(cfg.preset)
    bg = mesh.build_background_mesh(p.dim, p.box, level)
    band = BandSpec.for_mesh(p.surface, cfg.gamma, bg.h)
    q = cfg.order if cfg.order > 1 else 1
    ls = mesh.interpolate_levelset(bg, p.surface, q)
    sub = p.subcell_size(bg.h) * cfg.subcell_factor if q > 1 else None
    active = mesh.select_active_cells(bg, ls, band.d, subcell_size=sub, adaptive=cfg.subcell_adaptive)
    quad = cutgeom.build_band_quadrature(active, cfg.vol_degree, cfg.trace_degree, subcell_size=sub,
                                         adaptive=cfg.subcell_adaptive, threads=cfg.threads)
    space = fem.build_space(active, cfg.order)
    system = fem.assemble(space, p.surface, cfg.mode, p.alpha, p.f, quad, threads=cfg.threads)
    max_iter = cfg.cg_max_iter
    if max_iter is None:
        max_iter = int(p.cg_iter_scale * default_max_iter(space.num_dofs))
    u_h, stats = cg_solve(system.matrix, system.rhs, tol=cfg.cg_tol, max_iter=max_iter)
    if not stats.converged:
        raise NotConverged(f"level {level}: CG stopped after {stats.iterations} iterations at "
                           f"relative residual {stats.residual:.3e}", x=u_h, stats=stats)
    norms = postprocess.surface_errors(u_h, space, quad, p.surface, p.u, p.grad_u)
    h1_band = postprocess.band_h1_error(u_h, space, quad, p.surface, p.u, p.grad_u)
    seconds = time.perf_counter() - t0
    row = postprocess.LevelRow(level=level, h=bg.h, d=band.d, dofs=space.num_dofs, l2_gamma=norms.l2_gamma,
                               h1_gamma=norms.h1_gamma, h1_band=h1_band, cg_iters=stats.iterations,
                               residual=stats.residual, seconds=seconds)
    return LevelResult(row, space, u_h, quad, stats)


def run_convergence(cfg: RunConfig, progress=None) -> postprocess.ConvergenceReport:
    cfg = cfg.resolved()
    report = postprocess.ConvergenceReport(header=effective_header(cfg))
    lo, hi = cfg.levels
    for level in range(lo, hi + 1):
        res = solve_level(cfg, level)
        report.add(res.row)
        if progress is not None:
            progress(res.row)
    return report


def effective_header(cfg: RunConfig) -> dict:
    d = cfg.to_dict()
    d["levels"] = f"{cfg.levels[0]}..{cfg.levels[1]}"
    return {k: v for k, v in d.items() if v is not None}
