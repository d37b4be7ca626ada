"""Measure of the discrete surface and of the band versus refinement.

    python3 scripts/geometry_convergence.py

Prints |Gamma_h|, its error against the analytic value, the observed order,
and the band volume against 2 d |Gamma| for every surface.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from nbfem import cutgeom, mesh
from nbfem.levelset import Circle, Sphere, Torus


@dataclass
class GeometryStudy:
    name: str
    surface: object
    levels: tuple
    gamma: float = 1.0
    order: int = 1

    @property
    def exact(self) -> float:
        return self.surface.measure


STUDIES = [
    GeometryStudy("circle", Circle(1.0), (2, 3, 4, 5, 6)),
    GeometryStudy("sphere", Sphere(1.0), (0, 1, 2)),
    GeometryStudy("torus", Torus(1.0, 0.6), (0, 1, 2)),
]


def run(study: GeometryStudy) -> None:
    dim = study.surface.dim
    prev = None
    print(f"== {study.name} (exact {study.exact:.10f})")
    print("   level        h   |Gamma_h|        error   order   |band|/(2d|Gamma|)")
    for lev in study.levels:
        m = mesh.build_background_mesh(dim, (-2.0, 2.0), lev)
        d = study.gamma * m.h
        act = mesh.select_active_cells(m, mesh.interpolate_levelset(m, study.surface, study.order), d)
        q = cutgeom.build_band_quadrature(act, 2, 4)
        err = abs(q.surface_measure - study.exact)
        order = "" if prev is None else f"{np.log(prev[1] / err) / np.log(prev[0] / m.h):6.2f}"
        print(f"   {lev:5d} {m.h:8.5f} {q.surface_measure:11.7f} {err:12.3e} {order:>7} "
              f"{q.band_measure / (2 * d * study.exact):12.6f}")
        prev = (m.h, err)


if __name__ == "__main__":
    for s in STUDIES:
        run(s)
