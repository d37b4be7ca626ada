"""Reproduce the convergence tables for the bundled presets.

    python3 scripts/convergence_tables.py                 # all studies
    python3 scripts/convergence_tables.py circle sphere   # a subset
    python3 scripts/convergence_tables.py --out results/  # also write CSV/Markdown

Each study is a dataclass config; edit STUDIES to change levels or band factors.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from nbfem import solver


@dataclass
class Study:
    name: str
    preset: str
    levels: tuple
    gamma: float
    mode: str = "exact"
    threads: int = 1
    # reference (level, l2, h1) triples from the published tables, for side-by-side output
    reference: list = field(default_factory=list)

    def config(self) -> solver.RunConfig:
        return solver.RunConfig(preset=self.preset, levels=self.levels, gamma=self.gamma, mode=self.mode,
                                threads=self.threads)


STUDIES = [
    Study("circle", "circle", (2, 8), 5.0, reference=[(4, 2.34e-4, 7.98e-2)]),
    Study("circle-zero-d1", "circle", (2, 8), 1.0, mode="zero"),
    Study("circle-zero-d5", "circle", (2, 8), 5.0, mode="zero"),
    Study("sphere", "sphere", (0, 3), 1.0, reference=[(3, 8.98e-3, 8.08e-2)]),
    Study("torus", "torus", (1, 3), 1.0, reference=[(3, 4.95e-3, 6.30e-1)]),
    Study("torus-zero", "torus", (1, 3), 1.0, mode="zero"),
    Study("circle-p2", "circle-p2", (1, 4), 3.0, reference=[(2, 2.31e-5, 5.29e-3)]),
    Study("circle-p3", "circle-p3", (1, 3), 3.0, reference=[(2, 3.24e-7, 1.04e-4)]),
]


def run(study: Study, out: Path | None) -> None:
    print(f"== {study.name}: preset={study.preset} levels={study.levels} gamma={study.gamma} mode={study.mode}",
          flush=True)
    t0 = time.perf_counter()

    def progress(row):
        print(f"   level {row.level}: dofs={row.dofs} L2={row.l2_gamma:.3e} H1={row.h1_gamma:.3e} "
              f"cg={row.cg_iters} {row.seconds:.1f}s", flush=True)

    rep = solver.run_convergence(study.config(), progress=progress)
    print(rep.to_markdown())
    for level, l2, h1 in study.reference:
        row = next((r for r in rep.rows if r.level == level), None)
        if row is not None:
            print(f"   reference level {level}: L2 {l2:.2e} (ours {row.l2_gamma:.2e}), "
                  f"H1 {h1:.2e} (ours {row.h1_gamma:.2e})")
    print(f"   total {time.perf_counter() - t0:.1f}s\n", flush=True)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{study.name}.csv").write_text(rep.to_csv())
        (out / f"{study.name}.md").write_text(rep.to_markdown() + "\n")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("names", nargs="*", help="study names (default: all)")
    ap.add_argument("--out", type=Path, help="directory for CSV and Markdown tables")
    args = ap.parse_args(argv)
    known = {s.name: s for s in STUDIES}
    unknown = [n for n in args.names if n not in known]
    if unknown:
        ap.error(f"unknown studies {unknown}; choose from {list(known)}")
    for s in (known[n] for n in args.names) if args.names else STUDIES:
        run(s, args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
