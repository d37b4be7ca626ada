"""Command-line driver: ``nbfem convergence|single|validate``.

Exit codes: 0 ok, 2 configuration error, 3 resource limit, 4 solver failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import postprocess, solver
from .errors import ConfigError, EmptyBand, NbfemError, NotConverged, ResourceLimit
from .experiments import PRESETS, get_preset, surface_residual
from .mesh import mesh_size

EXIT_OK, EXIT_CONFIG, EXIT_RESOURCE, EXIT_SOLVER = 0, 2, 3, 4


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--preset", choices=sorted(PRESETS), help="named experiment")
    p.add_argument("--config", help="JSON file with RunConfig fields; flags override it")
    p.add_argument("--gamma", type=float, help="band factor, d = gamma * h")
    p.add_argument("--mode", choices=["exact", "zero"], help="Hessian used in the coefficients")
    p.add_argument("--order", type=int, help="Lagrange element order")
    p.add_argument("--vol-degree", type=int, dest="vol_degree")
    p.add_argument("--trace-degree", type=int, dest="trace_degree")
    p.add_argument("--cg-tol", type=float, dest="cg_tol")
    p.add_argument("--cg-max-iter", type=int, dest="cg_max_iter")
    p.add_argument("--threads", type=int, help="worker threads (default: $NBFEM_THREADS or 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nbfem", description="Narrow-band unfitted FEM for surface PDEs")
    sub = parser.add_subparsers(dest="command", required=True)

    conv = sub.add_parser("convergence", help="run a sweep over refinement levels")
    _add_common(conv)
    conv.add_argument("--levels", help="level range a..b")
    conv.add_argument("--csv", help="write the CSV table to this path")
    conv.add_argument("--markdown", help="write the Markdown table to this path")
    conv.add_argument("--no-timing", action="store_true", help="omit the seconds column from the CSV")

    single = sub.add_parser("single", help="solve one level")
    _add_common(single)
    single.add_argument("--level", type=int, required=True)
    single.add_argument("--vtk", help="write the solution as legacy VTK")

    val = sub.add_parser("validate", help="check a configuration and the preset data without solving")
    _add_common(val)
    val.add_argument("--levels", help="level range a..b")
    return parser


def config_from_args(args) -> solver.RunConfig:
    base = solver.RunConfig.from_json(args.config) if args.config else solver.RunConfig()
    data = base.to_dict()
    for key in ("preset", "gamma", "mode", "order", "vol_degree", "trace_degree", "cg_tol", "cg_max_iter",
                "threads", "csv", "markdown", "vtk"):
        val = getattr(args, key, None)
        if val is not None:
            data[key] = val
    levels = getattr(args, "levels", None)
    if levels is not None:
        data["levels"] = solver.parse_levels(levels)
    if getattr(args, "level", None) is not None:
        data["levels"] = (args.level, args.level)
    if getattr(args, "threads", None) is None and not (args.config and "threads" in _json_keys(args.config)):
        data["threads"] = solver.default_threads()
    return solver.RunConfig.from_dict(data)


def _json_keys(path):
    with open(path) as fh:
        return set(json.load(fh))


def _header_lines(cfg) -> str:
    return "# config " + json.dumps(solver.effective_header(cfg), sort_keys=True)


def cmd_convergence(args, out) -> int:
    cfg = config_from_args(args).resolved()
    print(_header_lines(cfg), file=out)
    report = solver.run_convergence(cfg)
    csv_text = report.to_csv(timing=not args.no_timing)
    md = report.to_markdown()
    out.write(csv_text)
    print(file=out)
    print(md, file=out)
    if cfg.csv:
        _write_text(cfg.csv, csv_text)
    if cfg.markdown:
        _write_text(cfg.markdown, md + "\n")
    return EXIT_OK


def cmd_single(args, out) -> int:
    cfg = config_from_args(args).resolved()
    print(_header_lines(cfg), file=out)
    res = solver.solve_level(cfg, cfg.levels[0])
    r = res.row
    print(f"level={r.level} h={r.h:.6g} d={r.d:.6g} dofs={r.dofs}", file=out)
    print(f"l2_gamma={r.l2_gamma:.6e} h1_gamma={r.h1_gamma:.6e} h1_band={r.h1_band:.6e}", file=out)
    print(f"cg_iters={res.stats.iterations} residual={res.stats.residual:.3e} "
          f"converged={res.stats.converged} seconds={r.seconds:.3f}", file=out)
    if cfg.vtk:
        postprocess.export_vtk(cfg.vtk, res.space, res.solution)
        print(f"vtk={cfg.vtk}", file=out)
    return EXIT_OK


def cmd_validate(args, out) -> int:
    cfg = config_from_args(args).resolved()
    print(_header_lines(cfg), file=out)
    p = get_preset(cfg.preset)
    res = surface_residual(p)
    print(f"preset={p.name} pde_residual={res:.3e}", file=out)
    lo, hi = cfg.levels
    for lev in range(lo, hi + 1):
        h = mesh_size(p.dim, lev)
        est = solver.estimated_active_cells(p, h, cfg.gamma * h)
        print(f"level={lev} h={h:.6g} d={cfg.gamma * h:.6g} est_active_cells={est:.3g}", file=out)
    print("ok", file=out)
    return EXIT_OK


def _write_text(path, text):
    try:
        with open(path, "w") as fh:
            fh.write(text)
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc}") from exc


COMMANDS = {"convergence": cmd_convergence, "single": cmd_single, "validate": cmd_validate}


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args, out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ResourceLimit as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (NotConverged, EmptyBand) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except NbfemError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
