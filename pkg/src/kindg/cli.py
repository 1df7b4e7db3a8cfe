"""Command line interface.

    kindg run      --config FILE [--workers N] [--scheduler eager|priority] [--deterministic] [--out DIR]
    kindg converge --config FILE --halvings K [--scheme NAME] [--csv FILE]
    kindg bench    --config FILE --workers 1,2,4 [--steps N] [--csv FILE]
    kindg graph    --config FILE --velocity I --dot FILE [--granularity macrocell|subcell] [--cell L]
    kindg mesh     --config FILE

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 result mismatch in bench.
"""
import argparse
import csv
import sys

import numpy as np

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_MISMATCH = 0, 2, 3, 4


def _parser():
    p = argparse.ArgumentParser(prog="kindg", description="Task-parallel implicit kinetic DG solver")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run the configured case")
    r.add_argument("--config", required=True)
    r.add_argument("--workers", type=int)
    r.add_argument("--scheduler", choices=("eager", "priority"))
    r.add_argument("--deterministic", action="store_true")
    r.add_argument("--out", help="output directory (VTK, CSV, run header)")

    c = sub.add_parser("converge", help="time convergence study on the gravity case")
    c.add_argument("--config", required=True)
    c.add_argument("--halvings", type=int, default=4)
    c.add_argument("--scheme")
    c.add_argument("--csv")

    b = sub.add_parser("bench", help="wall time per worker count, results cross-checked")
    b.add_argument("--config", required=True)
    b.add_argument("--workers", required=True, help="comma separated worker counts")
    b.add_argument("--steps", type=int)
    b.add_argument("--csv")

    g = sub.add_parser("graph", help="export a velocity's dependency graph as DOT")
    g.add_argument("--config", required=True)
    g.add_argument("--velocity", type=int, required=True)
    g.add_argument("--dot", required=True)
    g.add_argument("--granularity", choices=("macrocell", "subcell"), default="macrocell")
    g.add_argument("--cell", type=int)

    m = sub.add_parser("mesh", help="print the macromesh summary")
    m.add_argument("--config", required=True)
    return p


def _load(args):
    from .config import RunConfig
    cfg = RunConfig.from_json(args.config)
    changes = {}
    if getattr(args, "workers", None) is not None and args.command == "run":
        changes["workers"] = args.workers
    if getattr(args, "scheduler", None):
        changes["scheduler"] = args.scheduler
    if getattr(args, "deterministic", False):
        changes["deterministic"] = True
    if getattr(args, "out", None):
        changes["output.dir"] = args.out
    return cfg.replace(**changes) if changes else cfg


def _cmd_run(args):
    from . import cases
    cfg = _load(args)
    out = cfg.output.dir
    head = cases.run_header(cfg)
    print(f"# kindg {head['version']} case={cfg.case} scheme={cfg.scheme} dt={cfg.dt} "
          f"steps={cfg.n_steps} c={head['c']:.6g} backend={head['kernel_backend']}"
          + (f" mach={head['mach']:.4g}" if "mach" in head else ""))
    if cfg.case == "gravity":
        rep = cases.run_gravity_case(cfg, out_dir=out)
        print(f"t={rep.t:.6g} eps={rep.eps:.6e} errors={[f'{e:.3e}' for e in rep.errors]} "
              f"wall={rep.wall_time:.2f}s")
    else:
        res = cases.run_cylinder_case(cfg, out_dir=out)
        print(f"t={res.times[-1]:.6g} |u(x_c)|={res.u_xc[-1]:.4e} min rho={min(res.min_rho):.6f} "
              f"wall={res.wall_time:.2f}s snapshots={len(res.snapshots)}")
    return EXIT_OK


def _cmd_converge(args):
    from . import cases
    cfg = _load(args)
    if cfg.case != "gravity":
        print("converge needs the gravity case (analytic solution)", file=sys.stderr)
        return EXIT_CONFIG
    table = cases.convergence_study(cfg, args.halvings, args.scheme, args.csv)
    print("dt,eps")
    for r in table.rows:
        print(f"{r.dt:.6g},{r.eps:.6e}")
    print(f"# scheme={table.scheme} slope={'n/a' if table.slope is None else f'{table.slope:.3f}'} "
          f"status={table.status}")
    return EXIT_OK


def _cmd_bench(args):
    from . import cases
    cfg = _load(args)
    try:
        counts = [int(w) for w in args.workers.split(",") if w.strip()]
    except ValueError:
        print(f"bad --workers list {args.workers!r}", file=sys.stderr)
        return EXIT_CONFIG
    if not counts or min(counts) < 1:
        print("worker counts must be positive", file=sys.stderr)
        return EXIT_CONFIG
    rows = cases.scaling_bench(cfg, counts, args.steps)
    print("workers,wall_s,speedup,efficiency")
    for r in rows:
        print(f"{r['workers']},{r['wall_s']:.4f},{r['speedup']:.3f},{r['efficiency']:.3f}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
    return EXIT_OK


def _cmd_graph(args):
    from .cases import build_mesh, build_model
    from .graph import build_dep_graph, parallel_levels, to_dot, topological_order
    cfg = _load(args)
    model = build_model(cfg)
    if not 0 <= args.velocity < model.n_v:
        print(f"velocity index must be in [0, {model.n_v})", file=sys.stderr)
        return EXIT_CONFIG
    mesh = build_mesh(cfg)
    v = model.velocities[args.velocity]
    g = build_dep_graph(mesh, v, args.granularity, cell=args.cell)
    levels = parallel_levels(g, topological_order(g))
    with open(args.dot, "w") as fh:
        fh.write(to_dot(g))
    print(f"velocity {args.velocity} = {np.round(v, 12).tolist()}: {g.n_vertices} vertices, "
          f"{len(g.edges)} edges, {len(levels)} levels")
    for k, lv in enumerate(levels):
        print(f"level {k}: {list(lv)}")
    return EXIT_OK


def _cmd_mesh(args):
    from .cases import build_mesh
    print(build_mesh(_load(args)).summary())
    return EXIT_OK


def main(argv=None):
    from .cases import ResultMismatch
    from .config import ConfigError
    from .graph import CycleDetected
    from .kinetic import NonpositiveDensity, PicardDiverged, UnknownModel
    from .mesh import DegenerateBox, NonConformalInterface
    from .transport import SingularBlock

    args = _parser().parse_args(argv)
    handlers = {"run": _cmd_run, "converge": _cmd_converge, "bench": _cmd_bench,
                "graph": _cmd_graph, "mesh": _cmd_mesh}
    try:
        return handlers[args.command](args)
    except (ConfigError, DegenerateBox, NonConformalInterface, UnknownModel) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NonpositiveDensity, PicardDiverged, SingularBlock, CycleDetected, FloatingPointError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ResultMismatch as exc:
        print(f"result mismatch: {exc}", file=sys.stderr)
        return EXIT_MISMATCH


if __name__ == "__main__":
    sys.exit(main())
