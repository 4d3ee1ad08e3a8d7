"""Command-line front end: mesh construction, single solves, spectral-radius
sweeps, and the benchmark tables.

Options can come from a `key = value` config file (--config) and are
overridden by explicit flags.  Every randomized run is fully determined by
--seed.  The exit code is 0 only if every requested case converged.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .bench import BenchCase, build_case_mesh, run_poisson_bench, solve_case
from .mesh import HANGING, INTERIOR, MASTER
from .meshes import FAMILY_NAMES, bench_square
from .meshio import write_solution_vtk, write_vtk
from .solver import SMOOTHERS, parse_config_text, solution_on_nodes
from .spectrum import spectrum_sweep, sweep_to_csv

STRATEGY_CHOICES = ("quadrant", "circle", "uniform", "random")


def _add_common(p):
    p.add_argument("--config", type=Path, default=None, help="key = value config file")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--levels", type=int, default=None)
    p.add_argument("--strategy", choices=STRATEGY_CHOICES, default=None)
    p.add_argument("--family", choices=sorted(FAMILY_NAMES), default=None)
    p.add_argument("--smoother", choices=SMOOTHERS, default=None)
    p.add_argument("--nu", type=int, default=None, help="pre and post smoothing count")
    p.add_argument("--omega", type=float, default=None)
    p.add_argument("--method", choices=("global", "bpwx"), default=None)
    p.add_argument("--rtol", type=float, default=None)
    p.add_argument("-v", "--verbose", action="store_true")


def _merge(args) -> dict:
    cfg = {}
    if args.config is not None:
        cfg = parse_config_text(Path(args.config).read_text())
    out = {
        "strategy": "quadrant", "family": "bilinear", "levels": 3,
        "smoother": "richardson-ilu0", "omega": 0.8, "nu_pre": 1, "nu_post": 1,
        "rtol": 1e-10, "eps": 1e-10, "seed": 0, "method": "global", "fraction": 0.5,
    }
    out.update(cfg)
    if args.strategy is not None:
        out["strategy"] = args.strategy
    if args.family is not None:
        out["family"] = args.family
    if args.levels is not None:
        out["levels"] = args.levels
    if args.smoother is not None:
        out["smoother"] = args.smoother
    if args.nu is not None:
        out["nu_pre"] = out["nu_post"] = args.nu
    if args.omega is not None:
        out["omega"] = args.omega
    if args.method is not None:
        out["method"] = args.method
    if args.rtol is not None:
        out["rtol"] = args.rtol
    out["seed"] = args.seed
    return out


def _case_from(cfg) -> BenchCase:
    return BenchCase(strategy=cfg["strategy"], family=cfg["family"],
                     levels=cfg["levels"], smoother=cfg["smoother"],
                     omega=cfg["omega"], nu_pre=cfg["nu_pre"], nu_post=cfg["nu_post"],
                     rtol=cfg["rtol"], seed=cfg["seed"], fraction=cfg["fraction"])


def cmd_mesh(args) -> int:
    cfg = _merge(args)
    if args.levels == 0:
        mesh = bench_square(cfg["family"])
    else:
        mesh = build_case_mesh(_case_from(cfg))
    args.out.mkdir(parents=True, exist_ok=True)
    summary = []
    for k, lev in enumerate(mesh.levels):
        counts = {
            "level": k,
            "elements": int(lev.n_elems),
            "nodes": int(lev.n_nodes),
            "interior": int((lev.klass == INTERIOR).sum()),
            "master": int((lev.klass == MASTER).sum()),
            "hanging": int((lev.klass == HANGING).sum()),
            "dirichlet": int(lev.dirichlet.sum()),
        }
        summary.append(counts)
        write_vtk(args.out / f"level_{k}.vtk", lev,
                  point_scalars={"classification": lev.klass.astype(np.int32)},
                  cell_scalars={"created": lev.created.astype(np.int32),
                                "depth": lev.depth.astype(np.int32)})
        if args.verbose:
            print(counts)
    (args.out / "mesh_summary.json").write_text(json.dumps(summary, indent=2))
    print(f"wrote {len(mesh.levels)} level files to {args.out}")
    return 0


def cmd_solve(args) -> int:
    cfg = _merge(args)
    case = _case_from(cfg)
    mesh, h, x, rep = solve_case(case)
    args.out.mkdir(parents=True, exist_ok=True)
    payload = json.loads(rep.to_json(strategy=case.strategy, family=case.family,
                                     levels=case.levels, seed=case.seed))
    (args.out / "solve_report.json").write_text(json.dumps(payload, indent=2))
    (args.out / "solve_report.csv").write_text(
        rep.CSV_HEADER + "\n" + rep.to_csv_row() + "\n")
    u = solution_on_nodes(h, x)
    write_solution_vtk(args.out / "solution.vtk", mesh.levels[-1], u)
    print(f"n10={rep.n10} rbar={None if rep.rbar is None else round(rep.rbar, 3)} "
          f"iterations={rep.iterations} converged={rep.converged}")
    return 0 if rep.converged else 1


def cmd_spectrum(args) -> int:
    cfg = _merge(args)
    methods = (cfg["method"],) if args.method else ("global", "bpwx")
    nus = (cfg["nu_pre"],) if args.nu else (1, 2, 4, 8)
    passes = max(cfg["levels"] - 2, 1)
    seeds = (cfg["seed"],)
    element = args.family if args.family else "biquadratic"
    reports = spectrum_sweep(element=element,
                             selective_passes=passes, seeds=seeds,
                             methods=methods, smoothings=nus,
                             omega=cfg["omega"] if args.omega else None)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "spectrum.csv").write_text(sweep_to_csv(reports))
    (args.out / "spectrum.json").write_text(
        json.dumps([json.loads(r.to_json()) for r in reports], indent=2))
    for r in reports:
        print(r.to_csv_row())
    return 0 if all(r.rho < 1.0 for r in reports) else 1


def cmd_bench(args) -> int:
    cfg = _merge(args)
    case = _case_from(cfg)
    table = run_poisson_bench(case)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "bench.csv").write_text(table.to_csv())
    (args.out / "bench.json").write_text(table.to_json())
    print(table.to_csv(), end="")
    return 0 if table.all_converged else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="hnmg",
        description="adaptive FEM with hanging-node constraints and Galerkin multigrid")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in [("mesh", cmd_mesh), ("solve", cmd_solve),
                     ("spectrum", cmd_spectrum), ("bench", cmd_bench)]:
        p = sub.add_parser(name)
        _add_common(p)
        p.set_defaults(fn=fn)
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
