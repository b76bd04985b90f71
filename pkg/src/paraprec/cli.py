"""Command-line driver: sketch-size tables, preconditioner construction,
greedy experiments, parameter sweeps, and surrogate inspection."""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import __version__
from .bench import assemble_adr, synthetic_multiparam
from .eim import eim
from .coeffs import tabulate
from .errors import ParaprecError
from .greedy import build_preconditioner, greedy_frob
from .mmio import import_problem
from .reduction import rb_greedy, singular_bounds
from .sketch import make_sketch, min_sketch_columns

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

_CSV_SCHEMA = {
    "greedy": "greedy-history-v1",
    "sweep": "sweep-v1",
}


@dataclass
class ExperimentConfig:
    """Validated experiment description (JSON)."""

    problem: dict = field(default_factory=lambda: {"name": "adr", "mesh_side": 20})
    sketch: dict = field(default_factory=lambda: {"kind": "psrht", "K": 64, "seed": 0})
    constraint: str = "none"
    strategy: str = "frob-residual"
    iterations: int = 5
    output_dir: str = "out"
    seed: int = 0
    mode: str = "precond-reuse"
    diagnostics: bool = False

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}:{exc.lineno}: {exc.msg}") from exc
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**raw)


class ConfigError(Exception):
    pass


def _load_problem(spec):
    name = spec.get("name")
    if name == "adr":
        return assemble_adr(spec.get("mesh_side", 20), spec.get("D", 50.0),
                            n_grid=spec.get("n_grid", 250))
    if name == "synthetic":
        return synthetic_multiparam(spec.get("d", 2), spec.get("n", 200),
                                    spec.get("m_A", 3), seed=spec.get("seed", 0))
    if name == "import":
        op, rhs, grid, R_X, meta = import_problem(spec["path"])
        from .bench import BenchmarkProblem
        from .operators import identity_norm
        return BenchmarkProblem(op=op, rhs=rhs, grid=grid,
                                R_X=R_X or identity_norm(op.dim), metadata=meta)
    raise ConfigError(f"unknown problem name {name!r}")


def _sketch_for(problem, spec):
    return make_sketch(spec.get("kind", "psrht"), problem.op.dim,
                       spec.get("K", 64), seed=spec.get("seed", 0))


def cmd_sketch_bounds(args):
    K = min_sketch_columns(args.dist, args.n, args.m, args.ratio, args.delta)
    print(f"dist={args.dist} n={args.n} m={args.m} ratio={args.ratio} "
          f"delta={args.delta} -> K={K}")
    return EXIT_OK


def cmd_build_precond(args):
    cfg = ExperimentConfig.from_json(args.config)
    problem = _load_problem(cfg.problem)
    V = _sketch_for(problem, cfg.sketch)
    pts = [problem.grid[j] for j in
           np.linspace(0, len(problem.grid) - 1, cfg.iterations).astype(int)]
    pre = build_preconditioner(problem.op, pts, V, problem.grid,
                               constraint=cfg.constraint)
    os.makedirs(cfg.output_dir, exist_ok=True)
    out = os.path.join(cfg.output_dir, "precond.json")
    with open(out, "w") as fh:
        json.dump({"points": [list(np.atleast_1d(p)) for p in pre.basis.points],
                   "constraint": cfg.constraint, "m": pre.m}, fh, indent=2)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_greedy_precond(args):
    cfg = ExperimentConfig.from_json(args.config)
    problem = _load_problem(cfg.problem)
    V = _sketch_for(problem, cfg.sketch)
    seed_point = problem.grid[0] if args.seed_point else None
    pre = greedy_frob(problem.op, problem.rhs, problem.grid, V, cfg.iterations,
                      constraint=cfg.constraint, seed_point=seed_point,
                      diagnostics=cfg.diagnostics)
    os.makedirs(cfg.output_dir, exist_ok=True)
    out = os.path.join(cfg.output_dir, "greedy_history.csv")
    with open(out, "w") as fh:
        fh.write(f"# schema: {_CSV_SCHEMA['greedy']}\n")
        fh.write("m,xi_selected,sup_sketch_residual,sup_kappa\n")
        for rec in pre.history:
            kap = "" if rec.sup_kappa is None else repr(rec.sup_kappa)
            fh.write(f"{rec.m},{rec.xi_selected!r},{rec.sup_sketch_residual!r},{kap}\n")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_rb_greedy(args):
    cfg = ExperimentConfig.from_json(args.config)
    problem = _load_problem(cfg.problem)
    V = _sketch_for(problem, cfg.sketch)
    model, trace, pre = rb_greedy(problem.op, problem.rhs, problem.grid,
                                  cfg.iterations, cfg.mode, R_X=problem.R_X,
                                  V=V, constraint=cfg.constraint)
    os.makedirs(cfg.output_dir, exist_ok=True)
    out = os.path.join(cfg.output_dir, "rb_trace.csv")
    trace.to_csv(out)
    print(f"wrote {out} (status: {trace.status})")
    return EXIT_OK


def cmd_sweep(args):
    cfg = ExperimentConfig.from_json(args.config)
    problem = _load_problem(cfg.problem)
    V = _sketch_for(problem, cfg.sketch)
    pts = [problem.grid[j] for j in
           np.linspace(0, len(problem.grid) - 1, cfg.iterations).astype(int)]
    pre = build_preconditioner(problem.op, pts, V, problem.grid,
                               constraint=cfg.constraint)
    os.makedirs(cfg.output_dir, exist_ok=True)
    out = os.path.join(cfg.output_dir, "sweep.csv")
    with open(out, "w") as fh:
        fh.write(f"# schema: {_CSV_SCHEMA['sweep']}\n")
        fh.write("xi,sketch_residual,kappa\n")
        for xi in problem.grid:
            res = pre.sketch_residual(xi)
            if cfg.diagnostics and problem.op.dim <= 2000:
                kap = singular_bounds(xi, pre, None)[2]
            else:
                kap = ""
            fh.write(f"{xi!r},{res!r},{kap!r}\n")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_eim_inspect(args):
    cfg = ExperimentConfig.from_json(args.config)
    problem = _load_problem(cfg.problem)
    phi = tabulate(problem.op.coeffs, problem.grid)
    model = eim(phi, problem.grid)
    print(f"rank={model.rank}")
    for k, (i, j) in enumerate(zip(model.magic_func_indices,
                                   model.magic_grid_indices)):
        print(f"  k={k + 1} func={i} point={problem.grid[j]}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="paraprec",
                                description="Interpolated-inverse preconditioning "
                                            "and model reduction experiments")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    sb = sub.add_parser("sketch-bounds", help="minimum sketch-column tables")
    sb.add_argument("--dist", choices=["rademacher", "psrht"], required=True)
    sb.add_argument("--n", type=int, required=True)
    sb.add_argument("--m", type=int, required=True)
    sb.add_argument("--ratio", type=float, default=10.0)
    sb.add_argument("--delta", type=float, default=1e-3)
    sb.set_defaults(func=cmd_sketch_bounds)

    for name, fn in (("build-precond", cmd_build_precond),
                     ("greedy-precond", cmd_greedy_precond),
                     ("rb-greedy", cmd_rb_greedy),
                     ("sweep", cmd_sweep),
                     ("eim-inspect", cmd_eim_inspect)):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True)
        if name == "greedy-precond":
            sp.add_argument("--seed-point", action="store_true",
                            help="seed the first point at the start of the grid")
        sp.set_defaults(func=fn)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ParaprecError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
