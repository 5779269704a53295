"""Command line front end.

Subcommands: ``run`` executes a scenario JSON and writes its artifacts,
``theta`` evaluates the Holder exponent formula, ``ineq`` sweeps one
pointwise inequality and prints the verdict JSON, ``solve`` runs a
Dirichlet problem file, and ``analyze`` fits a Holder exponent to a
solution CSV. Exit code 0 means every assertion of the command passed.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys

import numpy as np

from . import __version__


def _q_value(text: str) -> float:
    return math.inf if str(text).lower() in ("inf", "oo") else float(text)


def _floats(text: str) -> list:
    return [float(tok) for tok in str(text).split(",") if tok.strip()]


def _cmd_run(args) -> int:
    from .experiments import load_scenario, run_scenario

    cfg = load_scenario(args.scenario)
    out_dir = args.out or os.path.dirname(os.path.abspath(args.scenario))
    report = run_scenario(cfg, out_dir=out_dir)
    for c in report["checks"]:
        print(f"[{'PASS' if c['passed'] else 'FAIL'}] {report['scenario']}: {c['name']}")
    print(f"report: {report['report_path']}")
    return 0 if report["passed"] else 1


def _cmd_theta(args) -> int:
    from .params import Params, theta_exponent, theta_regime

    params = Params(N=args.N, s=args.s, p=args.p, q=_q_value(args.q))
    homog = Params(N=args.N, s=args.s, p=args.p, q=math.inf)
    out = {
        "N": params.N, "s": params.s, "p": params.p,
        "q": "inf" if math.isinf(params.q) else params.q,
        "theta": theta_exponent(params),
        "regime": theta_regime(params),
        "theta_homogeneous": theta_exponent(homog),
    }
    print(json.dumps(out, indent=2, sort_keys=True))
    return 0


def _cmd_ineq(args) -> int:
    from .inequalities import sweep

    verdict = sweep(args.id, args.n, seed=args.seed, p=args.p, q=args.q,
                    gamma=args.gamma, C=args.C)
    print(verdict.to_json())
    return 0 if verdict.violations == 0 else 1


def _cmd_solve(args) -> int:
    from .solver import load_problem, solve_dirichlet

    problem, opts = load_problem(args.problem)
    report = solve_dirichlet(problem, **opts)
    stem = os.path.splitext(os.path.basename(args.problem))[0]
    out_dir = args.out or os.path.dirname(os.path.abspath(args.problem))
    os.makedirs(out_dir, exist_ok=True)
    report_path = os.path.join(out_dir, f"{stem}_report.json")
    csv_path = os.path.join(out_dir, f"{stem}_solution.csv")
    with open(report_path, "w") as fh:
        fh.write(report.to_json() + "\n")
    with open(csv_path, "w") as fh:
        fh.write(report.values_csv())
    print(report.to_json())
    print(f"solution: {csv_path}", file=sys.stderr)
    return 0 if report.converged else 1


def _read_values_csv(path):
    """Rebuild a GridFunction from a solution CSV (columns x0[,x1],value)."""
    from .grid import Grid, GridFunction

    with open(path) as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(cell) for cell in row] for row in reader if row]
    n_dim = len(header) - 1
    if header[-1] != "value" or n_dim not in (1, 2):
        raise ValueError(f"expected columns x0[,x1],value, got {header}")
    data = np.array(rows, dtype=float)
    coords, vals = data[:, :n_dim], data[:, n_dim]
    axes = [np.unique(coords[:, d]) for d in range(n_dim)]
    m = len(axes[0])
    if any(len(a) != m for a in axes) or len(vals) != m**n_dim:
        raise ValueError("values must fill a square lattice (same nodes per axis)")
    grid = Grid(tuple(a[0] for a in axes), tuple(a[-1] for a in axes), m)
    order = np.lexsort(tuple(coords[:, d] for d in range(n_dim - 1, -1, -1)))
    return GridFunction(grid, vals[order].reshape(grid.shape))


def _cmd_analyze(args) -> int:
    from .seminorms import fit_holder_exponent

    u = _read_values_csv(args.values)
    g = u.grid
    if not args.fit_exponent:
        out = {
            "N": g.N, "nodes_per_axis": g.nodes_per_axis,
            "lo": list(g.lo), "hi": list(g.hi), "spacing": g.spacing,
            "min": float(np.min(u.values)), "max": float(np.max(u.values)),
        }
        print(json.dumps(out, indent=2, sort_keys=True))
        return 0
    center = _floats(args.center) if args.center else [0.5 * (a + b) for a, b in zip(g.lo, g.hi)]
    if args.radii:
        radii = _floats(args.radii)
    else:
        base = 0.25 * min(b - a for a, b in zip(g.lo, g.hi))
        radii = [base * 0.5**k for k in range(5) if base * 0.5**k >= 2.0 * g.spacing]
    report = fit_holder_exponent(u, center, radii, p=args.p)
    print(report.to_json())
    if args.csv:
        report.write_csv(args.csv)
        print(f"profile: {args.csv}", file=sys.stderr)
    return 0 if report.exponent is not None else 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fracp",
        description="Numerical laboratory for the fractional p-Laplacian.",
    )
    parser.add_argument("--version", action="version", version=f"fracp {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a scenario file and write its artifacts")
    run_p.add_argument("scenario", help="scenario JSON path")
    run_p.add_argument("--out", default=None, help="output directory (default: beside the scenario)")
    run_p.set_defaults(func=_cmd_run)

    theta_p = sub.add_parser("theta", help="evaluate the Holder exponent formula")
    theta_p.add_argument("--N", type=int, required=True)
    theta_p.add_argument("--s", type=float, required=True)
    theta_p.add_argument("--p", type=float, required=True)
    theta_p.add_argument("--q", default="inf", help="integrability exponent, a number or 'inf'")
    theta_p.set_defaults(func=_cmd_theta)

    ineq_p = sub.add_parser("ineq", help="randomized sweep of one pointwise inequality")
    ineq_p.add_argument("--id", required=True,
                        choices=["monotone", "lipschitz", "holder", "xxx", "erik", "erik2"])
    ineq_p.add_argument("--p", type=float, default=None)
    ineq_p.add_argument("--q", type=float, default=None)
    ineq_p.add_argument("--gamma", type=float, default=None)
    ineq_p.add_argument("--C", type=float, default=None,
                        help="constant override for the existential families")
    ineq_p.add_argument("--n", type=int, default=1000000, help="number of random tuples")
    ineq_p.add_argument("--seed", type=int, default=0)
    ineq_p.set_defaults(func=_cmd_ineq)

    solve_p = sub.add_parser("solve", help="solve a Dirichlet problem file")
    solve_p.add_argument("problem", help="problem JSON path")
    solve_p.add_argument("--out", default=None, help="output directory (default: beside the problem)")
    solve_p.set_defaults(func=_cmd_solve)

    an_p = sub.add_parser("analyze", help="inspect a solution CSV")
    an_p.add_argument("values", help="values CSV path (columns x0[,x1],value)")
    an_p.add_argument("--fit-exponent", action="store_true",
                      help="fit the Holder exponent over dyadic balls")
    an_p.add_argument("--center", default=None, help="ball center, comma separated")
    an_p.add_argument("--radii", default=None, help="ball radii, comma separated")
    an_p.add_argument("--p", type=float, default=None,
                      help="also record the p-mean excess rate per ball")
    an_p.add_argument("--csv", default=None, help="write the fitted profile as CSV here")
    an_p.set_defaults(func=_cmd_analyze)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
