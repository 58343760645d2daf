"""Command-line entry point: ``vecoffload {simulate,sweep-deadline,sweep-rho,validate}``.

Exit codes: 0 success, 2 configuration error, 3 infeasible, 4 solver did
not converge (or produced a plan that fails validation).
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bench import (DEFAULT_DEADLINES, DEFAULT_RHO_GRID, STRATEGIES, InvalidPlanError, run_simulate,
                    run_strategy, run_sweep_deadline, run_sweep_rho)
from .config import ConfigError, config_digest, load_config
from .offloading import PLAN_TOLERANCE, AllocationPlan, build_complete_offloading, validate_plan
from .scenario import Scenario
from .solver import ConvergenceError, InfeasibleError, SolverOptions

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_SOLVER = 0, 2, 3, 4


def _float_list(text: str):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _rho_grid(args):
    if args.rho_grid is not None:
        return args.rho_grid
    if args.rho_step is not None:
        if not 0 < args.rho_step <= 1:
            raise ConfigError("--rho-step", "step must lie in (0, 1]")
        n = int(round(1.0 / args.rho_step))
        if abs(n * args.rho_step - 1.0) > 1e-9:
            raise ConfigError("--rho-step", "step must divide 1 evenly")
        return [round(i / n, 12) for i in range(n + 1)]
    return list(DEFAULT_RHO_GRID)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vecoffload", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p, out=True):
        p.add_argument("--config", required=True, help="YAML scenario file")
        p.add_argument("--seed", type=int, default=None, help="override the file's seed")
        p.add_argument("--tolerance", type=float, default=1e-8, help="solver tolerance (relative)")
        if out:
            p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("simulate", help="run one strategy and write its allocation")
    common(p)
    p.add_argument("--strategy", choices=STRATEGIES, default="partial")

    p = sub.add_parser("sweep-deadline", help="total energy of each strategy over deadlines")
    common(p)
    p.add_argument("--strategy", default=",".join(STRATEGIES),
                   help="comma-separated subset of " + ",".join(STRATEGIES))
    p.add_argument("--deadlines", type=_float_list, default=list(DEFAULT_DEADLINES),
                   help="comma-separated deadlines in seconds")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("sweep-rho", help="optimal energy for a common offloading ratio")
    common(p)
    p.add_argument("--rho-grid", type=_float_list, default=None, help="explicit comma-separated ratios")
    p.add_argument("--rho-step", type=float, default=None, help="uniform grid step on [0, 1] (default 0.05)")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("validate", help="check a config, or a written plan against it")
    common(p, out=False)
    p.add_argument("--plan", default=None, help="directory holding allocation.csv and energy.csv")
    p.add_argument("--strategy", choices=STRATEGIES, default=None,
                   help="also solve this strategy and validate its plan")
    return parser


def _options(args) -> SolverOptions:
    if not args.tolerance > 0:
        raise ConfigError("--tolerance", "must be positive")
    return SolverOptions(tolerance=args.tolerance)


def read_plan(directory, scenario: Scenario) -> AllocationPlan:
    """Rebuild a plan from ``allocation.csv`` and ``energy.csv``."""
    directory = Path(directory)
    K, N = scenario.K, scenario.N
    plan = AllocationPlan.zeros(K, N)
    arrival = scenario.timeline.arrival
    seen = np.zeros((K, N), dtype=bool)
    with open(directory / "allocation.csv", newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            k = int(row["vehicle"])
            nu = int(row["absolute_frame"]) - int(arrival[k])
            if not (0 <= k < K and 1 <= nu <= N):
                raise ConfigError("allocation.csv", f"row for vehicle {k}, frame {row['absolute_frame']} "
                                                    f"is outside the scenario")
            plan.uplink[k, nu - 1] = float(row["uplink_bits"])
            plan.compute[k, nu - 1] = float(row["compute_bits"])
            plan.downlink[k, nu - 1] = float(row["downlink_bits"])
            seen[k, nu - 1] = True
    if not seen.all():
        raise ConfigError("allocation.csv", "plan does not cover every vehicle and frame")
    with open(directory / "energy.csv", newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            plan.rho[int(row["vehicle"])] = float(row["rho"])
    return plan


def _report(violations: dict) -> bool:
    ok = True
    for fam, v in violations.items():
        flag = "ok" if v <= PLAN_TOLERANCE else "VIOLATED"
        ok &= v <= PLAN_TOLERANCE
        print(f"  {fam:20s} {v:.3e} bits  {flag}")
    return ok


def _validate(args, config, tasks) -> int:
    scenario = Scenario.build(config, tasks)
    print(f"config digest {config_digest(config, tasks)}")
    print(f"K={scenario.K} N={scenario.N} M={config.M} slot={config.slot:g}s frame={config.frame:g}s T={config.T:g}s")
    build_complete_offloading(scenario)  # per-vehicle capacity prechecks
    print("capacity prechecks: ok")
    ok = True
    if args.plan is not None:
        print(f"plan {args.plan}:")
        ok &= _report(validate_plan(read_plan(args.plan, scenario), scenario).violations)
    if args.strategy is not None:
        res = run_strategy(scenario, args.strategy, _options(args))
        print(f"{args.strategy}: total {res.energy.total:.10g} J, status {res.status}")
        ok &= _report(res.violations)
    return EXIT_OK if ok else EXIT_INFEASIBLE


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config, tasks = load_config(args.config, seed=args.seed)
        opts = _options(args)
        if args.verb == "simulate":
            res = run_simulate(config, tasks, args.strategy, args.out, opts)
            print(f"{args.strategy}: total {res.energy.total:.10g} J -> {args.out}")
        elif args.verb == "sweep-deadline":
            strategies = [s.strip() for s in args.strategy.split(",") if s.strip()]
            unknown = [s for s in strategies if s not in STRATEGIES]
            if unknown or not strategies:
                raise ConfigError("--strategy", f"unknown strategies {unknown}")
            rows = run_sweep_deadline(config, tasks, args.deadlines, args.out, opts, args.workers, strategies)
            for r in rows:
                print("T=%g " % r["T"] + " ".join(
                    f"{s}={r[s]:.6g}" if r[s] is not None else f"{s}={r[s + '_status']}"
                    for s in STRATEGIES if s in r))
        elif args.verb == "sweep-rho":
            sweep = run_sweep_rho(config, tasks, _rho_grid(args), args.out, opts, args.workers)
            E = sweep.energies()
            if np.any(np.isfinite(E)):
                i = int(np.nanargmin(E))
                print(f"minimum {E[i]:.6g} J at rho={sweep.rows[i]['rho']:g}")
            for name, val in sweep.checks.items():
                print(f"{name}: {val:.3e}")
        else:
            return _validate(args, config, tasks)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleError as exc:
        fams = f" [{', '.join(exc.families)}]" if exc.families else ""
        print(f"infeasible: {exc}{fams}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except InvalidPlanError as exc:
        print(f"invalid plan: {exc}", file=sys.stderr)
        # a baseline breaking a cap is an infeasible configuration; an optimizer plan doing so is a solver fault
        return EXIT_INFEASIBLE if getattr(args, "strategy", None) in ("local", "equal") else EXIT_SOLVER
    except ConvergenceError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ValueError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
