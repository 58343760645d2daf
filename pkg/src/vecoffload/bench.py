"""Strategy runs, deadline/ratio sweeps and their CSV/JSON outputs.

Outputs are deterministic: floats are written with ``repr`` (shortest
round-trip form), rows in a fixed order and nothing time- or host-dependent
goes into a file. Every file is written to a temporary name and renamed.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .config import config_digest
from .offloading import (AllocationPlan, EnergyReport, PLAN_TOLERANCE, equal_bit_allocation,
                         fixed_rho_energy, local_baseline, optimize, total_vehicle_energy,
                         validate_plan)
from .scenario import Scenario, ScenarioConfig
from .solver import ConvergenceError, InfeasibleError, SolverOptions

STRATEGIES = ("local", "equal", "complete", "partial")
DEFAULT_DEADLINES = (12.0, 14.0, 16.0, 18.0, 20.0)
DEFAULT_RHO_GRID = tuple(round(0.05 * i, 2) for i in range(21))

ALLOCATION_COLUMNS = ("vehicle", "lane", "absolute_frame", "x_position_m", "rsu_index",
                      "channel_gain", "uplink_bits", "compute_bits", "downlink_bits")
ENERGY_COLUMNS = ("vehicle", "uplink_J", "local_J", "rho")


class InvalidPlanError(RuntimeError):
    """A plan failed validation and was not written."""

    def __init__(self, message: str, families: Sequence[str] = ()):
        super().__init__(message)
        self.families = list(families)


@dataclass
class StrategyResult:
    strategy: str
    plan: AllocationPlan
    energy: EnergyReport
    status: str = "optimal"
    iterations: int = 0
    kkt_max: float = 0.0
    violations: dict = field(default_factory=dict)

    @property
    def max_violation(self) -> float:
        return max(self.violations.values()) if self.violations else 0.0


def run_strategy(scenario: Scenario, strategy: str, options: Optional[SolverOptions] = None) -> StrategyResult:
    """Run one strategy and validate its plan.

    Raises :class:`InfeasibleError` / :class:`ConvergenceError` from the
    optimizer; the caller decides what an invalid plan means.
    """
    if strategy == "local":
        plan = AllocationPlan.zeros(scenario.K, scenario.N, rho=0.0)
        res = StrategyResult(strategy, plan, local_baseline(scenario), status="closed_form")
    elif strategy == "equal":
        plan = equal_bit_allocation(scenario)
        res = StrategyResult(strategy, plan, total_vehicle_energy(plan, scenario), status="closed_form")
    elif strategy in ("complete", "partial"):
        out = optimize(scenario, strategy, options)
        res = StrategyResult(strategy, out.plan, out.energy, out.solution.status,
                             out.solution.iterations, out.solution.residuals.max())
    else:
        raise ValueError(f"unknown strategy {strategy!r}; choose from {', '.join(STRATEGIES)}")
    res.violations = validate_plan(res.plan, scenario).violations
    return res


# ---------------------------------------------------------------- files

def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _csv_text(columns, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def manifest(config: ScenarioConfig, tasks, verb: str, strategies, options: SolverOptions,
             out_dir, **grids) -> dict:
    return {
        "tool": "vecoffload",
        "version": __version__,
        "verb": verb,
        "config_digest": config_digest(config, tasks),
        "seed": config.rng_seed,
        "strategies": list(strategies),
        "grids": {k: [float(v) for v in vals] for k, vals in grids.items()},
        "tolerance": options.tolerance,
        "output_dir": str(out_dir),
    }


def allocation_rows(scenario: Scenario, plan: AllocationPlan):
    tl = scenario.timeline
    for k, task in enumerate(scenario.tasks):
        for nu in range(1, scenario.N + 1):
            j = nu - 1
            yield (k, task.lane, int(tl.arrival[k]) + nu, float(tl.x[k, j]), int(tl.rsu[k, j]),
                   float(tl.gain[k, j]), float(plan.uplink[k, j]), float(plan.compute[k, j]),
                   float(plan.downlink[k, j]))


def energy_rows(result: StrategyResult):
    e = result.energy
    for k in range(e.uplink.size):
        yield (k, float(e.uplink[k]), float(e.local[k]), float(result.plan.rho[k]))


def summary_text(scenario: Scenario, result: StrategyResult, digest: str) -> str:
    cfg = scenario.config
    e = result.energy
    lines = [
        f"strategy: {result.strategy}",
        f"status: {result.status}",
        f"config digest: {digest}",
        f"vehicles K={scenario.K}  frames N={scenario.N}  RSUs M={cfg.M}  "
        f"deadline T={cfg.T!r} s  slot={cfg.slot!r} s",
        f"total vehicle energy [J]: {e.total!r}",
        f"  uplink [J]: {float(np.sum(e.uplink))!r}",
        f"  local compute [J]: {float(np.sum(e.local))!r}",
        f"informational RSU compute energy [J]: {e.rsu_compute!r}",
        f"informational RSU downlink energy [J]: {e.rsu_downlink!r}",
    ]
    if result.strategy in ("complete", "partial"):
        lines.append(f"solver iterations: {result.iterations}")
        lines.append(f"max relative KKT residual: {result.kkt_max!r}")
    lines.append(f"max constraint violation [bits]: {result.max_violation!r}")
    lines.append("per vehicle (k, lane, arrival frame, L bits, rho, uplink J, local J):")
    for k, t in enumerate(scenario.tasks):
        lines.append(f"  {k} {t.lane} {t.arrival_frame} {t.L!r} {float(result.plan.rho[k])!r} "
                     f"{float(e.uplink[k])!r} {float(e.local[k])!r}")
    return "\n".join(lines) + "\n"


def run_simulate(config: ScenarioConfig, tasks, strategy: str, out_dir,
                 options: Optional[SolverOptions] = None) -> StrategyResult:
    """Solve one strategy and write allocation/energy CSVs, summary and manifest.

    Nothing is written when the plan fails validation.
    """
    opts = options or SolverOptions()
    scenario = Scenario.build(config, tasks)
    result = run_strategy(scenario, strategy, opts)
    bad = [f for f, v in result.violations.items() if v > PLAN_TOLERANCE]
    if bad:
        raise InvalidPlanError(f"{strategy} plan violates {', '.join(bad)} "
                               f"(max {result.max_violation:.3g} bits); refusing to write it", bad)
    out = Path(out_dir)
    digest = config_digest(config, tasks)
    atomic_write(out / "allocation.csv", _csv_text(ALLOCATION_COLUMNS, allocation_rows(scenario, result.plan)))
    atomic_write(out / "energy.csv", _csv_text(ENERGY_COLUMNS, energy_rows(result)))
    atomic_write(out / "summary.txt", summary_text(scenario, result, digest))
    atomic_write(out / "manifest.json", _json_text(manifest(config, tasks, "simulate", [strategy], opts, out)))
    return result


# ---------------------------------------------------------------- sweeps

def _cell_value(fn):
    """``(value, status)`` of one sweep cell; failures become status strings."""
    try:
        return fn(), "ok"
    except InfeasibleError as exc:
        return None, "infeasible:" + "|".join(exc.families)
    except ConvergenceError:
        return None, "not_converged"


def _deadline_cell(args) -> dict:
    config, tasks, T, tolerance, strategies = args
    opts = SolverOptions(tolerance=tolerance)
    cfg = config.with_deadline(T)
    scenario = Scenario.build(cfg, tasks)
    cell = {"T": float(T), "N": scenario.N, "M": cfg.M}
    for s in strategies:
        def run(s=s):
            res = run_strategy(scenario, s, opts)
            if s == "equal":
                # the uniform plan ignores the shared RSU cap; flag rather than drop it
                cell["equal_within_caps"] = res.max_violation <= PLAN_TOLERANCE
            elif res.max_violation > PLAN_TOLERANCE:
                raise ConvergenceError(f"{s} plan fails validation")
            return res.energy.total
        cell[s], cell[s + "_status"] = _cell_value(run)
    return cell


def _rho_cell(args) -> dict:
    config, tasks, rho, tolerance = args
    scenario = Scenario.build(config, tasks)
    opts = SolverOptions(tolerance=tolerance)
    value, status = _cell_value(lambda: fixed_rho_energy(scenario, rho, opts))
    return {"rho": float(rho), "energy": value, "status": status}


def _run_cells(fn, cells, workers: int, out: Path, name: str):
    """Evaluate cells (in parallel when ``workers > 1``), persist each, return in grid order."""
    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(fn, cells))
    else:
        results = [fn(c) for c in cells]
    cell_dir = out / "cells"
    for i, res in enumerate(results):
        atomic_write(cell_dir / f"{name}_{i:03d}.json", _json_text(res))
    return results


def _value(v):
    return "" if v is None else v


def run_sweep_deadline(config: ScenarioConfig, tasks, T_grid: Sequence[float], out_dir,
                       options: Optional[SolverOptions] = None, workers: int = 1,
                       strategies: Sequence[str] = STRATEGIES) -> list:
    """Total energy of every strategy for each deadline; writes ``deadline_sweep.csv``.

    The RSU count follows the deadline unless the config pins it. Failed cells
    are left empty with their status recorded.
    """
    opts = options or SolverOptions()
    strategies = [s for s in STRATEGIES if s in strategies]
    out = Path(out_dir)
    grid = [float(T) for T in T_grid]
    for T in grid:
        config.with_deadline(T)  # rejects non-integer T / frame before any solve
    cells = [(config, list(tasks), T, opts.tolerance, strategies) for T in grid]
    results = _run_cells(_deadline_cell, cells, workers, out, "deadline")
    columns = ["T_s", "N", "M"] + [f"{s}_J" for s in strategies] + [f"{s}_status" for s in strategies]
    if "equal" in strategies:
        columns.append("equal_within_caps")
    rows = []
    for r in results:
        row = [r["T"], r["N"], r["M"]] + [_value(r[s]) for s in strategies] + [r[s + "_status"] for s in strategies]
        if "equal" in strategies:
            row.append(r.get("equal_within_caps", ""))
        rows.append(row)
    atomic_write(out / "deadline_sweep.csv", _csv_text(columns, rows))
    atomic_write(out / "manifest.json",
                 _json_text(manifest(config, tasks, "sweep-deadline", strategies, opts, out, T=grid)))
    return results


@dataclass
class RhoSweep:
    rows: list
    local_total: float
    complete_total: Optional[float]
    checks: dict

    def energies(self) -> np.ndarray:
        return np.array([np.nan if r["energy"] is None else r["energy"] for r in self.rows])


def run_sweep_rho(config: ScenarioConfig, tasks, rho_grid: Sequence[float] = DEFAULT_RHO_GRID, out_dir=".",
                  options: Optional[SolverOptions] = None, workers: int = 1) -> RhoSweep:
    """Optimal energy with a common offloading ratio over a grid; writes ``rho_sweep.csv``.

    Endpoints present in the grid are compared with the local baseline
    (ratio 0) and the complete-offloading optimum (ratio 1).
    """
    opts = options or SolverOptions()
    grid = [float(r) for r in rho_grid]
    if any(not 0.0 <= r <= 1.0 for r in grid):
        raise ValueError("rho grid must lie in [0, 1]")
    out = Path(out_dir)
    scenario = Scenario.build(config, tasks)
    results = _run_cells(_rho_cell, [(config, list(tasks), r, opts.tolerance) for r in grid], workers, out, "rho")

    local_total = local_baseline(scenario).total
    complete_total = None
    checks = {}
    for r in results:
        if r["energy"] is None:
            continue
        if r["rho"] == 0.0:
            checks["rho0_vs_local_rel"] = abs(r["energy"] - local_total) / abs(local_total)
        if r["rho"] == 1.0:
            complete_total, status = _cell_value(lambda: optimize(scenario, "complete", opts).solution.objective)
            if complete_total is not None:
                checks["rho1_vs_complete_rel"] = abs(r["energy"] - complete_total) / abs(complete_total)
    rows = [(r["rho"], _value(r["energy"]), r["status"]) for r in results]
    atomic_write(out / "rho_sweep.csv", _csv_text(("rho", "energy_J", "status"), rows))
    m = manifest(config, tasks, "sweep-rho", ["fixed_rho"], opts, out, rho=grid)
    m["endpoint_checks"] = checks
    atomic_write(out / "manifest.json", _json_text(m))
    return RhoSweep(results, local_total, complete_total, checks)
