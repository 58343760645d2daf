"""Offloading programs, baselines, plan validation and energy accounting.

Bit variables live in units of one slot's worth of bits (``B * delta``) inside
the programs, so the uplink energy of a frame is ``c (2**x - 1)`` with
``c = N0 B delta / h``. Plans handed back to callers are in bits.

Cumulative constraints are carried by chained auxiliary variables so every
equality row has at most four nonzeros: the running uplink sum ``U_n``, the
compute backlog ``b_n = sum_{i<=n} (u_i - c_{i+1}) >= 0`` and the output
backlog ``e_n = kappa sum_{i<=n} c_{i+1} - sum_{i<=n} d_{i+2} >= 0``. Pinning
``U_{N-2}`` to the offloaded size and both backlogs to zero at ``n = N - 2``
is equivalent to the three per-vehicle totals.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .energy import RadioParams, local_execution_energy, rsu_compute_energy_report, transmission_energy
from .scenario import Scenario, active_sets
from .solver import (ConvergenceError, ConvexProgram, InfeasibleError, Solution, SolverOptions,
                     check_feasibility, solve)

FAMILIES = (
    "compute_causality",
    "downlink_causality",
    "uplink_slot_cap",
    "downlink_slot_cap",
    "rsu_uplink_cap",
    "nonnegativity",
    "pipeline_window",
    "uplink_total",
    "compute_total",
    "downlink_total",
    "offload_ratio",
)

PLAN_TOLERANCE = 1e-6


@dataclass
class AllocationPlan:
    """Bits per vehicle and local frame, arrays of shape ``(K, N)`` indexed ``[k, nu - 1]``."""

    uplink: np.ndarray
    compute: np.ndarray
    downlink: np.ndarray
    rho: np.ndarray

    @classmethod
    def zeros(cls, K: int, N: int, rho: float = 0.0) -> "AllocationPlan":
        return cls(np.zeros((K, N)), np.zeros((K, N)), np.zeros((K, N)), np.full(K, float(rho)))

    @property
    def shape(self):
        return self.uplink.shape


@dataclass
class EnergyReport:
    uplink: np.ndarray
    local: np.ndarray
    rsu_compute: float = 0.0
    rsu_downlink: float = 0.0

    @property
    def total(self) -> float:
        return float(np.sum(self.uplink) + np.sum(self.local))


@dataclass
class ConstraintReport:
    violations: dict
    first_violation: dict = field(default_factory=dict)
    tolerance: float = PLAN_TOLERANCE

    @property
    def max_violation(self) -> float:
        return max(self.violations.values()) if self.violations else 0.0

    @property
    def passes(self) -> bool:
        return self.max_violation <= self.tolerance

    @property
    def failed(self) -> list:
        return [f for f, v in self.violations.items() if v > self.tolerance]


@dataclass
class ProgramLayout:
    """Where each plan entry lives in the program vector (``-1``: not a variable)."""

    unit: float
    K: int
    N: int
    u: np.ndarray
    c: np.ndarray
    d: np.ndarray
    rho: np.ndarray
    rho_fixed: np.ndarray


@dataclass
class OffloadingResult:
    plan: AllocationPlan
    energy: EnergyReport
    solution: Solution
    program: ConvexProgram


def radio_params(scenario: Scenario) -> RadioParams:
    cfg = scenario.config
    return RadioParams(cfg.B, cfg.slot, cfg.N0)


def _precheck(scenario: Scenario, rho: np.ndarray) -> None:
    cfg = scenario.config
    N = scenario.N
    for k, task in enumerate(scenario.tasks):
        need = rho[k] * task.L
        if need > (N - 2) * cfg.L_u_max:
            raise InfeasibleError(
                f"vehicle {k}: {need:.6g} offloaded bits exceed {N - 2} uplink frames x "
                f"{cfg.L_u_max:.6g} bits", ["uplink_total", "uplink_slot_cap"])
        if task.kappa * need > (N - 2) * cfg.L_d_max:
            raise InfeasibleError(
                f"vehicle {k}: {task.kappa * need:.6g} output bits exceed {N - 2} downlink frames x "
                f"{cfg.L_d_max:.6g} bits", ["downlink_total", "downlink_slot_cap"])


def _build(scenario: Scenario, rho_fixed: Optional[np.ndarray]) -> ConvexProgram:
    cfg = scenario.config
    tl = scenario.timeline
    K, N = scenario.K, scenario.N
    radio = radio_params(scenario)
    unit = radio.slot_bits
    free = rho_fixed is None
    rho_fixed = np.ones(K) if free else np.asarray(rho_fixed, dtype=float)

    lb, ub, lb_lab, ub_lab = [], [], [], []
    exp_i, exp_c = [], []
    cub_i, cub_c = [], []

    def new_var(lo, lo_label, hi=np.inf, hi_label="unbounded"):
        lb.append(lo)
        ub.append(hi)
        lb_lab.append(lo_label)
        ub_lab.append(hi_label)
        return len(lb) - 1

    u_idx = np.full((K, N), -1, dtype=np.int64)
    c_idx = np.full((K, N), -1, dtype=np.int64)
    d_idx = np.full((K, N), -1, dtype=np.int64)
    r_idx = np.full(K, -1, dtype=np.int64)
    offloads = [free or rho_fixed[k] > 0 for k in range(K)]

    # single-vehicle (frame, RSU) groups fold the shared cap into the variable bound
    groups = active_sets(tl, last_local_frame=N - 2)
    group_size = {}
    for (n, m), members in groups.items():
        members = [k for k in members if offloads[k]]
        for k in members:
            group_size[(k, n - int(tl.arrival[k]))] = len(members)

    u_cap = cfg.L_u_max / unit
    shared_cap = cfg.L_max / unit
    d_cap = cfg.L_d_max / unit
    coef = radio.N0 * radio.slot_bits / tl.gain

    for k in range(K):
        if not offloads[k]:
            continue
        for nu in range(1, N - 1):
            if group_size.get((k, nu), 1) == 1 and shared_cap < u_cap:
                hi, lab = shared_cap, "rsu_uplink_cap"
            else:
                hi, lab = u_cap, "uplink_slot_cap"
            j = new_var(0.0, "nonnegativity", hi, lab)
            u_idx[k, nu - 1] = j
            exp_i.append(j)
            exp_c.append(coef[k, nu - 1])
        for nu in range(2, N):
            c_idx[k, nu - 1] = new_var(0.0, "nonnegativity")
        for nu in range(3, N + 1):
            d_idx[k, nu - 1] = new_var(0.0, "nonnegativity", d_cap, "downlink_slot_cap")
        if free:
            r_idx[k] = new_var(0.0, "offload_ratio", 1.0, "offload_ratio")
            task = scenario.tasks[k]
            cub_i.append(r_idx[k])
            cub_c.append(local_execution_energy(task.L, task.C, task.gamma_v, cfg.T))

    eq_rows, eq_cols, eq_vals, b, eq_lab = [], [], [], [], []
    row = 0

    def eq(entries, rhs, label):
        nonlocal row
        for j, v in entries:
            eq_rows.append(row)
            eq_cols.append(j)
            eq_vals.append(v)
        b.append(rhs)
        eq_lab.append(label)
        row += 1

    for k in range(K):
        if not offloads[k]:
            continue
        task = scenario.tasks[k]
        kap = task.kappa
        prev_U = prev_b = prev_e = -1
        for n in range(1, N - 1):
            last = n == N - 2
            # cumulative uplink U_n = U_{n-1} + u_n
            jU = new_var(0.0, "nonnegativity")
            ents = [(jU, 1.0), (u_idx[k, n - 1], -1.0)]
            if prev_U >= 0:
                ents.append((prev_U, -1.0))
            eq(ents, 0.0, "uplink_total")
            prev_U = jU
            # backlogs; at n = N - 2 both are pinned to zero, which closes the totals
            ents = [(u_idx[k, n - 1], -1.0), (c_idx[k, n], 1.0)]
            if prev_b >= 0:
                ents.append((prev_b, -1.0))
            if not last:
                jb = new_var(0.0, "compute_causality")
                ents.append((jb, 1.0))
                prev_b = jb
            eq(ents, 0.0, "compute_total" if last else "compute_causality")
            ents = [(c_idx[k, n], -kap), (d_idx[k, n + 1], 1.0)]
            if prev_e >= 0:
                ents.append((prev_e, -1.0))
            if not last:
                je = new_var(0.0, "downlink_causality")
                ents.append((je, 1.0))
                prev_e = je
            eq(ents, 0.0, "downlink_total" if last else "downlink_causality")
        Lu = task.L / unit
        if free:
            eq([(prev_U, 1.0), (r_idx[k], -Lu)], 0.0, "uplink_total")
        else:
            eq([(prev_U, 1.0)], Lu * rho_fixed[k], "uplink_total")

    n_var = len(lb)
    A = sp.csr_matrix((eq_vals, (eq_rows, eq_cols)), shape=(row, n_var))

    g_rows, g_cols, h, g_lab = [], [], [], []
    for (n, m), members in groups.items():
        members = [k for k in members if offloads[k]]
        if len(members) < 2:
            continue
        r = len(h)
        for k in members:
            g_rows.append(r)
            g_cols.append(u_idx[k, n - int(tl.arrival[k]) - 1])
        h.append(shared_cap)
        g_lab.append("rsu_uplink_cap")
    G = sp.csr_matrix((np.ones(len(g_rows)), (g_rows, g_cols)), shape=(len(h), n_var))

    constant = 0.0
    if not free:
        constant = float(sum(
            local_execution_energy((1.0 - rho_fixed[k]) * t.L, t.C, t.gamma_v, cfg.T)
            for k, t in enumerate(scenario.tasks)))

    layout = ProgramLayout(unit, K, N, u_idx, c_idx, d_idx, r_idx, rho_fixed.copy())
    return ConvexProgram.create(
        n_var,
        exp_terms=(exp_i, exp_c, np.ones(len(exp_i))),
        cubic_terms=(cub_i, cub_c, np.ones(len(cub_i))),
        A_eq=A, b_eq=b, G=G, h=h, lb=lb, ub=ub,
        eq_labels=eq_lab, ineq_labels=g_lab, lb_labels=lb_lab, ub_labels=ub_lab,
        constant=constant, layout=layout,
    )


def build_complete_offloading(scenario: Scenario) -> ConvexProgram:
    """Every vehicle offloads all of its input bits; bit allocation only."""
    rho = np.ones(scenario.K)
    _precheck(scenario, rho)
    return _build(scenario, rho)


def build_partial_offloading(scenario: Scenario, rho: Optional[np.ndarray] = None) -> ConvexProgram:
    """Joint bit allocation and offloading ratio.

    With ``rho`` given the ratios are constants: the program is the complete
    offloading one with scaled totals plus the fixed local energy.
    """
    if rho is None:
        return _build(scenario, None)
    rho = np.broadcast_to(np.asarray(rho, dtype=float), (scenario.K,)).copy()
    if np.any(rho < 0) or np.any(rho > 1):
        raise ValueError("offloading ratios must lie in [0, 1]")
    _precheck(scenario, rho)
    return _build(scenario, rho)


def plan_from_solution(program: ConvexProgram, x: np.ndarray) -> AllocationPlan:
    lay: ProgramLayout = program.layout
    plan = AllocationPlan.zeros(lay.K, lay.N)
    xb = np.maximum(x, 0.0) * lay.unit
    for arr, idx in ((plan.uplink, lay.u), (plan.compute, lay.c), (plan.downlink, lay.d)):
        mask = idx >= 0
        arr[mask] = xb[idx[mask]]
    plan.rho = np.where(lay.rho >= 0, np.clip(x[np.maximum(lay.rho, 0)], 0.0, 1.0), lay.rho_fixed)
    return plan


def optimize(scenario: Scenario, mode: str = "complete", options: Optional[SolverOptions] = None,
             rho: Optional[np.ndarray] = None) -> OffloadingResult:
    """Build, check and solve one program; raise on infeasibility or non-convergence."""
    if mode == "complete":
        program = build_complete_offloading(scenario)
    elif mode == "partial":
        program = build_partial_offloading(scenario, rho)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    opts = options or SolverOptions()
    feas = check_feasibility(program, opts)
    if not feas.feasible:
        raise InfeasibleError(f"{mode} offloading program is infeasible "
                              f"(phase-1 slack {feas.max_violation:.3g})", feas.families)
    sol = solve(program, opts, x0=feas.x)
    if sol.status != "optimal":
        raise ConvergenceError(f"{mode} offloading did not converge: status {sol.status}, "
                               f"max KKT residual {sol.residuals.max():.3g}")
    plan = plan_from_solution(program, sol.x)
    return OffloadingResult(plan, total_vehicle_energy(plan, scenario), sol, program)


def equal_bit_allocation(scenario: Scenario) -> AllocationPlan:
    """Spread every task uniformly over the usable uplink/compute/downlink frames."""
    cfg = scenario.config
    K, N = scenario.K, scenario.N
    plan = AllocationPlan.zeros(K, N, rho=1.0)
    for k, task in enumerate(scenario.tasks):
        per = task.L / (N - 2)
        if per > cfg.L_u_max:
            raise InfeasibleError(f"vehicle {k}: equal uplink share {per:.6g} bits exceeds the slot cap",
                                  ["uplink_slot_cap"])
        if task.kappa * per > cfg.L_d_max:
            raise InfeasibleError(f"vehicle {k}: equal downlink share {task.kappa * per:.6g} bits "
                                  f"exceeds the slot cap", ["downlink_slot_cap"])
        plan.uplink[k, : N - 2] = per
        plan.compute[k, 1: N - 1] = per
        plan.downlink[k, 2:] = task.kappa * per
    return plan


def local_baseline(scenario: Scenario) -> EnergyReport:
    T = scenario.config.T
    local = np.array([local_execution_energy(t.L, t.C, t.gamma_v, T) for t in scenario.tasks])
    return EnergyReport(np.zeros(scenario.K), local)


def total_vehicle_energy(plan: AllocationPlan, scenario: Scenario) -> EnergyReport:
    """Vehicle energy of ``plan`` plus the informational RSU-side energies."""
    cfg = scenario.config
    radio = radio_params(scenario)
    gain = scenario.timeline.gain
    uplink = np.sum(transmission_energy(np.maximum(plan.uplink, 0.0), gain, radio), axis=1)
    local = np.array([
        local_execution_energy(max(1.0 - plan.rho[k], 0.0) * t.L, t.C, t.gamma_v, cfg.T)
        for k, t in enumerate(scenario.tasks)])
    rsu_c = rsu_compute_energy_report(plan, scenario.tasks, cfg.gamma_r, cfg.f_r)
    rsu_d = float(np.sum(transmission_energy(np.maximum(plan.downlink, 0.0), gain, radio)))
    return EnergyReport(uplink, local, rsu_c, rsu_d)


def _first(values: np.ndarray):
    """``(k, nu)`` of the first entry (row-major) above tolerance, if any."""
    hits = np.argwhere(values > PLAN_TOLERANCE)
    if hits.size == 0:
        return None
    k, j = hits[0]
    return int(k), int(j) + 1


def validate_plan(plan: AllocationPlan, scenario: Scenario) -> ConstraintReport:
    """Check every constraint family on ``plan`` directly, in bits.

    Returns the largest violation of each family; the plan passes when all of
    them are at most ``PLAN_TOLERANCE`` bits.
    """
    cfg = scenario.config
    K, N = scenario.K, scenario.N
    if plan.uplink.shape != (K, N) or plan.compute.shape != (K, N) or plan.downlink.shape != (K, N):
        raise ValueError(f"plan shape {plan.uplink.shape} does not match scenario ({K}, {N})")
    if np.shape(plan.rho) != (K,):
        raise ValueError("plan.rho must have one entry per vehicle")
    u, c, d = plan.uplink, plan.compute, plan.downlink
    rho = np.asarray(plan.rho, dtype=float)
    L = np.array([t.L for t in scenario.tasks])
    kap = np.array([t.kappa for t in scenario.tasks])

    up = u[:, : N - 2]          # u_1 .. u_{N-2}
    comp = c[:, 1: N - 1]       # c_2 .. c_{N-1}
    down = d[:, 2:]             # d_3 .. d_N
    checks = {}
    checks["compute_causality"] = np.cumsum(comp, axis=1) - np.cumsum(up, axis=1)
    checks["downlink_causality"] = np.cumsum(down, axis=1) - kap[:, None] * np.cumsum(comp, axis=1)
    checks["uplink_slot_cap"] = up - cfg.L_u_max
    checks["downlink_slot_cap"] = down - cfg.L_d_max
    checks["nonnegativity"] = -np.minimum(np.minimum(u, c), d)
    outside = np.zeros((K, N))
    outside[:, N - 2:] = np.maximum(outside[:, N - 2:], np.abs(u[:, N - 2:]))
    outside[:, 0] = np.maximum(outside[:, 0], np.abs(c[:, 0]))
    outside[:, N - 1] = np.maximum(outside[:, N - 1], np.abs(c[:, N - 1]))
    outside[:, :2] = np.maximum(outside[:, :2], np.abs(d[:, :2]))
    checks["pipeline_window"] = outside
    checks["uplink_total"] = np.abs(up.sum(axis=1) - rho * L)[:, None]
    checks["compute_total"] = np.abs(comp.sum(axis=1) - rho * L)[:, None]
    checks["downlink_total"] = np.abs(down.sum(axis=1) - kap * rho * L)[:, None]
    checks["offload_ratio"] = np.maximum(-rho, rho - 1.0)[:, None]

    shared = np.zeros((K, N))
    tl = scenario.timeline
    for (n, m), members in active_sets(tl, last_local_frame=N - 2).items():
        load = sum(u[k, n - tl.arrival[k] - 1] for k in members)
        excess = load - cfg.L_max
        for k in members:
            j = n - tl.arrival[k] - 1
            shared[k, j] = max(shared[k, j], excess)
    checks["rsu_uplink_cap"] = shared

    violations, first = {}, {}
    for fam in FAMILIES:
        arr = checks[fam]
        violations[fam] = max(0.0, float(np.max(arr))) if arr.size else 0.0
        hit = _first(arr)
        if hit is not None:
            first[fam] = hit
    return ConstraintReport(violations, first)


def fixed_rho_energy(scenario: Scenario, rho: float, options: Optional[SolverOptions] = None) -> float:
    """Optimal vehicle energy when every vehicle offloads the same fraction ``rho``."""
    if not 0.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [0, 1]")
    if rho == 0.0:
        return local_baseline(scenario).total
    res = optimize(scenario, "partial", options, rho=np.full(scenario.K, float(rho)))
    return res.solution.objective
