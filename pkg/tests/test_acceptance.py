"""Acceptance suite: the nine end-to-end criteria.

Each test records one ``criterion N: PASS|FAIL`` line; the lines are printed
in the pytest terminal summary (see ``conftest.py``) and by ``python
tests/test_acceptance.py``. The reference-scale solves (ten vehicles, up to
500 frames) take several minutes in total.
"""

import contextlib
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import spearmanr

from vecoffload.bench import DEFAULT_DEADLINES, DEFAULT_RHO_GRID, run_simulate, run_strategy, run_sweep_rho
from vecoffload.config import load_config
from vecoffload.energy import RadioParams, local_execution_energy, transmissible_bits, transmission_energy
from vecoffload.offloading import local_baseline, optimize
from vecoffload.scenario import Scenario, ScenarioConfig, dbm_per_hz_to_watts

from conftest import desk_scenario, task

DEFAULT_YAML = Path(__file__).resolve().parents[1] / "configs" / "default.yaml"
TOL = 1e-8
RESULTS = {}


@contextlib.contextmanager
def criterion(n, name):
    """Record PASS/FAIL for criterion ``n`` around an assertion block."""
    detail = {}
    try:
        yield detail
    except BaseException as exc:
        RESULTS[n] = f"criterion {n}: FAIL  {name} -- {type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}"
        raise
    extra = ", ".join(f"{k}={v}" for k, v in detail.items())
    RESULTS[n] = f"criterion {n}: PASS  {name}" + (f" ({extra})" if extra else "")


def summary_lines():
    return [RESULTS[n] for n in sorted(RESULTS)]


@pytest.fixture(scope="module")
def reference():
    return load_config(DEFAULT_YAML)


@pytest.fixture(scope="module")
def deadline_runs(reference, tmp_path_factory):
    """Every strategy at every deadline; the T = 20 s optimizer runs go through ``run_simulate``."""
    config, tasks = reference
    out = tmp_path_factory.mktemp("reference")
    runs = {}
    for T in DEFAULT_DEADLINES:
        cfg = config.with_deadline(T)
        sc = Scenario.build(cfg, tasks)
        row = {s: run_strategy(sc, s) for s in ("local", "equal")}
        for s in ("complete", "partial"):
            if T == 20.0:
                row[s] = run_simulate(cfg, tasks, s, out / s)
            else:
                row[s] = run_strategy(sc, s)
        runs[T] = row
    return runs, out


def test_criterion_1_constants(reference):
    with criterion(1, "reference constants N=500, slot=4 ms, M=3") as d:
        config, tasks = reference
        assert config.N == 500
        assert abs(config.slot - 0.004) <= 1e-12 * 0.004
        assert config.frame / config.num_vehicles == config.slot
        assert config.M == 3
        assert len(tasks) == 10
        d.update(N=config.N, slot=config.slot, M=config.M)


def test_criterion_2_local_closed_form():
    with criterion(2, "local energy, 10 Mbit in 20 s") as d:
        E = local_execution_energy(1e7, 1550.7, 1e-28, 20.0)
        # independent exact rational evaluation of gamma C^3 L^3 / T^2
        exact = Fraction(1, 10 ** 28) * Fraction(15507, 10) ** 3 * Fraction(10 ** 7) ** 3 / Fraction(20) ** 2
        assert abs(E - float(exact)) <= 1e-6 * float(exact)
        assert abs(E - 0.9323) < 1e-4
        sc = Scenario.build(ScenarioConfig(num_vehicles=1), [task(1e7)])
        assert abs(local_baseline(sc).total - float(exact)) <= 1e-6 * float(exact)
        d.update(energy_J=f"{E:.10g}")


def test_criterion_3_inverse_pair():
    with criterion(3, "transmissible_bits inverts transmission_energy") as d:
        rng = np.random.default_rng(2024)
        radio = RadioParams(40e6, 0.004, dbm_per_hz_to_watts(-174.0))
        bits = rng.uniform(0.0, 1.2e6, 10_000)
        gains = 10 ** rng.uniform(-16, -11, 10_000)
        back = transmissible_bits(transmission_energy(bits, gains, radio), gains, radio)
        rel = np.abs(back - bits) / np.maximum(bits, np.finfo(float).tiny)
        assert rel.max() <= 1e-10
        d.update(max_rel=f"{rel.max():.2e}")


def test_criterion_4_desk_oracle():
    with criterion(4, "desk instance matches 1 Kbit grid enumeration") as d:
        sc = desk_scenario()
        cfg = sc.config
        obj = optimize(sc, "complete").solution.objective
        unit = cfg.B * cfg.slot
        coef = cfg.N0 * unit / sc.timeline.gain[0, :3]
        L, kap = sc.tasks[0].L, sc.tasks[0].kappa
        step = 1000.0
        grid = np.arange(0.0, cfg.L_u_max + step / 2, step)
        u1, u2 = np.meshgrid(grid, grid, indexing="ij")
        u3 = L - u1 - u2
        ok = (u3 >= 0) & (u3 <= cfg.L_u_max)
        sent = np.zeros_like(u1)
        for cum in (u1, u1 + u2, u1 + u2 + u3):
            sent = sent + np.maximum(np.minimum(cfg.L_d_max, kap * cum - sent), 0.0)
        ok &= sent >= kap * L - 1e-6
        E = sum(c * np.expm1(np.log(2) * np.maximum(u, 0) / unit) for c, u in zip(coef, (u1, u2, u3)))
        best = E[ok].min()
        # one grid step in two coordinates at the steepest marginal cost
        bound = 2 * step * (coef * np.log(2) / unit * 2 ** (cfg.L_u_max / unit)).max()
        assert best - bound <= obj <= best * (1 + 1e-9)
        d.update(solver=f"{obj:.8g}", grid=f"{best:.8g}", bound=f"{bound:.2g}")


@pytest.mark.slow
def test_criterion_5_kkt_certification(deadline_runs):
    with criterion(5, "KKT residuals <= 1e-8 and plans valid on every reference solve") as d:
        runs, _ = deadline_runs
        worst_kkt = worst_bits = 0.0
        for T, row in runs.items():
            for s in ("complete", "partial"):
                r = row[s]
                assert r.status == "optimal", (T, s, r.status)
                assert r.kkt_max <= 1e-8, (T, s, r.kkt_max)
                assert r.max_violation <= 1e-6, (T, s, r.violations)
                worst_kkt = max(worst_kkt, r.kkt_max)
                worst_bits = max(worst_bits, r.max_violation)
        d.update(solves=2 * len(runs), max_kkt=f"{worst_kkt:.2e}", max_violation_bits=f"{worst_bits:.2e}")


@pytest.mark.slow
def test_criterion_6_strategy_ordering(deadline_runs):
    with criterion(6, "partial <= complete <= equal, partial <= local, monotone in T") as d:
        runs, _ = deadline_runs
        Ts = sorted(runs)
        E = {s: np.array([runs[T][s].energy.total for T in Ts]) for s in ("local", "equal", "complete", "partial")}
        margin = TOL * E["complete"]
        assert np.all(E["complete"] - E["partial"] >= margin)
        assert np.all(E["equal"] - E["complete"] >= margin)
        assert np.all(E["local"] - E["partial"] >= margin)
        for s in ("complete", "partial"):
            assert np.all(np.diff(E[s]) <= TOL * E[s][1:]), (s, E[s])
        scaled = E["local"] * np.array(Ts) ** 2
        assert np.all(np.abs(scaled - scaled[0]) <= 1e-12 * scaled[0])
        d.update(**{f"T{int(T)}": "/".join(f"{E[s][i]:.4g}" for s in ("partial", "complete", "equal", "local"))
                    for i, T in enumerate(Ts)})


def test_criterion_7_gain_ordering():
    with criterion(7, "single vehicle uplink follows channel gain") as d:
        # lane 3 (30 m/s): frame positions are not mirrored around any RSU, so no gain ties
        cfg = ScenarioConfig(num_vehicles=1, L_u_max=1e12, L_d_max=1e12, L_max=1e12)
        sc = Scenario.build(cfg, [task(1e7, lane=3)])
        res = optimize(sc, "complete")
        u = res.plan.uplink[0]
        # frames below one bit are barrier residue (optimum exactly zero)
        pos = u > 1.0
        rho, _ = spearmanr(sc.timeline.gain[0][pos], u[pos])
        assert pos.sum() >= 10
        assert rho >= 0.99
        d.update(frames=int(pos.sum()), spearman=f"{rho:.4f}")


@pytest.mark.slow
def test_criterion_8_rho_sweep(reference, tmp_path):
    with criterion(8, "interior minimum of the common-ratio sweep") as d:
        config, tasks = reference
        sweep = run_sweep_rho(config, tasks, DEFAULT_RHO_GRID, tmp_path)
        E = sweep.energies()
        assert np.all(np.isfinite(E))
        assert sweep.checks["rho0_vs_local_rel"] <= 1e-8
        assert sweep.checks["rho1_vs_complete_rel"] <= 1e-8
        i = int(np.argmin(E))
        assert E[i] <= 0.99 * min(E[0], E[-1])
        d.update(argmin=DEFAULT_RHO_GRID[i], min_J=f"{E[i]:.6g}", rho0_J=f"{E[0]:.6g}", rho1_J=f"{E[-1]:.6g}")


@pytest.mark.slow
def test_criterion_9_determinism(reference, deadline_runs, tmp_path):
    with criterion(9, "byte-identical CSV on rerun") as d:
        config, tasks = reference
        _, first = deadline_runs
        run_simulate(config, tasks, "complete", tmp_path / "again")
        for name in ("allocation.csv", "energy.csv", "summary.txt"):
            assert (first / "complete" / name).read_bytes() == (tmp_path / "again" / name).read_bytes(), name
        d.update(files=3)


if __name__ == "__main__":
    code = pytest.main([__file__, "-q", "-p", "no:cacheprovider"])
    sys.exit(code)
