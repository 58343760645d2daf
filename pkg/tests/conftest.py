import numpy as np
import pytest

from vecoffload.scenario import (Scenario, ScenarioConfig, VehicleTask, dbm_per_hz_to_watts,
                                 h0_from_reference_snr)

N0 = dbm_per_hz_to_watts(-174.0)
C_REF = 1550.7
GAMMA = 1e-28


def small_config(**kw) -> ScenarioConfig:
    """A few-frame road with narrow bandwidth so programs stay tiny."""
    B = kw.pop("B", 200e3)
    base = dict(
        r_rsu=100.0, d=200.0, d_lane=3.5, H=10.0, lane_speeds=(25.0,), B=B, N0=N0,
        h0=h0_from_reference_snr(20.0, N0, B), T=5.0, frame=1.0, num_vehicles=1,
        L_u_max=180e3, L_d_max=140e3, L_max=250e3, arrival_window=0.0,
    )
    base.update(kw)
    return ScenarioConfig(**base)


def task(L, lane=1, arrival=0, kappa=0.5, C=C_REF, gamma=GAMMA) -> VehicleTask:
    return VehicleTask(float(L), C, kappa, gamma, lane, arrival)


def desk_scenario() -> Scenario:
    """K=1, N=5 instance used by the grid-enumeration oracle."""
    return Scenario.build(small_config(), [task(300e3)])


def two_vehicle_scenario(T=8.0, L=(400e3, 350e3), arrivals=(0, 1), lanes=(1, 2), **kw) -> Scenario:
    cfg = small_config(T=T, num_vehicles=2, lane_speeds=(25.0, 30.0), frame=1.0, **kw)
    tasks = [task(L[k], lane=lanes[k], arrival=arrivals[k]) for k in range(2)]
    return Scenario.build(cfg, tasks)


@pytest.fixture
def desk():
    return desk_scenario()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_runtest_logreport(report):
    """A criterion whose fixtures fail never reaches its own PASS/FAIL bookkeeping."""
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is None or report.when != "setup" or not report.failed or "::test_criterion_" not in report.nodeid:
        return
    n = int(report.nodeid.split("::test_criterion_")[1].split("_")[0])
    crash = getattr(report.longrepr, "reprcrash", None)
    mod.RESULTS[n] = f"criterion {n}: FAIL  setup error -- {crash.message if crash else report.longrepr}"


def pytest_terminal_summary(terminalreporter):
    """Print the acceptance criteria verdicts, one line each."""
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
