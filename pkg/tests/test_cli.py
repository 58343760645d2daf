import csv
import json

import numpy as np
import pytest
import yaml

from vecoffload.bench import run_sweep_deadline, run_sweep_rho
from vecoffload.cli import main, read_plan
from vecoffload.config import load_config
from vecoffload.offloading import local_baseline, validate_plan
from vecoffload.scenario import Scenario

SMALL = {
    "seed": 5,
    "road": {"lane_speeds": ["25m/s", "30m/s"]},
    "radio": {"bandwidth": "200kHz"},
    "timing": {"deadline": "6s", "frame": "1s", "slot": "500ms"},
    "fleet": {"vehicles": 2, "input_bits": ["300Kbit", "250Kbit"], "lanes": [1, 2],
              "arrival_times": ["0s", "1s"]},
}


def write_config(path, **sections):
    raw = json.loads(json.dumps(SMALL))
    for name, values in sections.items():
        if isinstance(values, dict):
            raw.setdefault(name, {}).update(values)
        else:
            raw[name] = values
    path.write_text(yaml.safe_dump(raw))
    return str(path)


@pytest.fixture
def cfg_path(tmp_path):
    return write_config(tmp_path / "small.yaml")


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


class TestSimulate:
    @pytest.mark.parametrize("strategy", ["local", "equal", "complete", "partial"])
    def test_writes_all_outputs(self, cfg_path, tmp_path, strategy):
        out = tmp_path / strategy
        assert main(["simulate", "--config", cfg_path, "--strategy", strategy, "--out", str(out)]) == 0
        for name in ("allocation.csv", "energy.csv", "summary.txt", "manifest.json"):
            assert (out / name).is_file()
        rows = read_csv(out / "allocation.csv")
        assert len(rows) == 2 * 6
        raw = (out / "allocation.csv").read_bytes()
        assert b"\r\n" not in raw
        # the written plan reconciles with rho * L and passes validation when read back
        config, tasks = load_config(cfg_path)
        sc = Scenario.build(config, tasks)
        plan = read_plan(out, sc)
        assert validate_plan(plan, sc).passes
        L = np.array([t.L for t in tasks])
        assert plan.uplink.sum(axis=1) == pytest.approx(plan.rho * L, abs=1e-6)
        if strategy == "local":
            assert not np.any(plan.uplink) and not np.any(plan.compute) and not np.any(plan.downlink)
            energy = read_csv(out / "energy.csv")
            total = sum(float(r["local_J"]) for r in energy)
            assert total == pytest.approx(local_baseline(sc).total, rel=1e-15)

    def test_byte_identical_reruns(self, cfg_path, tmp_path):
        for run in ("a", "b"):
            assert main(["simulate", "--config", cfg_path, "--strategy", "partial",
                         "--out", str(tmp_path / run)]) == 0
        for name in ("allocation.csv", "energy.csv", "summary.txt"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_seed_changes_draws(self, tmp_path):
        path = write_config(tmp_path / "r.yaml", fleet={"input_bits": {"min": "200Kbit", "max": "300Kbit"}})
        outs = []
        for seed in ("1", "2"):
            out = tmp_path / seed
            assert main(["simulate", "--config", path, "--seed", seed, "--strategy", "local",
                         "--out", str(out)]) == 0
            outs.append((out / "energy.csv").read_bytes())
        assert outs[0] != outs[1]

    def test_config_error_exit_code(self, tmp_path, capsys):
        path = write_config(tmp_path / "bad.yaml", radio={"bandwith": "1MHz"})
        assert main(["simulate", "--config", path, "--out", str(tmp_path / "o")]) == 2
        assert "radio.bandwith" in capsys.readouterr().err
        assert main(["simulate", "--config", str(tmp_path / "missing.yaml"), "--out", str(tmp_path)]) == 2
        assert main(["simulate", "--config", path, "--tolerance", "-1", "--out", str(tmp_path)]) == 2

    def test_infeasible_exit_code(self, tmp_path, capsys):
        path = write_config(tmp_path / "big.yaml", fleet={"input_bits": ["300Kbit", "2Mbit"]})
        out = tmp_path / "o"
        assert main(["simulate", "--config", path, "--strategy", "complete", "--out", str(out)]) == 3
        err = capsys.readouterr().err
        assert "vehicle 1" in err and "uplink_total" in err
        assert not out.exists()

    def test_refuses_invalid_plan(self, tmp_path, capsys):
        # one lane, staggered by a frame: uniform shares overflow the shared cap where the
        # vehicles overlap, while the optimizer can use the frames each has alone
        path = write_config(tmp_path / "tight.yaml", caps={"rsu_uplink": "120Kbit"},
                            fleet={"lanes": [1, 1]},
                            road={"lane_speeds": ["25m/s"]})
        out = tmp_path / "o"
        assert main(["simulate", "--config", path, "--strategy", "equal", "--out", str(out)]) == 3
        assert "rsu_uplink_cap" in capsys.readouterr().err
        assert not (out / "allocation.csv").exists()
        # the optimizer respects the shared cap on the same instance
        assert main(["simulate", "--config", path, "--strategy", "complete", "--out", str(out)]) == 0


class TestSweeps:
    def test_deadline_sweep(self, cfg_path, tmp_path):
        out = tmp_path / "sweep"
        assert main(["sweep-deadline", "--config", cfg_path, "--deadlines", "5,6,8", "--out", str(out)]) == 0
        rows = read_csv(out / "deadline_sweep.csv")
        assert [float(r["T_s"]) for r in rows] == [5.0, 6.0, 8.0]
        assert [int(r["N"]) for r in rows] == [5, 6, 8]
        for r in rows:
            assert r["complete_status"] == "ok" and r["partial_status"] == "ok"
            assert float(r["partial_J"]) <= float(r["complete_J"]) * (1 + 1e-8)
        local = [float(r["local_J"]) for r in rows]
        assert local[0] * 25 == pytest.approx(local[2] * 64, rel=1e-12)
        assert len(list((out / "cells").glob("deadline_*.json"))) == 3

    def test_deadline_sweep_records_infeasible_cells(self, tmp_path):
        path = write_config(tmp_path / "big.yaml", fleet={"input_bits": ["900Kbit", "250Kbit"]})
        config, tasks = load_config(path)
        cells = run_sweep_deadline(config, tasks, [5.0, 8.0], tmp_path / "o", strategies=["local", "complete"])
        assert cells[0]["complete"] is None and cells[0]["complete_status"].startswith("infeasible:")
        assert cells[1]["complete_status"] == "ok"
        rows = read_csv(tmp_path / "o" / "deadline_sweep.csv")
        assert rows[0]["complete_J"] == "" and "equal_J" not in rows[0]

    def test_workers_do_not_change_output(self, cfg_path, tmp_path):
        for w in ("1", "2"):
            assert main(["sweep-deadline", "--config", cfg_path, "--deadlines", "5,6",
                         "--strategy", "complete,partial", "--workers", w, "--out", str(tmp_path / w)]) == 0
        assert (tmp_path / "1" / "deadline_sweep.csv").read_bytes() == \
            (tmp_path / "2" / "deadline_sweep.csv").read_bytes()

    def test_rho_sweep(self, cfg_path, tmp_path):
        out = tmp_path / "rho"
        assert main(["sweep-rho", "--config", cfg_path, "--rho-step", "0.25", "--out", str(out)]) == 0
        rows = read_csv(out / "rho_sweep.csv")
        assert [float(r["rho"]) for r in rows] == [0.0, 0.25, 0.5, 0.75, 1.0]
        checks = json.loads((out / "manifest.json").read_text())["endpoint_checks"]
        assert checks["rho0_vs_local_rel"] <= 1e-8 and checks["rho1_vs_complete_rel"] <= 1e-8

    def test_rho_sweep_api(self, cfg_path, tmp_path):
        config, tasks = load_config(cfg_path)
        sweep = run_sweep_rho(config, tasks, [0.0, 0.5, 1.0], tmp_path)
        assert sweep.energies()[0] == pytest.approx(sweep.local_total, rel=1e-12)
        assert sweep.energies()[2] == pytest.approx(sweep.complete_total, rel=1e-8)
        with pytest.raises(ValueError):
            run_sweep_rho(config, tasks, [1.5], tmp_path)

    def test_bad_grids(self, cfg_path, tmp_path):
        assert main(["sweep-rho", "--config", cfg_path, "--rho-step", "0.3", "--out", str(tmp_path)]) == 2
        assert main(["sweep-deadline", "--config", cfg_path, "--deadlines", "5.5", "--out", str(tmp_path)]) == 2
        assert main(["sweep-deadline", "--config", cfg_path, "--strategy", "greedy", "--out", str(tmp_path)]) == 2


class TestValidate:
    def test_config_only(self, cfg_path, capsys):
        assert main(["validate", "--config", cfg_path]) == 0
        out = capsys.readouterr().out
        assert "config digest" in out and "N=6" in out

    def test_written_plan(self, cfg_path, tmp_path, capsys):
        out = tmp_path / "plan"
        assert main(["simulate", "--config", cfg_path, "--strategy", "complete", "--out", str(out)]) == 0
        assert main(["validate", "--config", cfg_path, "--plan", str(out)]) == 0
        # tamper: move bits from the last uplink frame to a forbidden one
        rows = read_csv(out / "allocation.csv")
        rows[3]["uplink_bits"], rows[4]["uplink_bits"] = "0.0", rows[3]["uplink_bits"]
        with open(out / "allocation.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
        capsys.readouterr()
        assert main(["validate", "--config", cfg_path, "--plan", str(out)]) == 3
        assert "pipeline_window" in capsys.readouterr().out

    def test_solve_and_validate(self, cfg_path, capsys):
        assert main(["validate", "--config", cfg_path, "--strategy", "partial"]) == 0
        assert "status optimal" in capsys.readouterr().out

    def test_infeasible_config(self, tmp_path):
        path = write_config(tmp_path / "big.yaml", fleet={"input_bits": ["300Kbit", "2Mbit"]})
        assert main(["validate", "--config", path]) == 3
