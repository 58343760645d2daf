from pathlib import Path

import numpy as np
import pytest

from vecoffload.config import ConfigError, build_from_mapping, config_digest, load_config, parse_quantity
from vecoffload.scenario import dbm_per_hz_to_watts

DEFAULT_YAML = Path(__file__).resolve().parents[1] / "configs" / "default.yaml"


class TestQuantities:
    @pytest.mark.parametrize("text, dim, expected", [
        ("40MHz", "frequency", 40e6),
        ("4ms", "time", 0.004),
        ("180Kbit", "bits", 180e3),
        ("10Mbits", "bits", 1e7),
        ("3.5m", "length", 3.5),
        ("90km/h", "speed", 25.0),
        ("1e-20W/Hz", "psd", 1e-20),
    ])
    def test_units(self, text, dim, expected):
        assert parse_quantity(text, dim, "x") == pytest.approx(expected, rel=1e-12)

    def test_db(self):
        assert parse_quantity("20dB", "db", "x") == pytest.approx(100.0, rel=1e-12)
        assert parse_quantity("-174dBm/Hz", "psd", "x") == pytest.approx(10 ** -20.4, rel=1e-12)

    @pytest.mark.parametrize("value, dim", [
        (40e6, "frequency"),      # bare number on a dimensional field
        ("40MHz", "time"),        # wrong dimension
        ("40 furlongs", "length"),
        ("fast", "speed"),
        (True, "number"),
    ])
    def test_rejected(self, value, dim):
        with pytest.raises(ConfigError) as err:
            parse_quantity(value, dim, "radio.bandwidth")
        assert err.value.key == "radio.bandwidth"


class TestLoad:
    def test_default_file_constants(self):
        cfg, tasks = load_config(DEFAULT_YAML)
        assert cfg.N == 500
        assert cfg.slot == pytest.approx(0.004, rel=1e-12)
        assert cfg.M == 3
        assert len(tasks) == 10
        assert cfg.h0 == pytest.approx(100.0 * dbm_per_hz_to_watts(-174.0) * 40e6, rel=1e-12)
        assert all(10e6 <= t.L <= 25e6 for t in tasks)
        assert all(0 <= t.arrival_frame <= 500 for t in tasks)

    def test_file_matches_builtin_defaults(self):
        a = load_config(DEFAULT_YAML)
        b = build_from_mapping({})
        assert config_digest(*a) == config_digest(*b)

    def test_seed_override(self):
        a = load_config(DEFAULT_YAML, seed=3)
        b = build_from_mapping({"seed": 3})
        c = build_from_mapping({"seed": 4})
        assert config_digest(*a) == config_digest(*b)
        assert config_digest(*a) != config_digest(*c)
        assert a[0].rng_seed == 3

    def test_explicit_fleet(self):
        cfg, tasks = build_from_mapping({
            "timing": {"frame": "80ms", "slot": "40ms"},
            "fleet": {"vehicles": 2, "input_bits": ["10Mbit", "12Mbit"], "lanes": [1, 3],
                      "arrival_times": ["0s", "1s"]},
        })
        assert [t.L for t in tasks] == [1e7, 1.2e7]
        assert [t.lane for t in tasks] == [1, 3]
        assert [t.arrival_frame for t in tasks] == [0, 12]
        assert cfg.N == 250

    @pytest.mark.parametrize("raw, key", [
        ({"radio": {"bandwith": "40MHz"}}, "radio.bandwith"),
        ({"weather": {}}, "weather"),
        ({"radio": {"bandwidth": "40MHz/s"}}, "radio.bandwidth"),
        ({"radio": {"bandwidth": 40e6}}, "radio.bandwidth"),
        ({"timing": {"deadline": "20.01s"}}, "timing.deadline"),
        ({"timing": {"slot": "5ms"}}, "timing.slot"),
        ({"fleet": {"input_bits": ["10Mbit", "12Mbit"]}}, "fleet.input_bits"),
        ({"fleet": {"input_bits": {"min": "10Mbit"}}}, "fleet.input_bits"),
        ({"fleet": {"lanes": 4}}, "fleet.lanes"),
        ({"fleet": {"vehicles": 0}}, "fleet.vehicles"),
        ({"seed": "zero"}, "seed"),
    ])
    def test_errors_name_the_key(self, raw, key):
        with pytest.raises(ConfigError) as err:
            build_from_mapping(raw)
        assert err.value.key == key
        assert key in str(err.value)

    def test_missing_and_malformed_files(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.yaml")
        bad = tmp_path / "bad.yaml"
        bad.write_text("road: [unclosed\n")
        with pytest.raises(ConfigError):
            load_config(bad)

    def test_draws_are_seeded(self):
        a = build_from_mapping({"seed": 11})[1]
        b = build_from_mapping({"seed": 11})[1]
        assert [(t.L, t.lane, t.arrival_frame) for t in a] == [(t.L, t.lane, t.arrival_frame) for t in b]
        lanes = np.array([t.lane for t in a])
        assert lanes.min() >= 1 and lanes.max() <= 3
