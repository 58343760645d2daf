"""YAML scenario files with explicit units.

A file has the sections ``road``, ``radio``, ``timing``, ``caps``, ``fleet``
and ``rsu`` plus an optional top-level ``seed``. Every dimensional value
carries a unit suffix (``"40MHz"``, ``"-174dBm/Hz"``, ``"10Mbit"``, ``"4ms"``)
and is converted to SI exactly once here. Random parts of the fleet (arrival
frames, input sizes, lanes) are drawn from ``numpy.random.default_rng(seed)``
in that order, unless listed explicitly.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import asdict
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from .scenario import (ScenarioConfig, VehicleTask, db_to_linear, dbm_per_hz_to_watts,
                       frames_per_window, generate_arrivals, arrival_frame)


class ConfigError(ValueError):
    """A scenario file problem, tagged with the dotted key it concerns."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


# unit -> (dimension, factor to SI)
_UNITS = {
    "m": ("length", 1.0), "km": ("length", 1e3),
    "m/s": ("speed", 1.0), "km/h": ("speed", 1.0 / 3.6),
    "s": ("time", 1.0), "ms": ("time", 1e-3), "us": ("time", 1e-6),
    "Hz": ("frequency", 1.0), "kHz": ("frequency", 1e3), "MHz": ("frequency", 1e6),
    "GHz": ("frequency", 1e9),
    "bit": ("bits", 1.0), "Kbit": ("bits", 1e3), "kbit": ("bits", 1e3),
    "Mbit": ("bits", 1e6), "Gbit": ("bits", 1e9),
    "W/Hz": ("psd", 1.0),
}
_NUMBER = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_QUANTITY = re.compile(rf"^\s*({_NUMBER})\s*([A-Za-z/]*)\s*$")


def parse_quantity(value: Any, dimension: str, key: str) -> float:
    """Convert ``value`` such as ``"40MHz"`` to SI for ``dimension``.

    ``dimension`` is one of the unit families above, ``"db"`` (returns the
    linear ratio), ``"psd"`` (also accepts ``dBm/Hz``) or ``"number"``.
    """
    if isinstance(value, bool):
        raise ConfigError(key, f"expected a {dimension} value, got a boolean")
    if dimension == "number":
        if isinstance(value, (int, float)):
            return float(value)
        m = _QUANTITY.match(str(value))
        if m and not m.group(2):
            return float(m.group(1))
        raise ConfigError(key, f"expected a plain number, got {value!r}")
    if isinstance(value, (int, float)):
        raise ConfigError(key, f"missing unit on {value!r} (expected a {dimension} unit)")
    m = _QUANTITY.match(str(value))
    if not m or not m.group(2):
        raise ConfigError(key, f"cannot parse {value!r} as a {dimension} quantity")
    number, unit = float(m.group(1)), m.group(2)
    if dimension == "db":
        if unit != "dB":
            raise ConfigError(key, f"expected a dB value, got unit {unit!r}")
        return db_to_linear(number)
    if dimension == "psd" and unit == "dBm/Hz":
        return dbm_per_hz_to_watts(number)
    # accept plural forms such as "Mbits"
    if unit not in _UNITS and unit.endswith("s") and unit[:-1] in _UNITS and _UNITS[unit[:-1]][0] == "bits":
        unit = unit[:-1]
    if unit not in _UNITS:
        raise ConfigError(key, f"unknown unit {unit!r}")
    dim, factor = _UNITS[unit]
    if dim != dimension:
        raise ConfigError(key, f"unit {unit!r} is a {dim} unit, expected {dimension}")
    return number * factor


# section -> key -> dimension
_SCHEMA = {
    "road": {"rsu_radius": "length", "rsu_spacing": "length", "lane_width": "length",
             "rsu_height": "length", "lane_speeds": "speed", "num_rsus": "count"},
    "radio": {"bandwidth": "frequency", "noise_psd": "psd", "reference_snr": "db"},
    "timing": {"deadline": "time", "frame": "time", "slot": "time"},
    "caps": {"uplink_slot": "bits", "downlink_slot": "bits", "rsu_uplink": "bits"},
    "fleet": {"vehicles": "count", "input_bits": "bits", "cycles_per_bit": "number",
              "output_ratio": "number", "switched_capacitance": "number",
              "arrival_window": "time", "arrival_times": "time", "lanes": "count"},
    "rsu": {"switched_capacitance": "number", "cpu_frequency": "frequency"},
}

DEFAULTS = {
    "seed": 0,
    "road": {"rsu_radius": "100m", "rsu_spacing": "200m", "lane_width": "3.5m",
             "rsu_height": "10m", "lane_speeds": ["20m/s", "25m/s", "30m/s"], "num_rsus": "auto"},
    "radio": {"bandwidth": "40MHz", "noise_psd": "-174dBm/Hz", "reference_snr": "20dB"},
    "timing": {"deadline": "20s", "frame": "40ms"},
    "caps": {"uplink_slot": "180Kbit", "downlink_slot": "140Kbit", "rsu_uplink": "250Kbit"},
    "fleet": {"vehicles": 10, "input_bits": {"min": "10Mbit", "max": "25Mbit"},
              "cycles_per_bit": 1550.7, "output_ratio": 0.5, "switched_capacitance": 1e-28,
              "arrival_window": "20s"},
    "rsu": {"switched_capacitance": 1e-28, "cpu_frequency": "1GHz"},
}


def _count(value, key: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(key, f"expected an integer, got {value!r}")
    return value


def _merged(raw: dict) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "top level must be a mapping")
    out = {"seed": raw.get("seed", DEFAULTS["seed"])}
    for key in raw:
        if key != "seed" and key not in _SCHEMA:
            raise ConfigError(str(key), "unknown section")
    for section, keys in _SCHEMA.items():
        given = raw.get(section) or {}
        if not isinstance(given, dict):
            raise ConfigError(section, "section must be a mapping")
        for key in given:
            if key not in keys:
                raise ConfigError(f"{section}.{key}", "unknown key")
        merged = dict(DEFAULTS[section])
        merged.update(given)
        out[section] = merged
    return out


def _scalar_or_list(value, K: int, dimension: str, key: str) -> np.ndarray:
    if isinstance(value, (list, tuple)):
        if len(value) != K:
            raise ConfigError(key, f"expected {K} entries (one per vehicle), got {len(value)}")
        return np.array([parse_quantity(v, dimension, f"{key}[{i}]") for i, v in enumerate(value)])
    return np.full(K, parse_quantity(value, dimension, key))


def build_from_mapping(raw: dict, seed: Optional[int] = None):
    """Normalize a parsed mapping into ``(ScenarioConfig, [VehicleTask])``.

    ``seed`` overrides the file's ``seed`` entry.
    """
    merged = _merged(raw)
    seed = merged["seed"] if seed is None else seed
    seed = _count(seed, "seed")
    road, radio, timing, caps, fleet, rsu = (merged[s] for s in ("road", "radio", "timing", "caps", "fleet", "rsu"))

    speeds = road["lane_speeds"]
    if not isinstance(speeds, (list, tuple)) or not speeds:
        raise ConfigError("road.lane_speeds", "expected a nonempty list of speeds")
    lane_speeds = tuple(parse_quantity(v, "speed", f"road.lane_speeds[{i}]") for i, v in enumerate(speeds))
    num_rsus = road["num_rsus"]
    num_rsus = None if num_rsus == "auto" else _count(num_rsus, "road.num_rsus")

    K = _count(fleet["vehicles"], "fleet.vehicles")
    if K < 1:
        raise ConfigError("fleet.vehicles", "need at least one vehicle")
    B = parse_quantity(radio["bandwidth"], "frequency", "radio.bandwidth")
    N0 = parse_quantity(radio["noise_psd"], "psd", "radio.noise_psd")
    snr = parse_quantity(radio["reference_snr"], "db", "radio.reference_snr")
    T = parse_quantity(timing["deadline"], "time", "timing.deadline")
    frame = parse_quantity(timing["frame"], "time", "timing.frame")
    if "slot" in timing:
        slot = parse_quantity(timing["slot"], "time", "timing.slot")
        if abs(frame - K * slot) > 1e-12 * frame:
            raise ConfigError("timing.slot", f"frame {frame:g} s is not {K} slots of {slot:g} s "
                                             f"(orthogonal access needs frame = vehicles x slot)")
    try:
        frames_per_window(T, frame)
    except ValueError as exc:
        raise ConfigError("timing.deadline", str(exc)) from None

    window = parse_quantity(fleet["arrival_window"], "time", "fleet.arrival_window")
    try:
        config = ScenarioConfig(
            r_rsu=parse_quantity(road["rsu_radius"], "length", "road.rsu_radius"),
            d=parse_quantity(road["rsu_spacing"], "length", "road.rsu_spacing"),
            d_lane=parse_quantity(road["lane_width"], "length", "road.lane_width"),
            H=parse_quantity(road["rsu_height"], "length", "road.rsu_height"),
            lane_speeds=lane_speeds, B=B, N0=N0, h0=snr * N0 * B, T=T, frame=frame,
            num_vehicles=K,
            L_u_max=parse_quantity(caps["uplink_slot"], "bits", "caps.uplink_slot"),
            L_d_max=parse_quantity(caps["downlink_slot"], "bits", "caps.downlink_slot"),
            L_max=parse_quantity(caps["rsu_uplink"], "bits", "caps.rsu_uplink"),
            rng_seed=seed, num_rsus=num_rsus, arrival_window=window,
            gamma_r=parse_quantity(rsu["switched_capacitance"], "number", "rsu.switched_capacitance"),
            f_r=parse_quantity(rsu["cpu_frequency"], "frequency", "rsu.cpu_frequency"),
        )
        config.M
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError("<config>", str(exc)) from None

    rng = np.random.default_rng(seed)
    if "arrival_times" in fleet:
        times = _scalar_or_list(fleet["arrival_times"], K, "time", "fleet.arrival_times")
        if np.any(times < 0):
            raise ConfigError("fleet.arrival_times", "arrival times must be nonnegative")
        arrivals = np.array([arrival_frame(t, frame) for t in times])
    else:
        arrivals = generate_arrivals(rng, K, window, frame)

    bits = fleet["input_bits"]
    if isinstance(bits, dict):
        extra = set(bits) - {"min", "max"}
        if extra:
            raise ConfigError(f"fleet.input_bits.{sorted(extra)[0]}", "unknown key")
        if "min" not in bits or "max" not in bits:
            raise ConfigError("fleet.input_bits", "a range needs both 'min' and 'max'")
        lo = parse_quantity(bits["min"], "bits", "fleet.input_bits.min")
        hi = parse_quantity(bits["max"], "bits", "fleet.input_bits.max")
        if not 0 < lo <= hi:
            raise ConfigError("fleet.input_bits", "need 0 < min <= max")
        L = rng.uniform(lo, hi, K)
    else:
        L = _scalar_or_list(bits, K, "bits", "fleet.input_bits")

    if "lanes" in fleet:
        lanes_raw = fleet["lanes"]
        if isinstance(lanes_raw, (list, tuple)):
            if len(lanes_raw) != K:
                raise ConfigError("fleet.lanes", f"expected {K} entries (one per vehicle), got {len(lanes_raw)}")
            lanes = np.array([_count(v, f"fleet.lanes[{i}]") for i, v in enumerate(lanes_raw)])
        else:
            lanes = np.full(K, _count(lanes_raw, "fleet.lanes"))
        if np.any(lanes < 1) or np.any(lanes > config.J):
            raise ConfigError("fleet.lanes", f"lanes must lie in 1..{config.J}")
    else:
        lanes = rng.integers(1, config.J + 1, size=K)

    C = _scalar_or_list(fleet["cycles_per_bit"], K, "number", "fleet.cycles_per_bit")
    kappa = _scalar_or_list(fleet["output_ratio"], K, "number", "fleet.output_ratio")
    gamma = _scalar_or_list(fleet["switched_capacitance"], K, "number", "fleet.switched_capacitance")
    tasks = []
    for k in range(K):
        try:
            tasks.append(VehicleTask(float(L[k]), float(C[k]), float(kappa[k]), float(gamma[k]),
                                     int(lanes[k]), int(arrivals[k])))
        except ValueError as exc:
            raise ConfigError(f"fleet[{k}]", str(exc)) from None
    return config, tasks


def load_config(path, seed: Optional[int] = None):
    """Read a YAML scenario file; returns ``(ScenarioConfig, [VehicleTask])``."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read file ({exc.strerror})") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(str(path), f"invalid YAML: {exc}") from None
    return build_from_mapping(raw or {}, seed)


def config_digest(config: ScenarioConfig, tasks) -> str:
    """SHA-256 over the normalized configuration and task list."""
    payload = {
        "config": asdict(config),
        "tasks": [asdict(t) for t in tasks],
    }
    text = json.dumps(payload, sort_keys=True, default=_jsonable)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _jsonable(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not serializable: {type(obj)!r}")
