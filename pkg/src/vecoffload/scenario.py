"""Road geometry, vehicle kinematics and line-of-sight channel gains.

RSUs sit on the x axis at ``r_rsu + (m - 1) d``. Vehicles enter the road at
x = 0 (the coverage edge of the first RSU) at their arrival frame and drive
at their lane speed for N = T / frame frames. Every vehicle talks to its
nearest RSU in every frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def dbm_per_hz_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def h0_from_reference_snr(snr_db: float, N0: float, B: float) -> float:
    """Reference gain at 1 m such that ``h0 / (N0 B)`` equals the given SNR."""
    return db_to_linear(snr_db) * N0 * B


def required_rsu_count(v_max: float, T: float, r_rsu: float, d: float) -> int:
    """Number of RSUs needed to cover the farthest point the fastest vehicle reaches."""
    if v_max <= 0 or T <= 0 or d <= 0 or r_rsu < 0:
        raise ValueError("v_max, T and d must be positive and r_rsu nonnegative")
    reach = v_max * T
    if reach < r_rsu:
        raise ValueError(f"road length v_max*T={reach:g} m is shorter than one coverage radius {r_rsu:g} m")
    return int(math.ceil((reach - r_rsu) / d + 0.5))


def frames_per_window(T: float, frame: float) -> int:
    """N = T / frame, insisting on an integer ratio of at least 3."""
    if T <= 0 or frame <= 0:
        raise ValueError("deadline and frame duration must be positive")
    ratio = T / frame
    N = int(round(ratio))
    if N < 1 or abs(ratio - N) > 1e-9 * max(N, 1):
        raise ValueError(f"deadline {T:g} s is not an integer multiple of the frame {frame:g} s")
    if N < 3:
        raise ValueError(f"need at least 3 frames per window for the uplink/compute/downlink pipeline, got {N}")
    return N


@dataclass(frozen=True)
class ScenarioConfig:
    """Road, radio and timing parameters, all in SI units.

    ``N0`` is the linear noise PSD in W/Hz and ``h0`` the linear reference
    gain. The slot duration is derived as ``frame / num_vehicles``.
    """

    r_rsu: float = 100.0
    d: float = 200.0
    d_lane: float = 3.5
    H: float = 10.0
    lane_speeds: tuple = (20.0, 25.0, 30.0)
    B: float = 40e6
    N0: float = dbm_per_hz_to_watts(-174.0)
    h0: float = h0_from_reference_snr(20.0, dbm_per_hz_to_watts(-174.0), 40e6)
    T: float = 20.0
    frame: float = 0.04
    num_vehicles: int = 10
    L_u_max: float = 180e3
    L_d_max: float = 140e3
    L_max: float = 250e3
    rng_seed: int = 0
    num_rsus: Optional[int] = None
    arrival_window: float = 20.0
    gamma_r: float = 1e-28
    f_r: float = 1e9

    def __post_init__(self):
        object.__setattr__(self, "lane_speeds", tuple(float(v) for v in self.lane_speeds))
        positive = {
            "d": self.d, "d_lane": self.d_lane, "H": self.H, "B": self.B, "N0": self.N0,
            "h0": self.h0, "T": self.T, "frame": self.frame, "L_u_max": self.L_u_max,
            "L_d_max": self.L_d_max, "L_max": self.L_max, "gamma_r": self.gamma_r,
        }
        for name, value in positive.items():
            if not value > 0:
                raise ValueError(f"{name} must be strictly positive, got {value!r}")
        if self.r_rsu < 0:
            raise ValueError("r_rsu must be nonnegative")
        if self.f_r < 0:
            raise ValueError("f_r must be nonnegative")
        if self.num_vehicles < 1:
            raise ValueError("num_vehicles must be at least 1")
        if not self.lane_speeds or min(self.lane_speeds) <= 0:
            raise ValueError("lane_speeds must be a nonempty list of positive speeds")
        if self.arrival_window < 0:
            raise ValueError("arrival_window must be nonnegative")
        if self.num_rsus is not None and self.num_rsus < 1:
            raise ValueError("num_rsus must be at least 1")
        frames_per_window(self.T, self.frame)

    @property
    def J(self) -> int:
        return len(self.lane_speeds)

    @property
    def slot(self) -> float:
        return self.frame / self.num_vehicles

    @property
    def N(self) -> int:
        return frames_per_window(self.T, self.frame)

    @property
    def M(self) -> int:
        if self.num_rsus is not None:
            return self.num_rsus
        return required_rsu_count(max(self.lane_speeds), self.T, self.r_rsu, self.d)

    def with_deadline(self, T: float) -> "ScenarioConfig":
        return replace(self, T=float(T))


@dataclass(frozen=True)
class VehicleTask:
    L: float
    C: float
    kappa: float
    gamma_v: float
    lane: int
    arrival_frame: int

    def __post_init__(self):
        if not self.L > 0:
            raise ValueError("task input size L must be positive")
        if not self.C > 0:
            raise ValueError("cycles per bit C must be positive")
        if not self.gamma_v > 0:
            raise ValueError("switched capacitance must be positive")
        if not 0 < self.kappa <= 1:
            raise ValueError("output ratio kappa must lie in (0, 1]")
        if self.lane < 1:
            raise ValueError("lanes are numbered from 1")
        if self.arrival_frame < 0:
            raise ValueError("arrival frame must be nonnegative")


def rsu_position(m: int, config: ScenarioConfig) -> tuple:
    if not 1 <= m <= config.M:
        raise IndexError(f"RSU index {m} outside 1..{config.M}")
    return (config.r_rsu + (m - 1) * config.d, 0.0)


def rsu_positions(config: ScenarioConfig) -> np.ndarray:
    m = np.arange(config.M)
    return np.column_stack([config.r_rsu + m * config.d, np.zeros(config.M)])


def nearest_rsu(p, rsus) -> int:
    """1-based index of the closest RSU; exact ties go to the lower index."""
    rsus = np.asarray(rsus, dtype=float).reshape(-1, 2)
    if rsus.shape[0] == 0:
        raise ValueError("no RSUs")
    d2 = np.sum((rsus - np.asarray(p, dtype=float)) ** 2, axis=1)
    return int(np.argmin(d2)) + 1


def vehicle_position(task: VehicleTask, n: int, config: ScenarioConfig) -> tuple:
    """Position at absolute frame ``n`` of a vehicle that arrived at ``task.arrival_frame``."""
    local = n - task.arrival_frame
    if not 1 <= local <= config.N:
        raise ValueError(f"frame {n} is outside the active window "
                         f"[{task.arrival_frame + 1}, {task.arrival_frame + config.N}]")
    if task.lane > config.J:
        raise ValueError(f"lane {task.lane} does not exist (J={config.J})")
    v = config.lane_speeds[task.lane - 1]
    return (local * config.frame * v, (task.lane - 1) * config.d_lane)


def gain_at(p, config: ScenarioConfig, rsus: Optional[np.ndarray] = None) -> float:
    rsus = rsu_positions(config) if rsus is None else rsus
    m = nearest_rsu(p, rsus)
    dist2 = float(np.sum((np.asarray(p, dtype=float) - rsus[m - 1]) ** 2))
    return config.h0 / (dist2 + config.H ** 2)


def channel_gain(task: VehicleTask, n: int, config: ScenarioConfig) -> float:
    return gain_at(vehicle_position(task, n, config), config)


@dataclass
class Timeline:
    """Per-vehicle, per-local-frame geometry. Arrays are indexed ``[k, nu - 1]``."""

    N: int
    global_frames: int
    arrival: np.ndarray
    x: np.ndarray
    y: np.ndarray
    rsu: np.ndarray
    gain: np.ndarray
    rsus: np.ndarray

    @property
    def K(self) -> int:
        return self.arrival.size

    def absolute_frame(self, k: int, nu: int) -> int:
        return int(self.arrival[k]) + nu


def build_timeline(config: ScenarioConfig, tasks: Sequence[VehicleTask]) -> Timeline:
    N = config.N
    rsus = rsu_positions(config)
    K = len(tasks)
    arrival = np.array([t.arrival_frame for t in tasks], dtype=np.int64)
    nu = np.arange(1, N + 1)
    x = np.empty((K, N))
    y = np.empty((K, N))
    for k, task in enumerate(tasks):
        if not 1 <= task.lane <= config.J:
            raise ValueError(f"vehicle {k} uses lane {task.lane}, config has {config.J} lanes")
        v = config.lane_speeds[task.lane - 1]
        x[k] = nu * config.frame * v
        y[k] = (task.lane - 1) * config.d_lane
    dx = x[:, :, None] - rsus[None, None, :, 0]
    dy = y[:, :, None] - rsus[None, None, :, 1]
    d2 = dx * dx + dy * dy
    idx = np.argmin(d2, axis=2)
    dmin = np.take_along_axis(d2, idx[:, :, None], axis=2)[:, :, 0]
    gain = config.h0 / (dmin + config.H ** 2)
    global_frames = int(arrival.max()) + N if K else 0
    return Timeline(N, global_frames, arrival, x, y, idx + 1, gain, rsus)


def active_sets(timeline: Timeline, last_local_frame: Optional[int] = None) -> dict:
    """Map ``(absolute frame, rsu)`` to the sorted tuple of vehicles served there.

    Only local frames ``1..last_local_frame`` (default: the full window) count
    as active, so passing ``N - 2`` yields the uplink groupings.
    """
    last = timeline.N if last_local_frame is None else last_local_frame
    groups: dict = {}
    for k in range(timeline.K):
        for nu in range(1, last + 1):
            key = (int(timeline.arrival[k]) + nu, int(timeline.rsu[k, nu - 1]))
            groups.setdefault(key, []).append(k)
    return {key: tuple(v) for key, v in sorted(groups.items())}


def generate_arrivals(seed, K: int, t_max: float, frame: float) -> np.ndarray:
    """Arrival frames drawn uniformly from ``{0, ..., floor(t_max / frame)}``."""
    if t_max < 0:
        raise ValueError("t_max must be nonnegative")
    hi = int(math.floor(t_max / frame + 1e-9))
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return rng.integers(0, hi + 1, size=K)


def arrival_frame(t: float, frame: float) -> int:
    return int(round(t / frame))


@dataclass
class Scenario:
    config: ScenarioConfig
    tasks: list
    timeline: Timeline = field(repr=False)

    @classmethod
    def build(cls, config: ScenarioConfig, tasks: Sequence[VehicleTask]) -> "Scenario":
        if len(tasks) != config.num_vehicles:
            raise ValueError(f"config expects {config.num_vehicles} vehicles, got {len(tasks)} tasks")
        return cls(config, list(tasks), build_timeline(config, tasks))

    @property
    def K(self) -> int:
        return len(self.tasks)

    @property
    def N(self) -> int:
        return self.timeline.N

    def with_deadline(self, T: float) -> "Scenario":
        return Scenario.build(self.config.with_deadline(T), self.tasks)
