"""Computation and radio energy models.

All functions take linear SI quantities and accept numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# 2**x is evaluated only up to this exponent; beyond it the caller gets an error
MAX_EXPONENT = 64.0


@dataclass(frozen=True)
class RadioParams:
    B: float
    delta: float
    N0: float

    def __post_init__(self):
        if not (self.B > 0 and self.delta > 0 and self.N0 > 0):
            raise ValueError("bandwidth, slot duration and noise PSD must be positive")

    @property
    def slot_bits(self) -> float:
        """Bits per slot at unit spectral efficiency (``B * delta``)."""
        return self.B * self.delta


@dataclass(frozen=True)
class ComputeParams:
    gamma: float
    C: float
    role: str = "vehicle"

    def __post_init__(self):
        if not (self.gamma > 0 and self.C > 0):
            raise ValueError("gamma and C must be positive")
        if self.role not in ("vehicle", "rsu"):
            raise ValueError("role must be 'vehicle' or 'rsu'")


def _nonneg(name, value):
    arr = np.asarray(value, dtype=float)
    if np.any(arr < 0):
        raise ValueError(f"{name} must be nonnegative")
    return arr


def _out(arr):
    return float(arr) if np.ndim(arr) == 0 else arr


def computation_energy(l, f, params: ComputeParams):
    """CPU energy ``gamma * C * l * f**2`` for ``l`` bits at frequency ``f``."""
    l = _nonneg("bits", l)
    f = _nonneg("frequency", f)
    return _out(params.gamma * params.C * l * f * f)


def local_cpu_frequency(C, l, T):
    """Frequency that finishes ``l`` bits in exactly ``T`` seconds."""
    if np.any(np.asarray(T) <= 0):
        raise ValueError("T must be positive")
    return _out(np.asarray(C, dtype=float) * _nonneg("bits", l) / np.asarray(T, dtype=float))


def local_execution_energy(l, C, gamma, T):
    """Energy of running ``l`` bits locally within ``T``: ``gamma C^3 l^3 / T^2``."""
    if np.any(np.asarray(T) <= 0):
        raise ValueError("T must be positive")
    l = _nonneg("bits", l)
    C = np.asarray(C, dtype=float)
    return _out(np.asarray(gamma, dtype=float) * C ** 3 * l ** 3 / np.asarray(T, dtype=float) ** 2)


def transmission_energy(bits, gain, radio: RadioParams, max_exponent: float = MAX_EXPONENT):
    """Energy to push ``bits`` through one slot at channel ``gain``.

    Inverts the Shannon rate ``B delta log2(1 + E h / (N0 B delta)) = bits``.
    """
    bits = _nonneg("bits", bits)
    gain = np.asarray(gain, dtype=float)
    if np.any(gain <= 0):
        raise ValueError("channel gain must be positive")
    expo = bits / radio.slot_bits
    if np.any(expo > max_exponent):
        raise ValueError(f"bits/(B*delta) exceeds {max_exponent:g}; refusing to evaluate 2**x")
    return _out(radio.N0 * radio.slot_bits / gain * np.expm1(np.log(2.0) * expo))


def transmissible_bits(energy, gain, radio: RadioParams):
    """Bits deliverable in one slot with ``energy`` joules at ``gain``."""
    energy = _nonneg("energy", energy)
    gain = np.asarray(gain, dtype=float)
    if np.any(gain <= 0):
        raise ValueError("channel gain must be positive")
    snr = energy * gain / (radio.N0 * radio.slot_bits)
    return _out(radio.slot_bits * np.log1p(snr) / np.log(2.0))


def rsu_compute_energy_report(plan, tasks, gamma_r: float, f_r: float) -> float:
    """RSU-side CPU energy of every computed bit in ``plan`` (reported, never optimized)."""
    compute = np.asarray(plan.compute, dtype=float)
    if compute.size == 0:
        return 0.0
    C = np.array([t.C for t in tasks], dtype=float)
    per_vehicle = compute.sum(axis=1)
    return float(gamma_r * np.sum(C * per_vehicle) * f_r ** 2)
