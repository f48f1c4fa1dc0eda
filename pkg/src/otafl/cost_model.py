"""Closed-form delay, energy, reliability and fairness of a client.

Scalar functions take a ``ClientProfile``; :func:`fleet_costs` evaluates the
same formulas for a whole fleet at once and is what the selectors use.

Division by zero never raises: a client with zero rate gets infinite
transmission delay/energy, and a client with zero recorded failures has an
infinite MTBF (reliability 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .domain import ClientProfile, SelectionHistory, SystemConfig


@dataclass(frozen=True)
class CostBreakdown:
    comp_delay: float
    tx_rate: float
    tx_delay: float
    comp_energy: float
    tx_energy: float
    mtbf: float
    reliability: float

    @property
    def total_delay(self) -> float:
        return self.comp_delay + self.tx_delay

    @property
    def total_energy(self) -> float:
        return self.comp_energy + self.tx_energy


def _local_iterations(p: ClientProfile) -> float:
    if p.target_accuracy <= 0:
        raise ValueError(f"client {p.id}: target_accuracy must be positive, got {p.target_accuracy}")
    return p.iteration_factor * math.log2(1.0 / p.target_accuracy)


def computation_delay(p: ClientProfile) -> float:
    return p.cycles_per_sample * p.data_size / p.cpu_freq * _local_iterations(p)


def transmission_rate(p: ClientProfile, cfg: SystemConfig) -> float:
    snr = p.channel_gain * p.tx_power / (cfg.noise_psd * p.bandwidth)
    return p.bandwidth * math.log2(1.0 + snr)


def transmission_delay(model_size_bits: float, rate: float) -> float:
    if rate == 0:
        return math.inf if model_size_bits > 0 else 0.0
    return model_size_bits / rate


def computation_energy(p: ClientProfile) -> float:
    return p.energy_coeff * p.cpu_freq**2 * p.cycles_per_sample * p.data_size * _local_iterations(p)


def transmission_energy(p: ClientProfile, cfg: SystemConfig) -> float:
    if p.tx_power == 0:
        return 0.0
    return p.tx_power * transmission_delay(cfg.model_size_bits, transmission_rate(p, cfg))


def mtbf(comp_delay: float, failures: int) -> float:
    if failures == 0:
        return math.inf
    return comp_delay / failures


def reliability(t: float, mtbf: float) -> float:
    """Probability of running for ``t`` seconds without failing."""
    if math.isinf(mtbf):
        return 1.0
    if mtbf == 0:
        return 1.0 if t == 0 else 0.0
    return math.exp(-t / mtbf)


def fairness_fraction(hist: SelectionHistory, client_id: int) -> float:
    if hist.rounds_elapsed < 1:
        raise ValueError("fairness fraction is undefined before the first round")
    return hist.counts[client_id] / hist.rounds_elapsed


def client_costs(p: ClientProfile, cfg: SystemConfig) -> CostBreakdown:
    """All cost terms for one client; reliability is taken over its own round window."""
    tc = computation_delay(p)
    rate = transmission_rate(p, cfg)
    tt = transmission_delay(cfg.model_size_bits, rate)
    m = mtbf(tc, p.failure_count)
    return CostBreakdown(
        comp_delay=tc,
        tx_rate=rate,
        tx_delay=tt,
        comp_energy=computation_energy(p),
        tx_energy=transmission_energy(p, cfg),
        mtbf=m,
        reliability=reliability(tc + tt, m),
    )


@dataclass(frozen=True)
class FleetCosts:
    """Per-client cost arrays, index-aligned with the fleet."""

    comp_delay: np.ndarray
    tx_rate: np.ndarray
    tx_delay: np.ndarray
    comp_energy: np.ndarray
    tx_energy: np.ndarray
    reliability: np.ndarray

    @property
    def total_delay(self) -> np.ndarray:
        return self.comp_delay + self.tx_delay

    @property
    def total_energy(self) -> np.ndarray:
        return self.comp_energy + self.tx_energy

    def __len__(self) -> int:
        return len(self.comp_delay)


def fleet_costs(fleet: Sequence[ClientProfile], cfg: SystemConfig) -> FleetCosts:
    C = np.array([p.cycles_per_sample for p in fleet], dtype=float)
    D = np.array([p.data_size for p in fleet], dtype=float)
    f = np.array([p.cpu_freq for p in fleet], dtype=float)
    ups = np.array([p.iteration_factor for p in fleet], dtype=float)
    eps = np.array([p.target_accuracy for p in fleet], dtype=float)
    zeta = np.array([p.energy_coeff for p in fleet], dtype=float)
    pw = np.array([p.tx_power for p in fleet], dtype=float)
    b = np.array([p.bandwidth for p in fleet], dtype=float)
    g = np.array([p.channel_gain for p in fleet], dtype=float)
    m = np.array([p.failure_count for p in fleet], dtype=float)
    if np.any(eps <= 0):
        raise ValueError("target_accuracy must be positive for every client")

    iters = ups * np.log2(1.0 / eps)
    tc = C * D / f * iters
    ec = zeta * f**2 * C * D * iters
    rate = b * np.log2(1.0 + g * pw / (cfg.noise_psd * b))
    with np.errstate(divide="ignore", invalid="ignore"):
        tt = np.where(rate > 0, cfg.model_size_bits / np.where(rate > 0, rate, 1.0), np.inf)
        et = np.where(pw > 0, pw * tt, 0.0)
        window = tc + tt
        # t / MTBF = t * m / tc; m == 0 means no failures ever.
        exponent = np.where(m > 0, window * m / np.where(tc > 0, tc, 1.0), 0.0)
        exponent = np.where((m > 0) & (tc == 0), np.where(window > 0, np.inf, 0.0), exponent)
        rel = np.exp(-exponent)
    return FleetCosts(tc, rate, tt, ec, et, rel)
