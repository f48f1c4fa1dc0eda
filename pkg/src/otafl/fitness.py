"""Scalar fitness of a selection mask under the round's constraints.

Lower is better. The value is a weighted sum of five normalized attribute
terms, each in [0, 1], plus ``penalty_coeff`` for every violated constraint
instance. Because the weights sum to one the unpenalized part never exceeds
1, so any infeasible mask scores worse than any feasible one.

Normalization constants are taken from the whole fleet once per round so
scores are comparable across masks of the same round.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Sequence

import numpy as np

from .cost_model import FleetCosts, fleet_costs
from .domain import ClientProfile, SelectionHistory, SelectionMask, SystemConfig

# Order of the per-client columns in FitnessContext.client_violations.
PER_CLIENT_CONSTRAINTS = ("delay", "energy", "reliability", "accuracy", "cpu_cap", "power_cap")


@dataclass(frozen=True)
class FitnessWeights:
    w_loss: float = 0.4
    w_delay: float = 0.15
    w_energy: float = 0.15
    w_reliability: float = 0.15
    w_fairness: float = 0.15
    penalty_coeff: float = 1e6

    def __post_init__(self):
        ws = self.as_array()
        if np.any(ws < 0):
            raise ValueError("fitness weights must be non-negative")
        if abs(ws.sum() - 1.0) > 1e-9:
            raise ValueError(f"fitness weights must sum to 1, got {ws.sum()!r}")
        # Unpenalized fitness is bounded by 1.
        if not self.penalty_coeff > 1.0:
            raise ValueError("penalty_coeff must exceed 1")

    def as_array(self) -> np.ndarray:
        return np.array([self.w_loss, self.w_delay, self.w_energy, self.w_reliability, self.w_fairness])

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "FitnessWeights":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown field(s) for FitnessWeights: {', '.join(sorted(unknown))}")
        return cls(**d)


@dataclass(frozen=True)
class ConstraintStatus:
    ok: bool
    margin: float


@dataclass(frozen=True)
class FeasibilityReport:
    delay: ConstraintStatus
    energy: ConstraintStatus
    reliability: ConstraintStatus
    fairness: ConstraintStatus
    accuracy: ConstraintStatus
    cpu_cap: ConstraintStatus
    power_cap: ConstraintStatus
    bandwidth: ConstraintStatus
    nonempty: ConstraintStatus
    available: ConstraintStatus = ConstraintStatus(True, 0.0)

    @property
    def feasible(self) -> bool:
        return all(getattr(self, f.name).ok for f in fields(self))

    def violated(self) -> list[str]:
        return [f.name for f in fields(self) if not getattr(self, f.name).ok]


class FitnessContext:
    """Precomputed per-round state for scoring many masks quickly.

    ``available`` marks clients that may be selected this round at all (used in
    train-then-select mode, where clients that failed during training have no
    update to contribute). Unavailable clients count as violating.
    """

    def __init__(
        self,
        fleet: Sequence[ClientProfile],
        cfg: SystemConfig,
        hist: SelectionHistory,
        weights: FitnessWeights | None = None,
        available: Sequence[bool] | None = None,
        costs: FleetCosts | None = None,
    ):
        n = len(fleet)
        if len(hist.counts) != n:
            raise ValueError("selection history length does not match the fleet")
        self.fleet = list(fleet)
        self.cfg = cfg
        self.hist = hist
        self.weights = weights or FitnessWeights()
        self.n = n
        self.costs = costs if costs is not None else fleet_costs(fleet, cfg)
        self.available = np.ones(n, bool) if available is None else np.asarray(available, bool)

        c = self.costs
        self.data = np.array([p.data_size for p in fleet], float)
        self.hist_loss = np.array([p.historical_loss for p in fleet], float)
        self.bandwidth = np.array([p.bandwidth for p in fleet], float)
        self.min_fraction = np.array([p.min_selection_fraction for p in fleet], float)
        self.counts = np.asarray(hist.counts, float)
        self.delay = c.total_delay
        self.energy = c.total_energy
        self.reliability = c.reliability

        eps = np.array([p.target_accuracy for p in fleet], float)
        f = np.array([p.cpu_freq for p in fleet], float)
        fmax = np.array([p.cpu_freq_max for p in fleet], float)
        pw = np.array([p.tx_power for p in fleet], float)
        pmax = np.array([p.tx_power_max for p in fleet], float)
        budget_t = np.array([p.delay_budget for p in fleet], float)
        budget_e = np.array([p.energy_budget for p in fleet], float)

        with np.errstate(invalid="ignore"):
            self.margins = {
                "delay": budget_t - self.delay,
                "energy": np.where(self.energy > 0, budget_e - self.energy, -np.inf),
                "reliability": self.reliability - cfg.min_reliability,
                "accuracy": np.minimum(eps - cfg.min_accuracy, 1.0 - eps),
                "cpu_cap": np.minimum(fmax - f, f),
                "power_cap": np.minimum(pmax - pw, pw),
            }
        viol = np.stack([~(self.margins[k] >= 0) for k in PER_CLIENT_CONSTRAINTS], axis=1)
        viol = np.column_stack([viol, ~self.available])
        self.client_violations = viol
        self.violation_count = viol.sum(axis=1).astype(float)
        self.eligible = self.violation_count == 0

        # Fairness look-ahead: an eligible client that cannot reach its minimum
        # fraction unless picked now is forced.
        T = cfg.total_rounds
        self.remaining = max(T - hist.rounds_elapsed - 1, 0)
        self.fairness_slack = (self.counts + self.remaining) - self.min_fraction * T
        self.forced = self.eligible & (self.fairness_slack < -1e-9)
        self._spread_forced(cfg.total_bandwidth)

        # Fleet-wide normalization baselines.
        self.loss_lo, self.loss_hi = float(self.hist_loss.min()), float(self.hist_loss.max())
        finite_d = self.delay[np.isfinite(self.delay)]
        self.delay_lo = float(finite_d.min()) if finite_d.size else 0.0
        self.delay_hi = float(finite_d.max()) if finite_d.size else 0.0
        finite_e = self.energy[np.isfinite(self.energy)]
        cap = float(finite_e.max()) if finite_e.size else 0.0
        self.energy_capped = np.where(np.isfinite(self.energy), self.energy, cap)
        self.energy_lo = float(self.energy_capped.min())
        self.energy_hi = float(self.energy_capped.sum())
        self.delay_capped = np.where(np.isfinite(self.delay), self.delay, self.delay_hi)
        # Shortfall against the whole horizon: smallest with everyone selected,
        # largest with no one.
        self.fair_lo = float(np.maximum(0.0, self.min_fraction - (self.counts + 1) / T).sum() / n)
        self.fair_hi = float(np.maximum(0.0, self.min_fraction - self.counts / T).sum() / n)

    def _spread_forced(self, B: float) -> None:
        """Force extra clients while the outstanding demand cannot be scheduled.

        Demand is the number of selections each eligible client still needs.
        A greedy schedule (largest need first, packed under ``B``) over the
        rounds after this one checks whether that demand still fits; while it
        does not, the most urgent client that fits this round is forced. Without
        this, clients left to their last feasible round pile up in the same
        rounds and overflow the bandwidth.
        """
        T = self.cfg.total_rounds
        b = self.bandwidth
        need = np.ceil(self.min_fraction * T - self.counts - 1e-9)
        need = np.where(self.eligible & (b <= B), np.maximum(need, 0.0), 0.0).astype(int)

        spare = b[self.eligible & (need == 0) & (b <= B)]
        cap = B - (float(spare.max()) if spare.size else 0.0)

        def schedulable(left):
            left = left.copy()
            for _ in range(self.remaining):
                if not left.any():
                    break
                used = 0.0
                for i in sorted(np.flatnonzero(left > 0), key=lambda i: (-left[i], i)):
                    if used + b[i] <= cap:
                        used += b[i]
                        left[i] -= 1
            return not left.any()

        used = float(b[self.forced].sum())
        order = sorted(np.flatnonzero((need > 0) & ~self.forced), key=lambda i: (-need[i], i))
        for i in order:
            if schedulable(need - self.forced):
                break
            if used + b[i] <= B:
                self.forced[i] = True
                used += b[i]

    # -- scoring -----------------------------------------------------------

    def terms(self, masks: np.ndarray) -> np.ndarray:
        """Normalized attribute terms, shape (k, 5): loss, delay, energy, 1-reliability, fairness."""
        M = np.atleast_2d(np.asarray(masks, dtype=bool))
        Mf = M.astype(float)
        size = Mf.sum(axis=1)
        nonempty = size > 0
        safe = np.where(nonempty, size, 1.0)

        dsel = Mf @ self.data
        loss = (Mf @ (self.data * self.hist_loss)) / np.where(dsel > 0, dsel, 1.0)
        loss_n = _minmax(loss, self.loss_lo, self.loss_hi)

        worst = np.where(M, self.delay_capped, -np.inf).max(axis=1)
        delay_n = _minmax(worst, self.delay_lo, self.delay_hi)

        energy_n = _minmax(Mf @ self.energy_capped, self.energy_lo, self.energy_hi)

        unrel = 1.0 - (Mf @ self.reliability) / safe

        projected = (self.counts + Mf) / self.cfg.total_rounds
        fair = np.maximum(0.0, self.min_fraction - projected).sum(axis=1) / self.n
        fair_n = _minmax(fair, self.fair_lo, self.fair_hi)

        out = np.column_stack([loss_n, delay_n, energy_n, unrel, fair_n])
        out[~nonempty] = 1.0
        return out

    def violations(self, masks: np.ndarray) -> np.ndarray:
        M = np.atleast_2d(np.asarray(masks, dtype=bool))
        Mf = M.astype(float)
        v = Mf @ self.violation_count
        v += (Mf @ self.bandwidth) > self.cfg.total_bandwidth * (1 + 1e-12)
        v += (self.forced & ~M).sum(axis=1)
        v += ~M.any(axis=1)
        return v

    def evaluate_many(self, masks: np.ndarray) -> np.ndarray:
        terms = self.terms(masks)
        return terms @ self.weights.as_array() + self.weights.penalty_coeff * self.violations(masks)

    def evaluate(self, mask) -> float:
        return float(self.evaluate_many(_as_bits(mask))[0])

    def is_feasible(self, mask) -> bool:
        return bool(self.violations(_as_bits(mask))[0] == 0)

    # -- reporting ---------------------------------------------------------

    def report(self, mask) -> FeasibilityReport:
        sel = _as_bits(mask)[0].astype(bool)
        idx = np.flatnonzero(sel)

        def per_client(name):
            if idx.size == 0:
                return ConstraintStatus(True, math.inf)
            margin = float(np.min(self.margins[name][idx]))
            return ConstraintStatus(bool(margin >= 0), margin)

        band_margin = float(self.cfg.total_bandwidth - self.bandwidth[idx].sum())
        excluded = self.eligible & ~sel
        if excluded.any():
            fair_margin = float(self.fairness_slack[excluded].min()) / self.cfg.total_rounds
        else:
            fair_margin = math.inf
        return FeasibilityReport(
            delay=per_client("delay"),
            energy=per_client("energy"),
            reliability=per_client("reliability"),
            fairness=ConstraintStatus(not bool((self.forced & ~sel).any()), fair_margin),
            accuracy=per_client("accuracy"),
            cpu_cap=per_client("cpu_cap"),
            power_cap=per_client("power_cap"),
            bandwidth=ConstraintStatus(
                bool(self.bandwidth[idx].sum() <= self.cfg.total_bandwidth * (1 + 1e-12)), band_margin
            ),
            nonempty=ConstraintStatus(idx.size > 0, float(idx.size)),
            available=ConstraintStatus(bool(self.available[idx].all()), float(self.available[idx].sum() - idx.size)),
        )


def feasibility(mask, fleet, cfg, hist, weights=None) -> FeasibilityReport:
    return FitnessContext(fleet, cfg, hist, weights).report(mask)


def fitness_value(mask, fleet, cfg, hist, weights=None) -> float:
    return FitnessContext(fleet, cfg, hist, weights).evaluate(mask)


def all_masks(n: int) -> np.ndarray:
    """Every non-empty mask of length n, shape (2**n - 1, n)."""
    codes = np.arange(1, 2**n, dtype=np.int64)
    return ((codes[:, None] >> np.arange(n)) & 1).astype(bool)


def _minmax(x, lo, hi):
    if hi <= lo:
        return np.zeros_like(x, dtype=float)
    return np.clip((x - lo) / (hi - lo), 0.0, 1.0)


def _as_bits(mask) -> np.ndarray:
    if isinstance(mask, SelectionMask):
        return mask.array[None, :]
    return np.atleast_2d(np.asarray(mask, dtype=bool))
