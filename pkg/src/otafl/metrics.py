"""Energy-efficiency indicators, convergence detection and run summaries.

Accuracy is expressed in percent here, so efficiencies come out in %/J.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .domain import RoundRecord, SelectionHistory


def instantaneous_ee(accuracy_pct: float, energy_j: float) -> float:
    """Accuracy per joule for one round; NaN marks a round with no energy spent."""
    if not energy_j > 0:
        return math.nan
    return accuracy_pct / energy_j


def global_ee(final_accuracy_pct: float, per_round_energy: Sequence[float]) -> float:
    total = float(np.sum(per_round_energy))
    if not total > 0:
        return math.nan
    return final_accuracy_pct / total


@dataclass(frozen=True)
class Convergence:
    time: float
    round: int  # 1-based round at which the rule fired; total rounds if it never did
    converged: bool


def convergence_time(records: Sequence[RoundRecord], epsilon: float = 1e-3, window: int = 5) -> Convergence:
    """Simulated time until the loss settles.

    The run has converged at round r when every consecutive loss change among
    the last ``window`` rounds (r-window+1 .. r) is below ``epsilon``.
    """
    if window < 1:
        raise ValueError("window must be at least 1")
    losses = [r.global_loss for r in records]
    delays = np.cumsum([r.round_delay for r in records])
    for r in range(window, len(losses) + 1):
        tail = np.asarray(losses[r - window : r])
        if tail.size < 2 or np.max(np.abs(np.diff(tail))) < epsilon:
            return Convergence(float(delays[r - 1]), r, True)
    total = float(delays[-1]) if len(delays) else 0.0
    return Convergence(total, len(losses), False)


@dataclass(frozen=True)
class ExperimentSummary:
    final_accuracy: float  # percent
    final_loss: float
    convergence_time: float
    convergence_round: int
    converged: bool
    total_energy: float
    gee: float
    iee: list = field(default_factory=list)
    avg_reliability: float = math.nan
    worst_reliability: float = math.nan
    avg_fairness: float = math.nan
    worst_fairness: float = math.nan
    mean_selection_fitness: float = math.nan
    mean_selected: float = 0.0
    infeasible_rounds: int = 0
    aborted_rounds: int = 0
    rounds: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    # Columns used by comparison tables (the iee series is omitted).
    @staticmethod
    def scalar_fields() -> list[str]:
        return [f for f in ExperimentSummary.__dataclass_fields__ if f != "iee"]


def summarize(
    records: Sequence[RoundRecord],
    hist: SelectionHistory,
    epsilon: float = 1e-3,
    window: int = 5,
) -> ExperimentSummary:
    if not records:
        raise ValueError("at least one round record is required")
    last = records[-1]
    energies = [r.round_energy for r in records]
    acc_pct = 100.0 * last.global_accuracy
    conv = convergence_time(records, epsilon, window)

    per_round_avg = [float(np.mean(r.selected_reliability)) for r in records if len(r.selected_reliability)]
    per_round_min = [float(np.min(r.selected_reliability)) for r in records if len(r.selected_reliability)]
    fractions = hist.fractions()
    fitness = [r.selection_fitness for r in records if math.isfinite(r.selection_fitness)]
    return ExperimentSummary(
        final_accuracy=acc_pct,
        final_loss=last.global_loss,
        convergence_time=conv.time,
        convergence_round=conv.round,
        converged=conv.converged,
        total_energy=float(np.sum(energies)),
        gee=global_ee(acc_pct, energies),
        iee=[instantaneous_ee(100.0 * r.global_accuracy, r.round_energy) for r in records],
        avg_reliability=float(np.mean(per_round_avg)) if per_round_avg else math.nan,
        worst_reliability=float(np.min(per_round_min)) if per_round_min else math.nan,
        avg_fairness=float(fractions.mean()) if hist.rounds_elapsed else math.nan,
        worst_fairness=float(fractions.min()) if hist.rounds_elapsed else math.nan,
        mean_selection_fitness=float(np.mean(fitness)) if fitness else math.nan,
        mean_selected=float(np.mean([r.mask.count for r in records])),
        infeasible_rounds=sum(not r.selection_feasible for r in records),
        aborted_rounds=sum(r.aborted for r in records),
        rounds=len(records),
    )
