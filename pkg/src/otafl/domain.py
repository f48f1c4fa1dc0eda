"""Shared data types for the client-selection simulator.

Every type round-trips through plain dicts (``to_dict`` / ``from_dict``) so a
scenario can be written to and read from JSON without loss.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace
from enum import Enum
from typing import Iterable, Sequence

import numpy as np


class SelectionTiming(str, Enum):
    SELECT_THEN_TRAIN = "SelectThenTrain"
    TRAIN_THEN_SELECT = "TrainThenSelect"


@dataclass(frozen=True)
class ClientProfile:
    """Static hardware, data and radio description of one client.

    Construction never raises on out-of-range values; call ``violations`` (or
    ``validate_fleet``) to get a report. This keeps malformed scenario files
    inspectable instead of failing on the first bad field.
    """

    id: int
    data_size: int
    cycles_per_sample: float
    cpu_freq: float
    cpu_freq_max: float
    iteration_factor: float
    target_accuracy: float
    energy_coeff: float
    tx_power: float
    tx_power_max: float
    bandwidth: float
    channel_gain: float
    failure_count: int
    delay_budget: float
    energy_budget: float
    min_selection_fraction: float = 0.0
    historical_loss: float = 0.0

    def violations(self, min_accuracy: float = 0.0) -> list[str]:
        out = []
        tag = f"client {self.id}"
        if self.id < 0:
            out.append(f"{tag}: id must be non-negative")
        if int(self.data_size) != self.data_size or self.data_size < 1:
            out.append(f"{tag}: data_size must be an integer >= 1")
        if not 0 < self.cpu_freq <= self.cpu_freq_max:
            out.append(f"{tag}: cpu_freq must satisfy 0 < f <= f_max")
        if not 0 <= self.tx_power <= self.tx_power_max:
            out.append(f"{tag}: tx_power must satisfy 0 <= p <= p_max")
        if not min_accuracy <= self.target_accuracy <= 1:
            out.append(f"{tag}: target_accuracy {self.target_accuracy} outside [{min_accuracy}, 1]")
        if not 0 <= self.min_selection_fraction <= 1:
            out.append(f"{tag}: min_selection_fraction outside [0, 1]")
        if int(self.failure_count) != self.failure_count or self.failure_count < 0:
            out.append(f"{tag}: failure_count must be a non-negative integer")
        for name in ("cycles_per_sample", "iteration_factor", "energy_coeff", "bandwidth", "channel_gain"):
            if not getattr(self, name) > 0:
                out.append(f"{tag}: {name} must be positive")
        for name in ("delay_budget", "energy_budget", "historical_loss"):
            value = getattr(self, name)
            if not (value >= 0 and math.isfinite(value)):
                out.append(f"{tag}: {name} must be finite and non-negative")
        return out

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ClientProfile":
        return cls(**_pick(cls, d))


@dataclass(frozen=True)
class SystemConfig:
    noise_psd: float
    total_bandwidth: float
    model_size_bits: float
    min_reliability: float = 0.0
    min_accuracy: float = 0.01
    total_rounds: int = 30
    ota_snr_db: float | None = None
    selection_timing: SelectionTiming = SelectionTiming.SELECT_THEN_TRAIN
    master_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "selection_timing", SelectionTiming(self.selection_timing))
        if not self.noise_psd > 0:
            raise ValueError("noise_psd must be positive")
        if not self.total_bandwidth > 0:
            raise ValueError("total_bandwidth must be positive")
        if not self.model_size_bits > 0:
            raise ValueError("model_size_bits must be positive")
        if not 0 <= self.min_reliability <= 1:
            raise ValueError("min_reliability must lie in [0, 1]")
        if not 0 < self.min_accuracy < 1:
            raise ValueError("min_accuracy must lie in (0, 1)")
        if int(self.total_rounds) != self.total_rounds or self.total_rounds < 1:
            raise ValueError("total_rounds must be a positive integer")
        if not 0 <= int(self.master_seed) < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["selection_timing"] = self.selection_timing.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SystemConfig":
        return cls(**_pick(cls, d))


@dataclass(frozen=True)
class SelectionMask:
    bits: tuple[int, ...]
    round: int = 0

    def __post_init__(self):
        bits = tuple(int(b) for b in self.bits)
        if any(b not in (0, 1) for b in bits):
            raise ValueError("mask bits must be 0 or 1")
        object.__setattr__(self, "bits", bits)

    @classmethod
    def from_array(cls, arr: Iterable, round: int = 0) -> "SelectionMask":
        return cls(tuple(int(bool(b)) for b in arr), round)

    @classmethod
    def from_ids(cls, ids: Iterable[int], n: int, round: int = 0) -> "SelectionMask":
        bits = [0] * n
        for i in ids:
            bits[i] = 1
        return cls(tuple(bits), round)

    def __len__(self) -> int:
        return len(self.bits)

    @property
    def array(self) -> np.ndarray:
        return np.array(self.bits, dtype=bool)

    @property
    def selected(self) -> list[int]:
        return [i for i, b in enumerate(self.bits) if b]

    @property
    def count(self) -> int:
        return sum(self.bits)

    @property
    def is_empty(self) -> bool:
        return self.count == 0

    def to_dict(self) -> dict:
        return {"bits": list(self.bits), "round": self.round}

    @classmethod
    def from_dict(cls, d: dict) -> "SelectionMask":
        return cls(tuple(d["bits"]), d.get("round", 0))


@dataclass(frozen=True)
class SelectionHistory:
    counts: tuple[int, ...]
    rounds_elapsed: int = 0

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        if self.rounds_elapsed < 0:
            raise ValueError("rounds_elapsed must be non-negative")
        if any(c < 0 or c > self.rounds_elapsed for c in counts):
            raise ValueError("selection counts must lie in [0, rounds_elapsed]")
        object.__setattr__(self, "counts", counts)

    @classmethod
    def empty(cls, n: int) -> "SelectionHistory":
        return cls((0,) * n, 0)

    def record(self, mask: SelectionMask) -> "SelectionHistory":
        counts = tuple(c + b for c, b in zip(self.counts, mask.bits))
        return SelectionHistory(counts, self.rounds_elapsed + 1)

    def fractions(self) -> np.ndarray:
        if self.rounds_elapsed == 0:
            return np.zeros(len(self.counts))
        return np.asarray(self.counts, dtype=float) / self.rounds_elapsed

    def to_dict(self) -> dict:
        return {"counts": list(self.counts), "rounds_elapsed": self.rounds_elapsed}

    @classmethod
    def from_dict(cls, d: dict) -> "SelectionHistory":
        return cls(tuple(d["counts"]), d["rounds_elapsed"])


@dataclass(frozen=True)
class RoundRecord:
    """Measured outcome of one round.

    ``failures`` holds failed clients that were part of the selected mask;
    ``failed_trainers`` holds every client that failed while training (in
    train-then-select mode this includes unselected clients).
    """

    round: int
    mask: SelectionMask
    global_loss: float
    global_accuracy: float
    round_delay: float
    round_energy: float
    failures: frozenset = frozenset()
    per_client_loss: dict = field(default_factory=dict)
    failed_trainers: frozenset = frozenset()
    selection_fitness: float = float("nan")
    selection_feasible: bool = True
    aborted: bool = False
    bandwidth_used: float = 0.0
    selected_reliability: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "failures", frozenset(self.failures))
        object.__setattr__(self, "failed_trainers", frozenset(self.failed_trainers))
        if self.round_energy < 0 or self.round_delay < 0:
            raise ValueError("round energy and delay must be non-negative")
        if not self.failures <= set(self.mask.selected):
            raise ValueError("failures must be a subset of the selected clients")
        if not 0 <= self.global_accuracy <= 1:
            raise ValueError("global_accuracy must lie in [0, 1]")

    @property
    def selected(self) -> list[int]:
        return self.mask.selected

    def to_dict(self) -> dict:
        return {
            "round": self.round,
            "mask": self.mask.to_dict(),
            "global_loss": self.global_loss,
            "global_accuracy": self.global_accuracy,
            "round_delay": self.round_delay,
            "round_energy": self.round_energy,
            "failures": sorted(self.failures),
            "per_client_loss": {str(k): v for k, v in sorted(self.per_client_loss.items())},
            "failed_trainers": sorted(self.failed_trainers),
            "selection_fitness": self.selection_fitness,
            "selection_feasible": self.selection_feasible,
            "aborted": self.aborted,
            "bandwidth_used": self.bandwidth_used,
            "selected_reliability": list(self.selected_reliability),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RoundRecord":
        d = dict(d)
        d["mask"] = SelectionMask.from_dict(d["mask"])
        d["failures"] = frozenset(d.get("failures", ()))
        d["failed_trainers"] = frozenset(d.get("failed_trainers", ()))
        d["per_client_loss"] = {int(k): v for k, v in d.get("per_client_loss", {}).items()}
        d["selected_reliability"] = tuple(d.get("selected_reliability", ()))
        return cls(**_pick(cls, d))


def validate_fleet(profiles: Sequence[ClientProfile], cfg: SystemConfig) -> list[str]:
    """Return every violated invariant; an empty list means the fleet is well formed.

    A fleet whose total bandwidth exceeds the system bandwidth is legal (only a
    selected subset has to fit) but gets a ``warning:`` entry.
    """
    report = []
    for expected, p in enumerate(profiles):
        if p.id != expected:
            report.append(f"client {p.id}: id must equal its position {expected}")
        report.extend(p.violations(cfg.min_accuracy))
    total = sum(p.bandwidth for p in profiles)
    if total > cfg.total_bandwidth:
        report.append(
            f"warning: fleet bandwidth {total:.6g} Hz exceeds system bandwidth "
            f"{cfg.total_bandwidth:.6g} Hz; not every client can be selected at once"
        )
    return report


def with_historical_loss(fleet: Sequence[ClientProfile], losses: Sequence[float]) -> list[ClientProfile]:
    return [replace(p, historical_loss=float(h)) for p, h in zip(fleet, losses)]


def ema_update(previous: float, observed: float, decay: float = 0.5) -> float:
    """Exponential moving average used for ``historical_loss``."""
    return decay * previous + (1.0 - decay) * observed


def _pick(cls, d: dict) -> dict:
    names = {f.name for f in fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ValueError(f"unknown field(s) for {cls.__name__}: {', '.join(sorted(unknown))}")
    return {k: v for k, v in d.items() if k in names}
