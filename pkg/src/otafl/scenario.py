"""Scenario description, random fleet generation and JSON (de)serialization.

A scenario file is one JSON object::

    {
      "fleet": {"profiles": [...]}            # or {"generator": {...}}
      "system": {...},                        # SystemConfig fields
      "trainer": {...},                       # TrainerConfig fields
      "data": {...},                          # DataConfig fields
      "selector": {"kind": "gwo", ...},       # gwo | ga | dp | mab | random
      "weights": {...},                       # FitnessWeights fields
      "metrics": {"convergence_epsilon": 1e-3, "convergence_window": 5},
      "output": {"out_dir": "results"}
    }

Missing optional sections fall back to defaults; ``fleet`` and ``system`` are
required.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import numpy as np

from .domain import ClientProfile, SystemConfig

SELECTOR_KINDS = ("gwo", "ga", "dp", "mab", "random")


class ConfigError(ValueError):
    """Scenario could not be parsed; ``field`` names the offending path."""

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        self.field = field
        self.line = line
        where = []
        if field:
            where.append(f"field '{field}'")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


@dataclass(frozen=True)
class GeneratorSpec:
    """Uniform sampling ranges for every client field.

    ``bandwidth_inflation`` sets the system bandwidth to Σb / inflation, so a
    value above 1 means the whole fleet cannot be selected at once.
    """

    n: int = 10
    seed: int = 0
    data_size: tuple[int, int] = (80, 200)
    cycles_per_sample: tuple[float, float] = (1e6, 5e6)
    cpu_freq: tuple[float, float] = (0.5e9, 2.0e9)
    cpu_headroom: tuple[float, float] = (1.0, 1.5)
    iteration_factor: tuple[float, float] = (1.0, 3.0)
    target_accuracy: tuple[float, float] = (0.1, 0.5)
    energy_coeff: tuple[float, float] = (0.5e-28, 2e-28)
    tx_power: tuple[float, float] = (0.05, 0.2)
    power_headroom: tuple[float, float] = (1.0, 1.5)
    bandwidth: tuple[float, float] = (0.5e6, 2e6)
    channel_gain: tuple[float, float] = (1e-8, 1e-7)
    failure_count: tuple[int, int] = (0, 1)
    delay_budget: tuple[float, float] = (2.0, 10.0)
    energy_budget: tuple[float, float] = (0.3, 2.5)
    min_selection_fraction: tuple[float, float] = (0.0, 0.2)
    bandwidth_inflation: float = 1.5
    initial_loss: float | None = None

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("n must be at least 1", "fleet.generator.n")
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, (tuple, list)):
                if len(value) != 2:
                    raise ConfigError("range must have two entries", f"fleet.generator.{f.name}")
                lo, hi = value
                if lo > hi:
                    raise ConfigError(f"inverted range [{lo}, {hi}]", f"fleet.generator.{f.name}")
                object.__setattr__(self, f.name, (lo, hi))
        if not self.bandwidth_inflation > 0:
            raise ConfigError("bandwidth_inflation must be positive", "fleet.generator.bandwidth_inflation")

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


@dataclass(frozen=True)
class SystemDefaults:
    noise_psd: float = 1e-17
    model_size_bits: float = 2e6
    min_reliability: float = 0.2
    min_accuracy: float = 0.05
    total_rounds: int = 30


def generate_fleet(spec: GeneratorSpec, num_classes: int = 3) -> tuple[list[ClientProfile], float]:
    """Sample ``spec.n`` client profiles; returns (fleet, total_bandwidth)."""
    rng = np.random.default_rng(spec.seed)
    u = lambda r: float(rng.uniform(r[0], r[1]))  # noqa: E731
    ui = lambda r: int(rng.integers(r[0], r[1] + 1))  # noqa: E731
    init_loss = math.log(num_classes) if spec.initial_loss is None else spec.initial_loss
    fleet = []
    for i in range(spec.n):
        f = u(spec.cpu_freq)
        p = u(spec.tx_power)
        fleet.append(
            ClientProfile(
                id=i,
                data_size=ui(spec.data_size),
                cycles_per_sample=u(spec.cycles_per_sample),
                cpu_freq=f,
                cpu_freq_max=f * u(spec.cpu_headroom),
                iteration_factor=u(spec.iteration_factor),
                target_accuracy=u(spec.target_accuracy),
                energy_coeff=u(spec.energy_coeff),
                tx_power=p,
                tx_power_max=p * u(spec.power_headroom),
                bandwidth=u(spec.bandwidth),
                channel_gain=u(spec.channel_gain),
                failure_count=ui(spec.failure_count),
                delay_budget=u(spec.delay_budget),
                energy_budget=u(spec.energy_budget),
                min_selection_fraction=u(spec.min_selection_fraction),
                historical_loss=init_loss,
            )
        )
    total_b = sum(c.bandwidth for c in fleet) / spec.bandwidth_inflation
    return fleet, total_b


@dataclass(frozen=True)
class ScenarioConfig:
    fleet: tuple[ClientProfile, ...]
    system: SystemConfig
    trainer: Any = None
    data: Any = None
    selector: dict = field(default_factory=lambda: {"kind": "gwo"})
    weights: Any = None
    metrics: dict = field(default_factory=lambda: {"convergence_epsilon": 1e-3, "convergence_window": 5})
    output: dict = field(default_factory=lambda: {"out_dir": "results"})
    generator: GeneratorSpec | None = field(default=None, compare=False)

    def __post_init__(self):
        from .fitness import FitnessWeights
        from .fl_sim import DataConfig, TrainerConfig

        object.__setattr__(self, "fleet", tuple(self.fleet))
        if self.trainer is None:
            object.__setattr__(self, "trainer", TrainerConfig())
        if self.data is None:
            object.__setattr__(self, "data", DataConfig())
        if self.weights is None:
            object.__setattr__(self, "weights", FitnessWeights())
        kind = self.selector.get("kind") if isinstance(self.selector, dict) else None
        if kind not in SELECTOR_KINDS:
            raise ConfigError(f"selector kind must be one of {', '.join(SELECTOR_KINDS)}", "selector.kind")

    @property
    def selector_kind(self) -> str:
        return self.selector["kind"]

    def with_selector(self, kind: str, **params) -> "ScenarioConfig":
        if kind == self.selector_kind:
            return replace(self, selector={**self.selector, **params})
        return replace(self, selector={"kind": kind, **params})

    def with_seed(self, seed: int) -> "ScenarioConfig":
        return replace(self, system=replace(self.system, master_seed=int(seed)))

    def with_rounds(self, rounds: int) -> "ScenarioConfig":
        return replace(self, system=replace(self.system, total_rounds=int(rounds)))

    def to_dict(self) -> dict:
        return {
            "fleet": {"profiles": [p.to_dict() for p in self.fleet]},
            "system": self.system.to_dict(),
            "trainer": self.trainer.to_dict(),
            "data": self.data.to_dict(),
            "selector": dict(self.selector),
            "weights": self.weights.to_dict(),
            "metrics": dict(self.metrics),
            "output": dict(self.output),
        }


def generate_scenario(spec: GeneratorSpec, seed: int | None = None, **overrides) -> ScenarioConfig:
    """Build a scenario with an explicit fleet sampled from ``spec``.

    ``seed`` (if given) replaces ``spec.seed`` and is also used as the
    experiment's master seed. ``overrides`` may contain ``system`` (a dict of
    SystemConfig fields), ``trainer``, ``data``, ``selector``, ``weights``,
    ``metrics`` or ``output``.
    """
    from .fl_sim import DataConfig, TrainerConfig

    if seed is not None:
        spec = replace(spec, seed=int(seed))
    trainer = overrides.pop("trainer", None) or TrainerConfig()
    fleet, total_b = generate_fleet(spec, trainer.num_classes)
    sys_fields = {**asdict(SystemDefaults()), "total_bandwidth": total_b, "master_seed": spec.seed}
    sys_fields.update(overrides.pop("system", {}) or {})
    return ScenarioConfig(
        fleet=tuple(fleet),
        system=SystemConfig(**sys_fields),
        trainer=trainer,
        data=overrides.pop("data", None) or DataConfig(),
        generator=spec,
        **overrides,
    )


# The 10-client comparison scenario: bandwidth for roughly 80% of the fleet,
# three clients with mostly wrong labels, and a wolf pack sized to match the
# GA's default evaluation budget (40 x 50).
REFERENCE_GENERATOR = GeneratorSpec(n=10, bandwidth_inflation=1.2)
REFERENCE_GWO = {"kind": "gwo", "population_size": 40}


def reference_scenario(seed: int = 0, selector: str = "gwo", **params) -> ScenarioConfig:
    from .fl_sim import DataConfig

    sc = generate_scenario(
        REFERENCE_GENERATOR,
        seed,
        data=DataConfig(noisy_clients=3, label_noise=0.8),
        selector=dict(REFERENCE_GWO),
    )
    return sc.with_selector(selector, **params)


# -- JSON --------------------------------------------------------------------


def scenario_to_json(sc: ScenarioConfig) -> str:
    return json.dumps(sc.to_dict(), indent=2, sort_keys=True) + "\n"


def save_scenario(sc: ScenarioConfig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(scenario_to_json(sc))
    return path


def scenario_from_dict(d: dict) -> ScenarioConfig:
    from .fitness import FitnessWeights
    from .fl_sim import DataConfig, TrainerConfig

    if not isinstance(d, dict):
        raise ConfigError("scenario must be a JSON object")
    for required in ("fleet", "system"):
        if required not in d:
            raise ConfigError("missing required field", required)
    unknown = set(d) - {"fleet", "system", "trainer", "data", "selector", "weights", "metrics", "output"}
    if unknown:
        raise ConfigError("unknown top-level field", sorted(unknown)[0])

    trainer = _build(TrainerConfig.from_dict, d.get("trainer", {}), "trainer")
    fleet_d = d["fleet"]
    if not isinstance(fleet_d, dict) or ("profiles" in fleet_d) == ("generator" in fleet_d):
        raise ConfigError("fleet must contain exactly one of 'profiles' or 'generator'", "fleet")

    generator = None
    system_d = dict(d["system"])
    if "profiles" in fleet_d:
        fleet = []
        for i, pd in enumerate(fleet_d["profiles"]):
            fleet.append(_build(ClientProfile.from_dict, pd, f"fleet.profiles[{i}]"))
    else:
        generator = _build(lambda g: GeneratorSpec(**g), fleet_d["generator"], "fleet.generator")
        fleet, total_b = generate_fleet(generator, trainer.num_classes)
        system_d.setdefault("total_bandwidth", total_b)
        system_d.setdefault("master_seed", generator.seed)

    for name in ("noise_psd", "total_bandwidth", "model_size_bits"):
        if name not in system_d:
            raise ConfigError("missing required field", f"system.{name}")
    system = _build(SystemConfig.from_dict, system_d, "system")

    selector = dict(d.get("selector", {"kind": "gwo"}))
    if "kind" not in selector:
        raise ConfigError("missing required field", "selector.kind")
    if selector["kind"] not in SELECTOR_KINDS:
        raise ConfigError(f"selector kind must be one of {', '.join(SELECTOR_KINDS)}", "selector.kind")
    _check_selector_params(selector)

    metrics = {"convergence_epsilon": 1e-3, "convergence_window": 5}
    metrics.update(d.get("metrics", {}))
    return ScenarioConfig(
        fleet=tuple(fleet),
        system=system,
        trainer=trainer,
        data=_build(DataConfig.from_dict, d.get("data", {}), "data"),
        selector=selector,
        weights=_build(FitnessWeights.from_dict, d.get("weights", {}), "weights"),
        metrics=metrics,
        output=dict(d.get("output", {"out_dir": "results"})),
        generator=generator,
    )


def load_scenario(path) -> ScenarioConfig:
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", line=exc.lineno) from exc
    return scenario_from_dict(raw)


def _build(factory, payload, where):
    if not isinstance(payload, dict):
        raise ConfigError("expected an object", where)
    try:
        return factory(payload)
    except ConfigError:
        raise
    except TypeError as exc:
        # dataclass constructors report missing arguments as TypeError
        msg = str(exc)
        name = msg.split("'")[1] if "'" in msg else None
        raise ConfigError(f"bad or missing field: {msg}", f"{where}.{name}" if name else where) from exc
    except ValueError as exc:
        raise ConfigError(str(exc), where) from exc


def _check_selector_params(selector: dict) -> None:
    from .baselines import DpConfig, GaConfig
    from .gwo import GwoConfig

    kind = selector["kind"]
    params = {k: v for k, v in selector.items() if k != "kind"}
    allowed = {
        "gwo": {f.name for f in fields(GwoConfig)},
        "ga": {f.name for f in fields(GaConfig)},
        "dp": {f.name for f in fields(DpConfig)},
        "mab": {"k"},
        "random": {"k"},
    }[kind]
    for name in params:
        if name not in allowed:
            raise ConfigError(f"unknown parameter for selector '{kind}'", f"selector.{name}")
