"""Grey wolf optimizer over continuous positions in [0, 1]^n.

A wolf's position decodes to a selection mask by thresholding each
coordinate. Alpha, beta and delta are the three best positions seen so far;
every wolf moves to a weighted average of three leader-guided candidates.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .domain import SelectionMask
from .fitness import FitnessContext


@dataclass(frozen=True)
class GwoConfig:
    population_size: int = 20
    max_iter: int = 50
    decode_threshold: float = 0.5
    wolf_weights: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "wolf_weights", tuple(float(w) for w in self.wolf_weights))
        if self.population_size < 4:
            raise ValueError("population_size must be at least 4 (alpha, beta, delta and one omega)")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if len(self.wolf_weights) != 3 or min(self.wolf_weights) < 0:
            raise ValueError("wolf_weights must be three non-negative numbers")
        if abs(sum(self.wolf_weights) - 1.0) > 1e-9:
            raise ValueError("wolf_weights must sum to 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["wolf_weights"] = list(self.wolf_weights)
        return d


@dataclass
class WolfPopulation:
    positions: np.ndarray
    fitnesses: np.ndarray
    leaders: np.ndarray  # (3, n): alpha, beta, delta
    leader_fitness: np.ndarray  # (3,)
    iteration: int = 0


@dataclass
class GwoResult:
    mask: SelectionMask
    fitness: float
    feasible: bool
    trace: list[float]
    population: WolfPopulation
    a_bounds: list[float] = field(default_factory=list)
    max_abs_A: list[float] = field(default_factory=list)


def coefficient_a(t: int, max_iter: int) -> float:
    """Linearly decays from 2 at t=0 to 0 at t=max_iter."""
    if not 0 <= t <= max_iter:
        raise ValueError("t must lie in [0, max_iter]")
    return 2.0 - t * 2.0 / max_iter


def coefficients_AC(a: float, rng: np.random.Generator, shape) -> tuple[np.ndarray, np.ndarray]:
    r1 = rng.random(shape)
    r2 = rng.random(shape)
    return 2.0 * a * r1 - a, 2.0 * r2


def leader_guided_update(x, leaders, A, C, weights=(1 / 3, 1 / 3, 1 / 3)) -> np.ndarray:
    """Move ``x`` toward the weighted mean of the leader-guided candidates.

    ``leaders``, ``A`` and ``C`` have shape (3, n), one row per leader.
    """
    x = np.asarray(x, dtype=float)
    leaders = np.asarray(leaders, dtype=float)
    d = np.abs(C * leaders - x)
    candidates = leaders - A * d
    out = np.asarray(weights, dtype=float) @ candidates
    return np.clip(out, 0.0, 1.0)


def decode(position, threshold: float = 0.5) -> np.ndarray:
    return np.asarray(position) > threshold


def _update_leaders(pop: WolfPopulation, key=None) -> None:
    """Keep the three best positions seen so far.

    With ``key`` set, leaders must map to distinct keys (distinct decoded
    client sets); duplicates are only used when fewer than three exist. On
    equal fitness the fresh position wins, which keeps the pack moving across
    penalty plateaus.
    """
    pool_x = np.vstack([pop.positions, pop.leaders])
    pool_f = np.concatenate([pop.fitnesses, pop.leader_fitness])
    order = np.argsort(pool_f, kind="stable")
    if key is None:
        chosen = list(order[:3])
    else:
        chosen, seen = [], set()
        for j in order:
            k = key(pool_x[j])
            if k not in seen:
                seen.add(k)
                chosen.append(j)
                if len(chosen) == 3:
                    break
        chosen += [j for j in order if j not in chosen][: 3 - len(chosen)]
    pop.leaders = pool_x[chosen].copy()
    pop.leader_fitness = pool_f[chosen].copy()


def minimize(
    objective: Callable[[np.ndarray], np.ndarray],
    n: int,
    gwo_cfg: GwoConfig,
    seed_key: tuple[int, ...] = (),
    leader_key: Callable[[np.ndarray], object] | None = None,
) -> tuple[WolfPopulation, list[float], list[float], list[float]]:
    """Run the optimizer on a batch objective over [0, 1]^n.

    ``objective`` maps an (S, n) position matrix to S fitness values. Each wolf
    draws from its own stream seeded by (seed, *seed_key, wolf index), so the
    result does not depend on evaluation order.
    """
    S = gwo_cfg.population_size
    root = np.random.SeedSequence([gwo_cfg.seed, *seed_key])
    init_rng, *wolf_ss = root.spawn(S + 1)
    rng_init = np.random.default_rng(init_rng)
    wolf_rngs = [np.random.default_rng(ss) for ss in wolf_ss]

    positions = rng_init.random((S, n))
    fit = np.asarray(objective(positions), dtype=float)
    # Leaders start as placeholders with infinite fitness and are filled by the
    # first update.
    pop = WolfPopulation(positions, fit, np.zeros((3, n)), np.full(3, np.inf))
    _update_leaders(pop, leader_key)
    trace = [float(pop.leader_fitness[0])]
    a_bounds, max_abs_A = [], []
    weights = np.asarray(gwo_cfg.wolf_weights)

    for t in range(gwo_cfg.max_iter):
        a = coefficient_a(t, gwo_cfg.max_iter)
        new = np.empty_like(pop.positions)
        biggest = 0.0
        for i in range(S):
            A, C = coefficients_AC(a, wolf_rngs[i], (3, n))
            biggest = max(biggest, float(np.abs(A).max()))
            new[i] = leader_guided_update(pop.positions[i], pop.leaders, A, C, weights)
        pop.positions = new
        pop.fitnesses = np.asarray(objective(new), dtype=float)
        _update_leaders(pop, leader_key)
        pop.iteration = t + 1
        trace.append(float(pop.leader_fitness[0]))
        a_bounds.append(a)
        max_abs_A.append(biggest)
    return pop, trace, a_bounds, max_abs_A


def optimize(ctx: FitnessContext, gwo_cfg: GwoConfig | None = None, seed_key: tuple[int, ...] = ()) -> GwoResult:
    """Pick the client subset for one round by minimizing the round's fitness."""
    gwo_cfg = gwo_cfg or GwoConfig()
    thr = gwo_cfg.decode_threshold

    def objective(positions):
        return ctx.evaluate_many(decode(positions, thr))

    def leader_key(x):
        return decode(x, thr).tobytes()

    pop, trace, a_bounds, max_abs_A = minimize(objective, ctx.n, gwo_cfg, seed_key, leader_key)
    bits = decode(pop.leaders[0], thr)
    return GwoResult(
        mask=SelectionMask.from_array(bits),
        fitness=float(pop.leader_fitness[0]),
        feasible=ctx.is_feasible(bits),
        trace=trace,
        population=pop,
        a_bounds=a_bounds,
        max_abs_A=max_abs_A,
    )
