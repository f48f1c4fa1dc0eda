"""Comparison selectors: knapsack DP, genetic algorithm, UCB bandit, random.

All of them return masks scored by the same :class:`FitnessContext` used by
the grey wolf optimizer.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .domain import SelectionMask
from .fitness import FitnessContext


# -- dynamic programming -------------------------------------------------------


@dataclass(frozen=True)
class DpConfig:
    """``capacity`` is the per-round energy budget in joules; None means half of
    the fleet's summed energy budgets. ``quantum`` defaults to capacity / 1000."""

    capacity: float | None = None
    quantum: float | None = None

    def resolve(self, ctx: FitnessContext) -> tuple[float, float]:
        cap = self.capacity
        if cap is None:
            cap = 0.5 * sum(p.energy_budget for p in ctx.fleet)
        q = self.quantum if self.quantum is not None else cap / 1000.0
        if not q > 0:
            raise ValueError("energy quantum must be positive")
        return float(cap), float(q)

    def to_dict(self) -> dict:
        return asdict(self)


def knapsack_01(values, weights, capacity: int) -> tuple[np.ndarray, float]:
    """Exact 0/1 knapsack with integer weights; returns (chosen mask, best value).

    On ties the backtrack takes the item, so zero-value items that fit are kept.
    """
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=np.int64)
    n = len(values)
    capacity = int(capacity)
    if capacity < 0:
        return np.zeros(n, bool), 0.0
    best = np.zeros((n + 1, capacity + 1))
    for i in range(n):
        w, v = weights[i], values[i]
        best[i + 1] = best[i]
        if w <= capacity:
            take = best[i, : capacity + 1 - w] + v
            best[i + 1, w:] = np.maximum(best[i, w:], take)
    chosen = np.zeros(n, bool)
    c = capacity
    for i in range(n, 0, -1):
        w = weights[i - 1]
        if w <= c and best[i - 1, c - w] + values[i - 1] >= best[i, c]:
            chosen[i - 1] = True
            c -= w
    return chosen, float(best[n, capacity])


@dataclass
class Selection:
    mask: SelectionMask
    flag: str | None = None  # reason the selector could not produce a usable mask
    trace: list = field(default_factory=list)


def dp_values(ctx: FitnessContext) -> np.ndarray:
    """Per-client utility: 1 minus the min-max normalized historical loss."""
    lo, hi = ctx.loss_lo, ctx.loss_hi
    if hi <= lo:
        return np.ones(ctx.n)
    return 1.0 - (ctx.hist_loss - lo) / (hi - lo)


def dp_select(ctx: FitnessContext, dp_cfg: DpConfig | None = None) -> Selection:
    """Knapsack over eligible clients with quantized energy as the weight.

    If the chosen set overflows the system bandwidth, the lowest value-per-hertz
    clients are dropped until it fits.
    """
    cap, q = (dp_cfg or DpConfig()).resolve(ctx)
    idx = np.flatnonzero(ctx.eligible)
    mask = np.zeros(ctx.n, bool)
    if idx.size == 0:
        return Selection(SelectionMask.from_array(mask), "no eligible clients")
    weights = np.ceil(ctx.energy[idx] / q - 1e-9).astype(np.int64)
    values = dp_values(ctx)[idx]
    chosen, _ = knapsack_01(values, weights, int(math.floor(cap / q + 1e-9)))
    mask[idx[chosen]] = True
    budget = ctx.cfg.total_bandwidth
    if ctx.bandwidth[mask].sum() > budget:
        sel = np.flatnonzero(mask)
        density = dp_values(ctx)[sel] / ctx.bandwidth[sel]
        for j in sel[np.argsort(density, kind="stable")]:
            if ctx.bandwidth[mask].sum() <= budget:
                break
            mask[j] = False
    if not mask.any():
        return Selection(SelectionMask.from_array(mask), "nothing fits the energy capacity")
    return Selection(SelectionMask.from_array(mask))


# -- multi-armed bandit -------------------------------------------------------


@dataclass
class BanditState:
    pulls: np.ndarray
    means: np.ndarray
    t: int = 0
    gain_lo: float = math.inf
    gain_hi: float = -math.inf

    @classmethod
    def fresh(cls, n: int) -> "BanditState":
        return cls(np.zeros(n, dtype=np.int64), np.zeros(n))

    def update(self, selected, rewards) -> None:
        """Incremental mean update for the pulled arms, then advance time."""
        for i, r in zip(selected, np.broadcast_to(rewards, (len(selected),))):
            self.pulls[i] += 1
            self.means[i] += (r - self.means[i]) / self.pulls[i]
        self.t += 1

    def normalized_reward(self, gain: float) -> float:
        """Min-max normalize an accuracy gain against all gains seen so far."""
        self.gain_lo = min(self.gain_lo, gain)
        self.gain_hi = max(self.gain_hi, gain)
        if self.gain_hi <= self.gain_lo:
            return 0.5
        return (gain - self.gain_lo) / (self.gain_hi - self.gain_lo)


def ucb_index(state: BanditState, client_id: int, t: float) -> float:
    if t < 1:
        raise ValueError("t must be at least 1")
    n_i = state.pulls[client_id]
    if n_i == 0:
        return math.inf
    return float(state.means[client_id] + math.sqrt(2.0 * math.log(t) / n_i))


def mab_select(state: BanditState, ctx: FitnessContext, k: int) -> Selection:
    """Top-k eligible clients by UCB index, skipping any that overflow bandwidth."""
    if not 1 <= k <= ctx.n:
        raise ValueError("k must lie in [1, n]")
    t = max(state.t + 1, 1)
    index = np.array([ucb_index(state, i, t) for i in range(ctx.n)])
    # Sort by index descending, client id ascending on ties.
    order = sorted(range(ctx.n), key=lambda i: (-index[i], i))
    mask = np.zeros(ctx.n, bool)
    used = 0.0
    for i in order:
        if mask.sum() >= k:
            break
        if not ctx.eligible[i]:
            continue
        if used + ctx.bandwidth[i] > ctx.cfg.total_bandwidth:
            continue
        mask[i] = True
        used += ctx.bandwidth[i]
    if not mask.any():
        return Selection(SelectionMask.from_array(mask), "no eligible clients")
    return Selection(SelectionMask.from_array(mask))


# -- genetic algorithm ---------------------------------------------------------


@dataclass(frozen=True)
class GaConfig:
    population: int = 40
    generations: int = 50
    crossover_rate: float = 0.9
    mutation_rate: float | None = None  # None means 1/n
    tournament_size: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.population < 2 or self.population % 2:
            raise ValueError("population must be an even number >= 2")
        if not 0 <= self.crossover_rate <= 1:
            raise ValueError("crossover_rate must lie in [0, 1]")
        if self.mutation_rate is not None and not 0 <= self.mutation_rate <= 1:
            raise ValueError("mutation_rate must lie in [0, 1]")
        if self.tournament_size < 1:
            raise ValueError("tournament_size must be at least 1")

    def to_dict(self) -> dict:
        return asdict(self)


def _tournament(fit, size, rng):
    picks = rng.integers(0, len(fit), size=size)
    return picks[np.argmin(fit[picks])]


def ga_select(
    ctx: FitnessContext,
    ga_cfg: GaConfig | None = None,
    seed_key: tuple[int, ...] = (),
    initial: np.ndarray | None = None,
) -> Selection:
    cfg = ga_cfg or GaConfig()
    n = ctx.n
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, *seed_key]))
    pm = 1.0 / n if cfg.mutation_rate is None else cfg.mutation_rate

    pop = rng.random((cfg.population, n)) < 0.5 if initial is None else np.array(initial, bool)
    fit = ctx.evaluate_many(pop)
    best_i = int(np.argmin(fit))
    best, best_fit = pop[best_i].copy(), float(fit[best_i])
    trace = [best_fit]

    for _ in range(cfg.generations):
        children = [best.copy()]  # elitism
        while len(children) < cfg.population:
            a = pop[_tournament(fit, cfg.tournament_size, rng)]
            b = pop[_tournament(fit, cfg.tournament_size, rng)]
            if n > 1 and rng.random() < cfg.crossover_rate:
                cut = int(rng.integers(1, n))
                c1 = np.concatenate([a[:cut], b[cut:]])
                c2 = np.concatenate([b[:cut], a[cut:]])
            else:
                c1, c2 = a.copy(), b.copy()
            for child in (c1, c2):
                child ^= rng.random(n) < pm
                children.append(child)
        pop = np.array(children[: cfg.population])
        fit = ctx.evaluate_many(pop)
        i = int(np.argmin(fit))
        if fit[i] < best_fit:
            best, best_fit = pop[i].copy(), float(fit[i])
        trace.append(best_fit)
    return Selection(SelectionMask.from_array(best), None, trace)


# -- random ---------------------------------------------------------------------


def random_select(n: int, k: int, seed) -> SelectionMask:
    """Uniformly random k-subset of n clients."""
    if not 1 <= k <= n:
        raise ValueError("k must lie in [1, n]")
    rng = np.random.default_rng(seed)
    bits = np.zeros(n, bool)
    bits[rng.choice(n, size=k, replace=False)] = True
    return SelectionMask.from_array(bits)


def random_eligible_select(ctx: FitnessContext, k: int, seed) -> Selection:
    """Random k clients drawn from the eligible pool, in random order, skipping any
    that would overflow the system bandwidth."""
    rng = np.random.default_rng(seed)
    pool = np.flatnonzero(ctx.eligible)
    mask = np.zeros(ctx.n, bool)
    used = 0.0
    for i in rng.permutation(pool):
        if mask.sum() >= k:
            break
        if used + ctx.bandwidth[i] <= ctx.cfg.total_bandwidth:
            mask[i] = True
            used += ctx.bandwidth[i]
    if not mask.any():
        return Selection(SelectionMask.from_array(mask), "no eligible clients")
    return Selection(SelectionMask.from_array(mask))
