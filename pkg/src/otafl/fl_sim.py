"""Federated training loop with client selection and over-the-air aggregation.

The learner is a small numpy classifier (softmax regression or a one hidden
layer MLP) trained with mini-batch SGD on a synthetic Gaussian-mixture
dataset split across clients with Dirichlet label skew. The analog channel is
modeled after aggregation as additive white Gaussian noise at a given SNR.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from . import baselines, gwo
from .cost_model import FleetCosts, fleet_costs
from .domain import (
    ClientProfile,
    RoundRecord,
    SelectionHistory,
    SelectionMask,
    SelectionTiming,
    SystemConfig,
    ema_update,
    with_historical_loss,
)
from .fitness import FitnessContext
from .metrics import ExperimentSummary, summarize

logger = logging.getLogger(__name__)

PROB_FLOOR = 1e-12
HIST_LOSS_DECAY = 0.5


class ModelKind(str, Enum):
    SOFTMAX = "SoftmaxRegression"
    MLP = "OneHiddenLayerMlp"


@dataclass(frozen=True)
class TrainerConfig:
    model: ModelKind = ModelKind.SOFTMAX
    local_epochs: int = 2
    learning_rate: float = 0.1
    batch_size: int = 16
    num_classes: int = 3
    hidden_units: int = 16
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "model", ModelKind(self.model))
        if self.local_epochs < 1:
            raise ValueError("local_epochs must be at least 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.batch_size < 1 or self.num_classes < 2 or self.hidden_units < 1:
            raise ValueError("batch_size, num_classes and hidden_units must be positive (num_classes >= 2)")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["model"] = self.model.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainerConfig":
        return cls(**_known(cls, d))


@dataclass(frozen=True)
class DataConfig:
    """Synthetic dataset and partition settings.

    ``pool_factor`` sizes the training pool relative to the fleet's total data
    so the Dirichlet partition has spare samples of every label.
    ``noisy_clients`` clients (picked at random from the data seed) have each
    training label replaced by a different one with probability
    ``label_noise``, modelling devices with poor local data.
    """

    num_features: int = 5
    class_separation: float = 1.5
    pool_factor: float = 2.0
    test_samples: int = 600
    dirichlet_alpha: float = 0.3
    noisy_clients: int = 0
    label_noise: float = 0.0

    def __post_init__(self):
        if self.num_features < 1 or self.test_samples < 1:
            raise ValueError("num_features and test_samples must be positive")
        if self.pool_factor < 1 or not self.dirichlet_alpha > 0:
            raise ValueError("pool_factor must be >= 1 and dirichlet_alpha positive")
        if self.noisy_clients < 0 or not 0 <= self.label_noise <= 1:
            raise ValueError("noisy_clients must be >= 0 and label_noise in [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "DataConfig":
        return cls(**_known(cls, d))


@dataclass(frozen=True)
class LocalDataset:
    X: np.ndarray
    y: np.ndarray
    owner: int

    def __len__(self) -> int:
        return len(self.y)


@dataclass
class GlobalModel:
    w: np.ndarray
    version: int = 0


class DivergenceError(RuntimeError):
    pass


# -- data -----------------------------------------------------------------------


def make_gaussian_mixture(n: int, num_classes: int, num_features: int, separation: float, rng) -> tuple:
    """Balanced labels, unit-variance clusters around random class centers."""
    centers = rng.normal(0.0, separation, size=(num_classes, num_features))
    y = np.arange(n) % num_classes
    rng.shuffle(y)
    X = centers[y] + rng.normal(size=(n, num_features))
    return X, y, centers


def partition_data(labels, sizes: Sequence[int], alpha: float, rng, num_classes: int | None = None) -> list[np.ndarray]:
    """Split sample indices into disjoint client shards with Dirichlet label skew.

    Client i gets exactly ``sizes[i]`` samples with label proportions drawn from
    Dir(alpha * K * global_histogram); as alpha grows every shard approaches the
    global label histogram. Labels that run out are backfilled from whatever
    labels remain, most-preferred first.
    """
    labels = np.asarray(labels)
    if sum(sizes) > len(labels):
        raise ValueError(f"need {sum(sizes)} samples but only {len(labels)} are available")
    K = num_classes or int(labels.max()) + 1
    pools = [list(rng.permutation(np.flatnonzero(labels == k))) for k in range(K)]
    global_hist = np.bincount(labels, minlength=K) / len(labels)
    conc = np.maximum(alpha * K * global_hist, 1e-12)
    shards = []
    for size in sizes:
        q = rng.dirichlet(conc)
        want = np.floor(q * size).astype(int)
        # largest remainder
        short = size - want.sum()
        if short > 0:
            want[np.argsort(-(q * size - want), kind="stable")[:short]] += 1
        taken = []
        for k in range(K):
            got = min(want[k], len(pools[k]))
            taken += pools[k][:got]
            del pools[k][:got]
        for k in np.argsort(-q, kind="stable"):
            need = size - len(taken)
            if need == 0:
                break
            got = min(need, len(pools[k]))
            taken += pools[k][:got]
            del pools[k][:got]
        shards.append(np.array(sorted(taken), dtype=np.int64))
    return shards


def corrupt_labels(datasets: Sequence[LocalDataset], count: int, rate: float, num_classes: int, rng) -> list[LocalDataset]:
    """Pick ``count`` datasets at random and flip each label to a different
    class with probability ``rate``."""
    if count > len(datasets):
        raise ValueError(f"cannot corrupt {count} of {len(datasets)} clients")
    out = list(datasets)
    for i in sorted(rng.choice(len(datasets), size=count, replace=False)):
        ds = out[i]
        flip = rng.random(len(ds)) < rate
        shift = rng.integers(1, num_classes, size=len(ds))
        y = np.where(flip, (ds.y + shift) % num_classes, ds.y)
        out[i] = LocalDataset(ds.X, y, ds.owner)
    return out


# -- model ----------------------------------------------------------------------


def param_count(tcfg: TrainerConfig, d: int) -> int:
    K = tcfg.num_classes
    if tcfg.model is ModelKind.SOFTMAX:
        return d * K + K
    h = tcfg.hidden_units
    return d * h + h + h * K + K


def init_params(tcfg: TrainerConfig, d: int, rng) -> np.ndarray:
    return rng.normal(0.0, 0.01, size=param_count(tcfg, d))


def _unpack(w, tcfg: TrainerConfig, d: int):
    K = tcfg.num_classes
    if tcfg.model is ModelKind.SOFTMAX:
        return w[: d * K].reshape(d, K), w[d * K :]
    h = tcfg.hidden_units
    i = 0
    W1 = w[i : i + d * h].reshape(d, h); i += d * h  # noqa: E702
    b1 = w[i : i + h]; i += h  # noqa: E702
    W2 = w[i : i + h * K].reshape(h, K); i += h * K  # noqa: E702
    b2 = w[i : i + K]
    return W1, b1, W2, b2


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def predict_proba(w, X, tcfg: TrainerConfig) -> np.ndarray:
    d = X.shape[1]
    parts = _unpack(w, tcfg, d)
    if tcfg.model is ModelKind.SOFTMAX:
        W, b = parts
        return _softmax(X @ W + b)
    W1, b1, W2, b2 = parts
    return _softmax(np.tanh(X @ W1 + b1) @ W2 + b2)


def cross_entropy(probs, y) -> float:
    """Mean categorical cross-entropy with probabilities floored at PROB_FLOOR."""
    p = np.clip(probs[np.arange(len(y)), y], PROB_FLOOR, 1.0)
    return float(-np.mean(np.log(p)))


def local_loss(w, dataset: LocalDataset, tcfg: TrainerConfig) -> float:
    return cross_entropy(predict_proba(w, dataset.X, tcfg), dataset.y)


def loss_and_grad(w, X, y, tcfg: TrainerConfig) -> tuple[float, np.ndarray]:
    n, d = X.shape
    K = tcfg.num_classes
    onehot = np.zeros((n, K))
    onehot[np.arange(n), y] = 1.0
    if tcfg.model is ModelKind.SOFTMAX:
        W, b = _unpack(w, tcfg, d)
        P = _softmax(X @ W + b)
        G = (P - onehot) / n
        grad = np.concatenate([(X.T @ G).ravel(), G.sum(axis=0)])
        return cross_entropy(P, y), grad
    W1, b1, W2, b2 = _unpack(w, tcfg, d)
    H = np.tanh(X @ W1 + b1)
    P = _softmax(H @ W2 + b2)
    G2 = (P - onehot) / n
    G1 = (G2 @ W2.T) * (1.0 - H**2)
    grad = np.concatenate([(X.T @ G1).ravel(), G1.sum(axis=0), (H.T @ G2).ravel(), G2.sum(axis=0)])
    return cross_entropy(P, y), grad


def local_train(w, dataset: LocalDataset, tcfg: TrainerConfig, rng) -> tuple[np.ndarray, float]:
    """Mini-batch SGD from ``w``; returns (w_after - w_before, mean loss of the last epoch)."""
    # Overflow is detected below and reported as DivergenceError.
    with np.errstate(over="ignore", invalid="ignore"):
        return _sgd(w, dataset, tcfg, rng)


def _sgd(w, dataset: LocalDataset, tcfg: TrainerConfig, rng) -> tuple[np.ndarray, float]:
    w0 = np.asarray(w, dtype=float)
    cur = w0.copy()
    n = len(dataset)
    epoch_loss = local_loss(cur, dataset, tcfg)
    for _ in range(tcfg.local_epochs):
        order = rng.permutation(n)
        batch_losses, batch_sizes = [], []
        for start in range(0, n, tcfg.batch_size):
            idx = order[start : start + tcfg.batch_size]
            loss, grad = loss_and_grad(cur, dataset.X[idx], dataset.y[idx], tcfg)
            if not math.isfinite(loss) or not np.all(np.isfinite(grad)):
                raise DivergenceError(
                    f"client {dataset.owner} diverged with learning rate {tcfg.learning_rate}"
                )
            cur -= tcfg.learning_rate * grad
            batch_losses.append(loss)
            batch_sizes.append(len(idx))
        epoch_loss = float(np.average(batch_losses, weights=batch_sizes))
    if not np.all(np.isfinite(cur)):
        raise DivergenceError(f"client {dataset.owner} diverged with learning rate {tcfg.learning_rate}")
    return cur - w0, epoch_loss


def evaluate(w, X, y, tcfg: TrainerConfig) -> tuple[float, float]:
    probs = predict_proba(w, X, tcfg)
    return cross_entropy(probs, y), float(np.mean(probs.argmax(axis=1) == y))


# -- channel ---------------------------------------------------------------------


def ota_aggregate(updates, weights, snr_db: float | None = None, rng=None) -> np.ndarray:
    """Weighted sum of client updates, optionally corrupted by AWGN.

    The noise variance per coordinate is the mean power of the noiseless sum
    divided by the linear SNR. ``snr_db`` of None or +inf means a noiseless
    channel.
    """
    updates = np.asarray(updates, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if updates.shape[0] == 0:
        raise ValueError("no completed clients to aggregate")
    if abs(weights.sum() - 1.0) > 1e-9:
        raise ValueError("aggregation weights must sum to 1")
    agg = weights @ updates
    if snr_db is None or math.isinf(snr_db) and snr_db > 0:
        return agg
    if rng is None:
        raise ValueError("a random generator is required for a noisy channel")
    power = float(np.mean(agg**2))
    sigma = math.sqrt(power * 10.0 ** (-snr_db / 10.0))
    return agg + rng.normal(0.0, sigma, size=agg.shape)


def inject_failures(mask: SelectionMask, fleet, cfg: SystemConfig, rng, costs: FleetCosts | None = None) -> set[int]:
    """Each selected client fails independently with probability 1 - reliability."""
    costs = costs if costs is not None else fleet_costs(fleet, cfg)
    draws = rng.random(len(mask))
    return {i for i in mask.selected if draws[i] < 1.0 - costs.reliability[i]}


# -- selectors --------------------------------------------------------------------


@dataclass
class SelectorOutput:
    mask: SelectionMask
    flag: str | None = None
    trace: list = field(default_factory=list)


class Selector:
    """Wraps one selection strategy behind ``select`` / ``feedback``."""

    def __init__(self, kind: str, params: dict, n: int, master_seed: int):
        self.kind = kind
        self.params = {k: v for k, v in params.items() if k != "kind"}
        self.n = n
        self.master_seed = master_seed
        if kind == "gwo":
            self.cfg = gwo.GwoConfig(**self.params)
        elif kind == "ga":
            self.cfg = baselines.GaConfig(**self.params)
        elif kind == "dp":
            self.cfg = baselines.DpConfig(**self.params)
        elif kind in ("mab", "random"):
            default_k = math.ceil(n / 5) if kind == "mab" else min(3, n)
            self.k = int(self.params.get("k", default_k))
            self.bandit = baselines.BanditState.fresh(n)
        else:
            raise ValueError(f"unknown selector kind {kind!r}")

    def select(self, ctx: FitnessContext, round_idx: int) -> SelectorOutput:
        key = (self.master_seed, round_idx)
        if self.kind == "gwo":
            res = gwo.optimize(ctx, self.cfg, key)
            return SelectorOutput(res.mask, None if res.feasible else "infeasible", res.trace)
        if self.kind == "ga":
            s = baselines.ga_select(ctx, self.cfg, key)
        elif self.kind == "dp":
            s = baselines.dp_select(ctx, self.cfg)
        elif self.kind == "mab":
            s = baselines.mab_select(self.bandit, ctx, self.k)
        else:
            # Constraint-blind by design: the naive reference point.
            mask = baselines.random_select(self.n, self.k, np.random.SeedSequence([*key, 4]))
            return SelectorOutput(mask)
        return SelectorOutput(s.mask, s.flag, s.trace)

    def feedback(self, mask: SelectionMask, accuracy_gain: float) -> None:
        if self.kind != "mab":
            return
        reward = self.bandit.normalized_reward(accuracy_gain)
        self.bandit.update(mask.selected, reward)


# -- experiment ------------------------------------------------------------------


@dataclass
class SimState:
    fleet: list[ClientProfile]
    cfg: SystemConfig
    tcfg: TrainerConfig
    weights: object
    costs: FleetCosts
    datasets: list[LocalDataset]
    X_test: np.ndarray
    y_test: np.ndarray
    model: GlobalModel
    hist: SelectionHistory
    hist_loss: np.ndarray
    accuracy: float = 0.0
    loss: float = math.nan
    round: int = 0
    traces: dict = field(default_factory=dict)


def _rng(*key) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in key]))


def init_state(scenario) -> SimState:
    cfg, tcfg, dcfg = scenario.system, scenario.trainer, scenario.data
    fleet = list(scenario.fleet)
    seed = cfg.master_seed
    sizes = [p.data_size for p in fleet]
    pool = int(math.ceil(sum(sizes) * dcfg.pool_factor))
    rng = _rng(seed, 0, 0, 10)
    X, y, _ = make_gaussian_mixture(
        pool + dcfg.test_samples, tcfg.num_classes, dcfg.num_features, dcfg.class_separation, rng
    )
    X_train, y_train = X[:pool], y[:pool]
    X_test, y_test = X[pool:], y[pool:]
    shards = partition_data(y_train, sizes, dcfg.dirichlet_alpha, _rng(seed, 0, 0, 11), tcfg.num_classes)
    datasets = [LocalDataset(X_train[s], y_train[s], p.id) for s, p in zip(shards, fleet)]
    if dcfg.noisy_clients and dcfg.label_noise > 0:
        datasets = corrupt_labels(datasets, dcfg.noisy_clients, dcfg.label_noise, tcfg.num_classes, _rng(seed, 0, 0, 13))
    w0 = init_params(tcfg, dcfg.num_features, _rng(seed, tcfg.seed, 0, 12))
    loss, acc = evaluate(w0, X_test, y_test, tcfg)
    return SimState(
        fleet=fleet,
        cfg=cfg,
        tcfg=tcfg,
        weights=scenario.weights,
        costs=fleet_costs(fleet, cfg),
        datasets=datasets,
        X_test=X_test,
        y_test=y_test,
        model=GlobalModel(w0, 0),
        hist=SelectionHistory.empty(len(fleet)),
        hist_loss=np.array([p.historical_loss for p in fleet], float),
        accuracy=acc,
        loss=loss,
    )


def _train_clients(state: SimState, clients, round_idx: int) -> tuple[dict, dict]:
    updates, losses = {}, {}
    for i in clients:
        rng = _rng(state.cfg.master_seed, round_idx, i, 2)
        upd, loss = local_train(state.model.w, state.datasets[i], state.tcfg, rng)
        updates[i], losses[i] = upd, loss
        state.hist_loss[i] = ema_update(state.hist_loss[i], loss, HIST_LOSS_DECAY)
    return updates, losses


def run_round(state: SimState, selector: Selector, mode: SelectionTiming | None = None) -> RoundRecord:
    mode = SelectionTiming(mode or state.cfg.selection_timing)
    t = state.round
    n = len(state.fleet)
    seed = state.cfg.master_seed
    costs = state.costs
    all_mask = SelectionMask.from_array(np.ones(n, bool), t)

    if mode is SelectionTiming.TRAIN_THEN_SELECT:
        failed = inject_failures(all_mask, state.fleet, state.cfg, _rng(seed, t, 0, 1), costs)
        trained = list(range(n))
        updates, losses = _train_clients(state, [i for i in trained if i not in failed], t)
        available = np.array([i not in failed for i in range(n)])
        fleet_r = with_historical_loss(state.fleet, state.hist_loss)
        ctx = FitnessContext(fleet_r, state.cfg, state.hist, state.weights, available=available, costs=costs)
        out = selector.select(ctx, t)
        mask = SelectionMask(out.mask.bits, t)
        contributors = [i for i in mask.selected if i not in failed]
    else:
        fleet_r = with_historical_loss(state.fleet, state.hist_loss)
        ctx = FitnessContext(fleet_r, state.cfg, state.hist, state.weights, costs=costs)
        out = selector.select(ctx, t)
        mask = SelectionMask(out.mask.bits, t)
        failed = inject_failures(mask, state.fleet, state.cfg, _rng(seed, t, 0, 1), costs)
        trained = mask.selected
        updates, losses = _train_clients(state, [i for i in trained if i not in failed], t)
        contributors = [i for i in trained if i not in failed]

    if out.trace:
        state.traces[t] = list(out.trace)
    fitness = ctx.evaluate(mask)
    feasible = ctx.is_feasible(mask)

    aborted = not contributors
    if not aborted:
        D = np.array([state.fleet[i].data_size for i in contributors], float)
        agg = ota_aggregate(
            [updates[i] for i in contributors], D / D.sum(), state.cfg.ota_snr_db, _rng(seed, t, 0, 3)
        )
        state.model = GlobalModel(state.model.w + agg, t + 1)

    prev_acc = state.accuracy
    state.loss, state.accuracy = evaluate(state.model.w, state.X_test, state.y_test, state.tcfg)
    state.hist = state.hist.record(mask)
    selector.feedback(mask, state.accuracy - prev_acc)

    trained = list(trained)
    energy = sum(
        costs.comp_energy[i] + (0.0 if i in failed else costs.tx_energy[i]) for i in trained
    )
    delay = max((costs.total_delay[i] for i in trained), default=0.0)
    record = RoundRecord(
        round=t,
        mask=mask,
        global_loss=state.loss,
        global_accuracy=state.accuracy,
        round_delay=float(delay),
        round_energy=float(energy),
        failures=frozenset(failed) & frozenset(mask.selected),
        per_client_loss=losses,
        failed_trainers=frozenset(failed),
        selection_fitness=fitness,
        selection_feasible=feasible,
        aborted=aborted,
        bandwidth_used=float(sum(state.fleet[i].bandwidth for i in mask.selected)),
        selected_reliability=tuple(float(costs.reliability[i]) for i in mask.selected),
    )
    state.round += 1
    return record


@dataclass
class ExperimentResult:
    records: list[RoundRecord]
    summary: ExperimentSummary
    history: SelectionHistory
    traces: dict
    state: SimState


class ExperimentError(RuntimeError):
    def __init__(self, message, records):
        super().__init__(message)
        self.records = records


def run_experiment(scenario, on_round: Callable[[RoundRecord], None] | None = None) -> ExperimentResult:
    state = init_state(scenario)
    selector = Selector(scenario.selector_kind, scenario.selector, len(state.fleet), scenario.system.master_seed)
    records = []
    for _ in range(scenario.system.total_rounds):
        try:
            rec = run_round(state, selector)
        except Exception as exc:
            raise ExperimentError(f"round {state.round} failed: {exc}", records) from exc
        records.append(rec)
        if on_round is not None:
            on_round(rec)
    m = scenario.metrics
    summary = summarize(records, state.hist, m.get("convergence_epsilon", 1e-3), m.get("convergence_window", 5))
    return ExperimentResult(records, summary, state.hist, state.traces, state)


def _known(cls, d: dict) -> dict:
    names = {f.name for f in fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ValueError(f"unknown field(s) for {cls.__name__}: {', '.join(sorted(unknown))}")
    return dict(d)
