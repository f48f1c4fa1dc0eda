import itertools
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from otafl import cost_model as cm
from otafl.domain import SelectionHistory, SelectionMask
from otafl.fitness import FitnessContext, FitnessWeights, all_masks, feasibility, fitness_value

from conftest import make_cfg, make_profile, random_fleet


def test_weights_validation():
    FitnessWeights()
    with pytest.raises(ValueError):
        FitnessWeights(w_loss=0.5)
    with pytest.raises(ValueError):
        FitnessWeights(penalty_coeff=0.5)
    with pytest.raises(ValueError):
        FitnessWeights(w_loss=-0.1, w_delay=0.45)
    assert FitnessWeights.from_dict(FitnessWeights().to_dict()) == FitnessWeights()


def test_delay_boundary_is_inclusive():
    cfg = make_cfg()
    p = make_profile()
    budget = cm.client_costs(p, cfg).comp_delay + cm.client_costs(p, cfg).tx_delay
    p = replace(p, delay_budget=budget)
    rep = feasibility(SelectionMask.from_ids([0], 1), [p], cfg, SelectionHistory.empty(1))
    assert rep.delay.ok and rep.delay.margin == 0.0
    assert rep.feasible


def test_bandwidth_overflow_by_one_hertz():
    fleet = [make_profile(0, bandwidth=4e6), make_profile(1, bandwidth=4e6 + 1)]
    cfg = make_cfg(total_bandwidth=8e6)
    rep = feasibility(SelectionMask.from_ids([0, 1], 2), fleet, cfg, SelectionHistory.empty(2))
    assert not rep.bandwidth.ok
    assert rep.violated() == ["bandwidth"]


def test_empty_mask_infeasible():
    fleet = [make_profile(0), make_profile(1)]
    rep = feasibility(SelectionMask.from_ids([], 2), fleet, make_cfg(), SelectionHistory.empty(2))
    assert not rep.feasible and rep.violated() == ["nonempty"]


def test_identical_clients_score_equal():
    fleet = [make_profile(0), make_profile(1), make_profile(2, data_size=150)]
    cfg, hist = make_cfg(), SelectionHistory.empty(3)
    a = fitness_value(SelectionMask.from_ids([0], 3), fleet, cfg, hist)
    b = fitness_value(SelectionMask.from_ids([1], 3), fleet, cfg, hist)
    assert a == b


def test_penalty_dominance_one_violation():
    fleet = [make_profile(0), make_profile(1, energy_budget=1e-6)]
    cfg, hist = make_cfg(), SelectionHistory.empty(2)
    mask = SelectionMask.from_ids([0, 1], 2)
    bad = fitness_value(mask, fleet, cfg, hist)
    fixed = [fleet[0], replace(fleet[1], energy_budget=1.0)]
    good = fitness_value(mask, fixed, cfg, hist)
    assert bad - good >= FitnessWeights().penalty_coeff - 1
    assert feasibility(mask, fleet, cfg, hist).violated() == ["energy"]


@pytest.mark.parametrize(
    "kw,name",
    [
        (dict(failure_count=1), "reliability"),
        (dict(target_accuracy=0.005), "accuracy"),
        (dict(delay_budget=1e-3), "delay"),
    ],
)
def test_each_per_client_constraint(kw, name):
    cfg = make_cfg(min_reliability=0.5)
    rep = feasibility(SelectionMask.from_ids([0], 1), [make_profile(0, **kw)], cfg, SelectionHistory.empty(1))
    assert name in rep.violated()


def test_caps_checked():
    cfg = make_cfg()
    p = make_profile(0, cpu_freq=2e9, cpu_freq_max=1e9, tx_power=0.3, tx_power_max=0.2)
    rep = feasibility(SelectionMask.from_ids([0], 1), [p], cfg, SelectionHistory.empty(1))
    assert {"cpu_cap", "power_cap"} <= set(rep.violated())


def test_zero_rate_client_is_infeasible():
    cfg = make_cfg()
    p = make_profile(0, tx_power=0.0)
    rep = feasibility(SelectionMask.from_ids([0], 1), [p], cfg, SelectionHistory.empty(1))
    # Infinite airtime but zero transmit energy: only the delay budget trips.
    assert rep.violated() == ["delay"]


def test_fairness_lookahead_forces_client():
    fleet = [make_profile(0, min_selection_fraction=0.5), make_profile(1)]
    cfg = make_cfg(total_rounds=10)
    # 5 rounds done, never picked: needs 5 of the remaining 5.
    hist = SelectionHistory((0, 5), 5)
    ctx = FitnessContext(fleet, cfg, hist)
    assert ctx.forced.tolist() == [True, False]
    assert not ctx.report(SelectionMask.from_ids([1], 2)).fairness.ok
    assert ctx.report(SelectionMask.from_ids([1], 2)).fairness.margin < 0
    assert ctx.report(SelectionMask.from_ids([0], 2)).fairness.ok
    # With one round of slack nobody is forced yet.
    ctx = FitnessContext(fleet, cfg, SelectionHistory((1, 4), 4))
    assert not ctx.forced.any()


def test_forcing_spreads_demand_under_bandwidth():
    # Four clients, two fit per round, each needs half of four rounds:
    # every round must host exactly two of them, starting now.
    fleet = [make_profile(i, bandwidth=5e6, min_selection_fraction=0.5) for i in range(4)]
    cfg = make_cfg(total_rounds=4, total_bandwidth=1e7)
    ctx = FitnessContext(fleet, cfg, SelectionHistory.empty(4))
    assert ctx.forced.sum() == 2


def test_unavailable_clients_are_violations():
    fleet = [make_profile(0), make_profile(1)]
    ctx = FitnessContext(fleet, make_cfg(), SelectionHistory.empty(2), available=[True, False])
    assert ctx.is_feasible(SelectionMask.from_ids([0], 2))
    assert not ctx.is_feasible(SelectionMask.from_ids([1], 2))
    assert ctx.report(SelectionMask.from_ids([1], 2)).violated() == ["available"]


# -- oracle -----------------------------------------------------------------------


def _oracle_fitness(bits, fleet, cfg, hist, w):
    """Term-by-term re-implementation over plain Python loops."""
    n = len(fleet)
    costs = [cm.client_costs(p, cfg) for p in fleet]
    delay = [c.comp_delay + c.tx_delay for c in costs]
    energy = [c.comp_energy + c.tx_energy for c in costs]
    sel = [i for i in range(n) if bits[i]]
    T = cfg.total_rounds

    losses = [p.historical_loss for p in fleet]
    dsel = sum(fleet[i].data_size for i in sel)
    L = sum(fleet[i].data_size * losses[i] for i in sel) / dsel
    L = (L - min(losses)) / (max(losses) - min(losses))

    worst = max(delay[i] for i in sel)
    D = (worst - min(delay)) / (max(delay) - min(delay))

    E = (sum(energy[i] for i in sel) - min(energy)) / (sum(energy) - min(energy))
    R = sum(costs[i].reliability for i in sel) / len(sel)

    c = [p.min_selection_fraction for p in fleet]
    cnt = hist.counts
    phi = sum(max(0.0, c[i] - (cnt[i] + bits[i]) / T) for i in range(n)) / n
    lo = sum(max(0.0, c[i] - (cnt[i] + 1) / T) for i in range(n)) / n
    hi = sum(max(0.0, c[i] - cnt[i] / T) for i in range(n)) / n
    F = (phi - lo) / (hi - lo) if hi > lo else 0.0

    viol = 0
    for i in sel:
        p = fleet[i]
        viol += delay[i] > p.delay_budget
        viol += not (0 < energy[i] <= p.energy_budget)
        viol += costs[i].reliability < cfg.min_reliability
        viol += not (cfg.min_accuracy <= p.target_accuracy <= 1)
        viol += not (0 < p.cpu_freq <= p.cpu_freq_max)
        viol += not (0 <= p.tx_power <= p.tx_power_max)
    viol += sum(fleet[i].bandwidth for i in sel) > cfg.total_bandwidth
    return (w.w_loss * L + w.w_delay * D + w.w_energy * E + w.w_reliability * (1 - R)
            + w.w_fairness * F + w.penalty_coeff * viol)


def test_exhaustive_ranking_matches_oracle():
    fleet = random_fleet(8, 5)
    fleet = [replace(p, min_selection_fraction=0.1 * (i % 3), failure_count=i % 2,
                     delay_budget=3.0 + i, energy_budget=0.05 + 0.05 * i) for i, p in enumerate(fleet)]
    cfg = make_cfg(total_bandwidth=6e6, min_reliability=0.05, total_rounds=20)
    hist = SelectionHistory((3, 0, 1, 2, 0, 4, 1, 0), 6)
    w = FitnessWeights()
    ctx = FitnessContext(fleet, cfg, hist, w)
    assert not ctx.forced.any()  # the oracle does not model the look-ahead
    masks = all_masks(8)
    ours = ctx.evaluate_many(masks)
    ref = np.array([_oracle_fitness(m.astype(int), fleet, cfg, hist, w) for m in masks])
    np.testing.assert_allclose(ours, ref, rtol=1e-9, atol=1e-12)
    assert (np.argsort(ours, kind="stable") == np.argsort(ref, kind="stable")).all()


def test_terms_in_unit_interval():
    fleet = random_fleet(6, 2)
    ctx = FitnessContext(fleet, make_cfg(), SelectionHistory((1, 0, 0, 2, 0, 1), 3))
    t = ctx.terms(all_masks(6))
    assert t.min() >= 0 and t.max() <= 1


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_penalty_dominance_property(seed):
    rng = np.random.default_rng(seed)
    fleet = random_fleet(6, seed)
    fleet = [replace(p, energy_budget=float(rng.uniform(0.01, 0.3)), delay_budget=float(rng.uniform(0.5, 6)))
             for p in fleet]
    ctx = FitnessContext(fleet, make_cfg(total_bandwidth=4e6), SelectionHistory.empty(6))
    masks = all_masks(6)
    f = ctx.evaluate_many(masks)
    ok = np.array([ctx.is_feasible(m) for m in masks])
    if ok.any() and (~ok).any():
        assert f[ok].max() < f[~ok].min()


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.1, 10.0))
def test_argmin_invariant_to_loss_scale(seed, scale):
    fleet = random_fleet(6, seed)
    w = FitnessWeights(w_loss=1.0, w_delay=0.0, w_energy=0.0, w_reliability=0.0, w_fairness=0.0)
    cfg, hist = make_cfg(total_bandwidth=5e6), SelectionHistory.empty(6)
    masks = all_masks(6)
    a = FitnessContext(fleet, cfg, hist, w).evaluate_many(masks)
    scaled = [replace(p, historical_loss=p.historical_loss * scale) for p in fleet]
    b = FitnessContext(scaled, cfg, hist, w).evaluate_many(masks)
    assert np.isclose(a.min(), a[np.argmin(b)], rtol=0, atol=1e-12)


def test_fitness_is_pure():
    fleet = random_fleet(5, 1)
    hist = SelectionHistory.empty(5)
    m = SelectionMask.from_ids([0, 3], 5)
    assert fitness_value(m, fleet, make_cfg(), hist) == fitness_value(m, fleet, make_cfg(), hist)


def test_all_masks_enumeration():
    m = all_masks(3)
    assert m.shape == (7, 3)
    assert len({tuple(r) for r in m.astype(int)}) == 7
    assert not (~m.any(axis=1)).any()


def test_violation_counts_instances():
    # Two clients each over their energy budget: two violations.
    fleet = [make_profile(i, energy_budget=1e-9) for i in range(2)]
    ctx = FitnessContext(fleet, make_cfg(), SelectionHistory.empty(2))
    assert ctx.violations(np.array([[True, True]]))[0] == 2
    assert math.isclose(ctx.evaluate(SelectionMask.from_ids([0, 1], 2)) // 1e6, 2)


def test_evaluate_accepts_arrays_and_masks():
    fleet = random_fleet(4, 3)
    ctx = FitnessContext(fleet, make_cfg(), SelectionHistory.empty(4))
    bits = [1, 0, 1, 0]
    assert ctx.evaluate(bits) == ctx.evaluate(SelectionMask(tuple(bits)))
    assert list(itertools.islice(ctx.evaluate_many(np.array([bits, bits], bool)), 2))[0] == ctx.evaluate(bits)
