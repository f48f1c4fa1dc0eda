import time
from dataclasses import replace

import numpy as np
import pytest

from otafl.domain import SelectionHistory
from otafl.fitness import FitnessContext, FitnessWeights, all_masks
from otafl.gwo import (
    GwoConfig,
    coefficient_a,
    coefficients_AC,
    decode,
    leader_guided_update,
    minimize,
    optimize,
)
from otafl.scenario import GeneratorSpec, generate_scenario

from conftest import make_cfg, make_profile, random_fleet


def optimality_instance(seed: int) -> FitnessContext:
    """Generated 10-client fleet with heterogeneous loss history."""
    sc = generate_scenario(GeneratorSpec(n=10), seed=seed)
    rng = np.random.default_rng(seed)
    fleet = [replace(p, historical_loss=float(rng.uniform(0.3, 1.5))) for p in sc.fleet]
    return FitnessContext(fleet, sc.system, SelectionHistory.empty(10))


def test_config_validation():
    with pytest.raises(ValueError):
        GwoConfig(population_size=3)
    with pytest.raises(ValueError):
        GwoConfig(max_iter=0)
    with pytest.raises(ValueError):
        GwoConfig(wolf_weights=(0.5, 0.5, 0.5))
    assert GwoConfig(wolf_weights=[0.5, 0.25, 0.25]).to_dict()["wolf_weights"] == [0.5, 0.25, 0.25]


def test_coefficient_a_examples():
    assert coefficient_a(0, 50) == 2.0
    assert coefficient_a(25, 50) == 1.0
    assert coefficient_a(50, 50) == 0.0
    with pytest.raises(ValueError):
        coefficient_a(51, 50)


def test_coefficients_examples():
    rng = np.random.default_rng(0)
    A, C = coefficients_AC(0.0, rng, (3, 4))
    assert (A == 0).all() and ((C >= 0) & (C <= 2)).all()

    class Ones:
        def random(self, shape):
            return np.ones(shape)

    A, C = coefficients_AC(2.0, Ones(), (2,))
    assert A.tolist() == [2.0, 2.0] and C.tolist() == [2.0, 2.0]


def test_coefficients_monte_carlo():
    A, _ = coefficients_AC(1.5, np.random.default_rng(7), (10_000,))
    assert A.min() >= -1.5 and A.max() <= 1.5
    sigma = 2 * 1.5 / np.sqrt(12) / np.sqrt(A.size)
    assert abs(A.mean()) < 3 * sigma


def test_update_fixed_point():
    x = np.array([0.2, 0.9, 0.4])
    out = leader_guided_update(x, np.tile(x, (3, 1)), np.zeros((3, 3)), np.ones((3, 3)))
    np.testing.assert_allclose(out, x, rtol=0, atol=1e-15)


def test_update_mean_of_leaders():
    leaders = np.array([[0.1, 0.2], [0.4, 0.8], [0.7, 0.5]])
    out = leader_guided_update([0.0, 0.0], leaders, np.zeros((3, 2)), np.ones((3, 2)))
    np.testing.assert_allclose(out, leaders.mean(axis=0), rtol=0, atol=1e-15)


def test_update_step_by_step_oracle():
    rng = np.random.default_rng(3)
    for _ in range(50):
        x = rng.random(5)
        L = rng.random((3, 5))
        A = rng.uniform(-2, 2, (3, 5))
        C = rng.uniform(0, 2, (3, 5))
        w = rng.dirichlet(np.ones(3))
        expected = []
        for j in range(5):
            v = 0.0
            for i in range(3):
                d = abs(C[i][j] * L[i][j] - x[j])
                v += w[i] * (L[i][j] - A[i][j] * d)
            expected.append(min(1.0, max(0.0, v)))
        np.testing.assert_allclose(leader_guided_update(x, L, A, C, w), expected, rtol=0, atol=1e-12)


def test_decode_examples():
    assert decode([0.7, 0.2, 0.51]).tolist() == [True, False, True]
    assert decode([0.5, 0.5]).tolist() == [False, False]
    assert not decode(np.zeros(4)).any()


def test_unique_feasible_singleton():
    fleet = [make_profile(i, energy_budget=1e-6) for i in range(6)]
    fleet[3] = replace(fleet[3], energy_budget=1.0)
    w = FitnessWeights(w_loss=1.0, w_delay=0.0, w_energy=0.0, w_reliability=0.0, w_fairness=0.0)
    ctx = FitnessContext(fleet, make_cfg(), SelectionHistory.empty(6), w)
    hits = 0
    for seed in range(100):
        r = optimize(ctx, GwoConfig(seed=seed))
        hits += r.mask.selected == [3] and r.feasible
    assert hits == 100, f"unique feasible singleton found in {hits}/100 seeds"


def test_all_infeasible_returns_flagged_least_penalized():
    fleet = [make_profile(i, energy_budget=1e-6) for i in range(4)]
    ctx = FitnessContext(fleet, make_cfg(), SelectionHistory.empty(4))
    r = optimize(ctx, GwoConfig(seed=1))
    assert not r.feasible
    assert r.fitness == ctx.evaluate_many(all_masks(4)).min()


def test_optimality_against_enumeration():
    masks = all_masks(10)
    within = exact = 0
    for seed in range(100):
        ctx = optimality_instance(seed)
        opt = ctx.evaluate_many(masks).min()
        got = optimize(ctx, GwoConfig(population_size=20, max_iter=50, seed=seed)).fitness
        within += got <= opt * 1.02 + 1e-12
        exact += abs(got - opt) <= 1e-12
    assert within >= 95 and exact >= 80


def test_mechanics_over_seeds():
    for seed in range(20):
        ctx = FitnessContext(random_fleet(8, seed), make_cfg(total_bandwidth=5e6), SelectionHistory.empty(8))
        seen = []

        def objective(x):
            seen.append(x.copy())
            return ctx.evaluate_many(decode(x))

        cfg = GwoConfig(population_size=10, max_iter=30, seed=seed)
        pop, trace, a_bounds, max_abs_A = minimize(objective, 8, cfg)
        assert all(b <= a for a, b in zip(trace, trace[1:]))
        assert all(((x >= 0) & (x <= 1)).all() for x in seen)
        assert len(seen) == cfg.max_iter + 1
        for t, (a, m) in enumerate(zip(a_bounds, max_abs_A)):
            assert a == coefficient_a(t, cfg.max_iter)
            assert m <= a


def test_determinism():
    ctx = optimality_instance(4)
    a = optimize(ctx, GwoConfig(seed=9), (1, 2))
    b = optimize(ctx, GwoConfig(seed=9), (1, 2))
    assert a.mask == b.mask and a.trace == b.trace
    c = optimize(ctx, GwoConfig(seed=9), (1, 3))
    assert c.population.positions.tolist() != a.population.positions.tolist()


def test_leaders_are_distinct_subsets():
    ctx = optimality_instance(2)
    r = optimize(ctx, GwoConfig(seed=0))
    keys = {decode(x).tobytes() for x in r.population.leaders}
    assert len(keys) == 3
    assert list(r.population.leader_fitness) == sorted(r.population.leader_fitness)


def test_continuous_hook_on_sphere():
    center = np.array([0.3, 0.6, 0.45, 0.8])

    def sphere(x):
        return ((x - center) ** 2).sum(axis=1)

    pop, trace, _, _ = minimize(sphere, 4, GwoConfig(population_size=20, max_iter=100, seed=0))
    assert trace[-1] < 1e-4
    np.testing.assert_allclose(pop.leaders[0], center, atol=1e-2)


def _time(S, iters, n=8):
    def obj(x):
        return (x ** 2).sum(axis=1)

    best = np.inf
    for _ in range(3):
        t0 = time.perf_counter()
        minimize(obj, n, GwoConfig(population_size=S, max_iter=iters, seed=0))
        best = min(best, time.perf_counter() - t0)
    return best


def test_runtime_scales_linearly():
    small, big = _time(10, 20), _time(20, 40)
    ratio = big / small
    assert 4 / 2 <= ratio <= 4 * 2
