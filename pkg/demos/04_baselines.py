"""
Four comparison selectors on one round
======================================

Knapsack DP on energy, a genetic algorithm, a UCB bandit and random picks,
all judged by the same fitness as the wolf pack.
"""

from otafl.baselines import BanditState, DpConfig, GaConfig, dp_select, ga_select, mab_select, random_select
from otafl.domain import SelectionHistory
from otafl.fitness import FitnessContext
from otafl.gwo import GwoConfig, optimize
from otafl.scenario import GeneratorSpec, generate_scenario

sc = generate_scenario(GeneratorSpec(n=10), seed=3)
ctx = FitnessContext(sc.fleet, sc.system, SelectionHistory.empty(10))

picks = {
    "gwo": optimize(ctx, GwoConfig(seed=0)).mask,
    "ga": ga_select(ctx, GaConfig(seed=0)).mask,
    "dp": dp_select(ctx, DpConfig()).mask,
    "mab": mab_select(BanditState.fresh(10), ctx, k=2).mask,
    "random": random_select(10, 3, seed=0),
}
for name, mask in picks.items():
    ok = "feasible" if ctx.is_feasible(mask) else "infeasible: " + ", ".join(ctx.report(mask).violated())
    print(f"{name:<7} {str(mask.selected):<22} fitness {ctx.evaluate(mask):>12.4f}  {ok}")
