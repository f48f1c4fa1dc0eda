"""
Grey wolf search against brute force
====================================

Ten clients give 1023 non-empty subsets, few enough to enumerate, so the
optimizer's answer can be checked exactly.
"""

import time
from dataclasses import replace

import numpy as np

from otafl.domain import SelectionHistory
from otafl.fitness import FitnessContext, all_masks
from otafl.gwo import GwoConfig, optimize
from otafl.scenario import GeneratorSpec, generate_scenario

sc = generate_scenario(GeneratorSpec(n=10), seed=7)
rng = np.random.default_rng(7)
loss = rng.uniform(0.3, 1.5, 10)  # pretend some clients have trained before
fleet = [replace(p, historical_loss=float(l)) for p, l in zip(sc.fleet, loss)]
ctx = FitnessContext(fleet, sc.system, SelectionHistory.empty(10))

t0 = time.perf_counter()
res = optimize(ctx, GwoConfig(population_size=20, max_iter=50, seed=0))
print(f"gwo      {res.mask.selected}  fitness {res.fitness:.5f}  ({time.perf_counter() - t0:.2f}s)")

masks = all_masks(10)
scores = ctx.evaluate_many(masks)
best = masks[np.argmin(scores)]
print(f"optimum  {np.flatnonzero(best).tolist()}  fitness {scores.min():.5f}")

# Best-so-far fitness every ten iterations.
print("trace", [round(v, 4) for v in res.trace[::10]])
