"""
Scoring client subsets
======================

Every selector ranks masks with the same fitness: a weighted sum of
normalized loss, delay, energy, unreliability and fairness shortfall, plus a
large penalty per violated constraint.
"""

import numpy as np

from otafl.domain import SelectionHistory, SelectionMask
from otafl.fitness import FitnessContext, all_masks
from otafl.scenario import GeneratorSpec, generate_scenario

sc = generate_scenario(GeneratorSpec(n=6), seed=1)
ctx = FitnessContext(sc.fleet, sc.system, SelectionHistory.empty(6))

masks = all_masks(6)
scores = ctx.evaluate_many(masks)
feasible = np.array([ctx.is_feasible(m) for m in masks])
print(f"{feasible.sum()} of {len(masks)} non-empty subsets are feasible")

# The five best subsets and their objective terms.
terms = ctx.terms(masks)
for j in np.argsort(scores)[:5]:
    ids = np.flatnonzero(masks[j]).tolist()
    print(f"{str(ids):<16} fitness {scores[j]:.4f}  terms {np.round(terms[j], 3).tolist()}")

# Why the full fleet is rejected.
report = ctx.report(SelectionMask.from_array(np.ones(6)))
print("all clients ->", report.violated())
print(f"bandwidth margin {report.bandwidth.margin / 1e6:.2f} MHz")
