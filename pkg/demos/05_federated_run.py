"""
A full federated run
====================

Thirty rounds on the 10-client reference scenario (three clients hold mostly
wrong labels). The wolf pack is compared with picking three clients at
random, then select-then-train is compared with train-then-select. A single
seed is noisy: random can win one run, and the test suite compares means over
five seeds.
"""

from dataclasses import replace

from otafl.domain import SelectionTiming
from otafl.fl_sim import run_experiment
from otafl.scenario import reference_scenario

for kind in ("gwo", "random"):
    res = run_experiment(reference_scenario(seed=0, selector=kind))
    s = res.summary
    curve = [round(100 * r.global_accuracy, 1) for r in res.records[::5]]
    print(f"{kind:<7} accuracy {s.final_accuracy:.1f}%  energy {s.total_energy:.2f} J  "
          f"gee {s.gee:.2f} %/J  worst fairness {s.worst_fairness:.2f}  curve {curve}")

sc = reference_scenario(seed=0)
for mode in SelectionTiming:
    res = run_experiment(replace(sc, system=replace(sc.system, selection_timing=mode)))
    print(f"{mode.value:<16} total energy {res.summary.total_energy:.2f} J")
