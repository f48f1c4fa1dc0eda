"""
Seeded sweep through the command line
=====================================

The same run as ``otafl sweep --reference --selector gwo,dp,random --seed 0-2``,
written to a temporary directory, then the comparison table is printed.
"""

import csv
import tempfile
from pathlib import Path

from otafl.cli import main

out = Path(tempfile.mkdtemp()) / "sweep"
main(["sweep", "--reference", "--selector", "gwo,dp,random", "--seed", "0-2", "--rounds", "15", "--out-dir", str(out)])

with open(out / "comparison.csv", newline="") as fh:
    for row in csv.DictReader(fh):
        print(f"{row['selector']:<7} {row['seed']:<5} accuracy {float(row['final_accuracy']):6.2f}  "
              f"energy {float(row['total_energy']):7.3f}  fitness {float(row['mean_selection_fitness']):.4g}")
print("per-run files under", out)
