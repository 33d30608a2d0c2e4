"""Frozen triangle networks with a known loop inconsistency.

Treatments A, B, C; two two-arm studies per edge; se 0.15 for every
contrast. True effects: A-B 0.5, A-C 0.2, B-C = (A-C) - (A-B) + b_true.
Noise is drawn once with a fixed seed and the files are checked in.
"""

import csv
import random
from pathlib import Path

here = Path(__file__).resolve().parent
SE = 0.15
MU_AB, MU_AC = 0.5, 0.2

for name, b_true in [("triangle_b0", 0.0), ("triangle_b05", 0.5), ("triangle_b10", 1.0)]:
    rng = random.Random(f"{name}-2024")
    truth = {("A", "B"): MU_AB, ("A", "C"): MU_AC, ("B", "C"): MU_AC - MU_AB + b_true}
    with open(here / f"{name}.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["study", "t1", "t2", "y", "se"])
        k = 1
        for pair, mean in truth.items():
            for _ in range(2):
                y = round(mean + rng.gauss(0.0, SE), 6)
                w.writerow([f"s{k}", pair[0], pair[1], y, SE])
                k += 1
