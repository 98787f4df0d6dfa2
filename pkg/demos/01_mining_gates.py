"""Sweep three simulated dishes and count the Boolean gates hiding in them.

A purely resistive agar dish is monotone, so it can only ever produce
monotone gates (AND, OR, constants, wires). Add threshold elements and
non-monotone gates appear; add drift and they cluster early in the sweep.

    python demos/01_mining_gates.py
"""

import numpy as np

from materio import (Drift, crafted_substrate, difficulty_hierarchy, enumerate_configs,
                     gate_census, group_records, make_substrate, run_sweep, temporal_histogram)
from materio.gates import SEARCH_GATES, XOR, reference_census

FREQS = [250.0, 500.0, 1000.0, 2500.0]
PINS = 6

configs = enumerate_configs(PINS, FREQS, seed=1)
span = configs[-1].scheduled_time_s + 0.15
print(f"{len(configs)} stimulus configurations, sweep span {span:.0f} s\n")

dishes = {
    "agar only": make_substrate("AgarOnly", PINS, seed=1),
    "physarum on agar": make_substrate("PhysarumAgar", PINS, seed=7),
    "crafted xor": crafted_substrate("xor", PINS, half_life_s=span / 4),
}
for name, dish in dishes.items():
    groups = group_records(run_sweep(dish, configs, seed=1))
    census = gate_census(groups)
    counts = ", ".join(f"{g.short_name} {census[g]}" for g in SEARCH_GATES)
    print(f"{name:18s} {census.total:6d} groups: {counts}")
    print(f"{'':18s} hierarchy {difficulty_hierarchy(census)}")

# With drift the dish loses its nonlinearity as it dries: gates are found early.
drifting = make_substrate("PhysarumAgar", PINS, seed=7).replace(drift=Drift(span / 4, 0.1))
groups = group_records(run_sweep(drifting, configs, seed=1))
found = np.isin(groups.gate_ids, [g.id for g in SEARCH_GATES])
print(f"\ndrifting dish: median first sighting {np.median(groups.first_seen_s[found]):.0f} s "
      f"of a {span:.0f} s sweep")
for start, count in temporal_histogram(groups, XOR, span / 8):
    print(f"  XOR from {start:6.0f} s  {'#' * (count // 4)} {count}")

# The reference counts measured on a real dish give the same kind of ordering.
print("\nreference Physarum counts:", difficulty_hierarchy(reference_census("Physarum")))
