"""Stochastic convolution of the fractional noise and its moment bounds.

Run with: python demos/noise_bounds.py
"""
import numpy as np

from fbmfluid.cli import check_bounds_report
from fbmfluid.manifest import RunManifest

m = RunManifest.from_dict({
    "hurst": 0.75,
    "truncation": 8,
    "seeds": {"master": 11, "replicas": 300},
    "command": {"name": "check-bounds", "params": {}},
})
report = check_bounds_report(m)

print("lattice sum:", report["lattice"])
for row in report["bounds"]:
    keys = [k for k in row if k != "name"]
    print(row["name"], {k: (round(v, 5) if isinstance(v, float) else v) for k, v in
                        ((k, row[k]) for k in keys)})
print("all bounds hold:", report["pass"])
