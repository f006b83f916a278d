"""Ratio envelope of E F(X*_t) / F(g(t)) for a slow Ornstein-Uhlenbeck process.

The ratio stays inside a bounded band over six decades of time, while
sqrt(t), the Brownian growth rate, drifts away once t passes the
relaxation time 1/alpha.

Run: python3 gallery/ou_envelope.py [n_paths]
"""

import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from maxineq.analytic import GrowthFunction
from maxineq.moderate import parse_descriptor
from maxineq.montecarlo import ratio_envelope
from maxineq.processes import OU

n_paths = int(sys.argv[1]) if len(sys.argv) > 1 else 4096
spec = OU(alpha=0.05)
times = np.logspace(-2, 4, 13)
F = parse_descriptor("pow:2")

right = ratio_envelope(spec, F, times, n_paths=n_paths, seed=11)
wrong = ratio_envelope(spec, F, times, n_paths=n_paths, seed=11, growth=GrowthFunction("sqrt", {}))

print(f"{'t':>10} {'ratio (log g)':>14} {'ratio (sqrt t)':>15}")
for t, a, b in zip(times, right.ratios, wrong.ratios):
    print(f"{t:10.3g} {a:14.4f} {b:15.4f}")
print(f"spread with the matched g: {right.spread:.3f}")
print(f"spread with sqrt(t):       {wrong.spread:.3f}")

fig, ax = plt.subplots(figsize=(6, 4))
for env, name in ((right, "g(t) = log^{1/2}(1 + alpha t)"), (wrong, "g(t) = sqrt(t)")):
    ax.errorbar(times, env.ratios, yerr=[env.ratios - env.ci_low, env.ci_high - env.ratios], marker="o", label=name)
ax.set_xscale("log")
ax.set_yscale("log")
ax.set_xlabel("t")
ax.set_ylabel("E (X*_t)^2 / g(t)^2")
ax.legend()
fig.tight_layout()
fig.savefig("ou_envelope.svg")
print("wrote ou_envelope.svg")
