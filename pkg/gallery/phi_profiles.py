"""Good-lambda profiles phi(delta) computed from scale and growth functions.

For each process the profile should shrink as delta decreases; the table
shows how fast.

Run: python3 gallery/phi_profiles.py
"""

from maxineq.analytic import compute_phi

cases = {
    "OU(1)": ("ou", {"alpha": 1.0}),
    "BMDrift(1)": ("bm_drift", {"mu": 1.0}),
    "BESQ(1)": ("besq", {"alpha": 1.0}),
    "CIR(1, -1, 1)": ("cir", {"a": 1.0, "b": -1.0, "c": 1.0}),
}
deltas = [2.0**-k for k in range(1, 6)]

print(f"{'process':>14} " + " ".join(f"{d:>10.4g}" for d in deltas))
for name, (tag, params) in cases.items():
    row = [compute_phi(tag, params, beta=2.0, delta=d) for d in deltas]
    print(f"{name:>14} " + " ".join(f"{v:10.3e}" for v in row))
