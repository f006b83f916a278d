"""Two-sided envelope check for BESQ(1) and the same check with a wrong g.

The matched growth function passes with a small spread; replacing it by
sqrt(t) for a mean-reverting process fails and the report carries the
time of the largest deviation.

Run: python3 gallery/two_sided_check.py
"""

import numpy as np

from maxineq.analytic import GrowthFunction
from maxineq.processes import OU, BESQ
from maxineq.verify import two_sided_check

ok = two_sided_check(BESQ(alpha=1.0), ["pow:1"], np.logspace(-2, 2, 5), n_paths=4096, spread_limit=10.0)
print("BESQ(1), matched g:", ok.verdict, "spread", round(ok.witness["per_F"][0]["extended_spread"], 3))

bad = two_sided_check(
    OU(alpha=0.05), ["pow:2"], np.logspace(-2, 4, 7), n_paths=4096, spread_limit=10.0,
    growth=GrowthFunction("sqrt", {}), hitting_levels=False,
)
rec = bad.witness["per_F"][0]
print("OU(0.05), g = sqrt(t):", bad.verdict, "spread", round(rec["spread"], 1))
print("witness:", rec["witness"])
