"""Regenerate the frozen envelope spread thresholds.

Runs the envelope suite and the conformal M = W^2 scenario with the pilot
seed (distinct from the acceptance seed) and no spread limit, then freezes
``min(1.5 * pilot spread, 10^deg F)`` per (process, F) into
``src/maxineq/data/spread_thresholds.json``.

Usage: python scripts/pilot_thresholds.py [--n-paths N] [--workers W]
"""

from __future__ import annotations

import argparse
import json
import math
import time
from pathlib import Path

import numpy as np

from maxineq import verify as V

OUT = Path(__file__).resolve().parents[1] / "src" / "maxineq" / "data" / "spread_thresholds.json"


def pilot_spread(per_F: dict) -> float:
    return max(per_F["spread"], per_F.get("extended_spread", per_F["spread"]))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-paths", type=int, default=100_000)
    ap.add_argument("--conformal-paths", type=int, default=10_000)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args(argv)

    envelope, spreads = {}, {}
    t0 = time.time()
    reports = V.envelope_suite(args.n_paths, V.PILOT_SEED, thresholds=False, workers=args.workers)
    for label, rep in reports.items():
        envelope[label], spreads[label] = {}, {}
        for rec in rep.witness["per_F"]:
            s = pilot_spread(rec)
            spreads[label][rec["F"]] = s
            envelope[label][rec["F"]] = V.freeze_threshold(s, rec["F"])
        print(f"{label:24s} {time.time() - t0:7.1f}s  " + "  ".join(f"{k}={v:.4g}" for k, v in spreads[label].items()))

    conf = V.conformal_scenario("square", n_paths=args.conformal_paths, seed=V.PILOT_SEED, spread_limit=math.inf,
                                workers=args.workers)
    conformal, conformal_spreads = {}, {}
    for rec in conf.witness["per_F"]:
        conformal[rec["F"]] = {f: V.freeze_threshold(rec[f]["spread"], rec["F"]) for f in ("mtgl1", "mtgl2")}
        conformal_spreads[rec["F"]] = {f: rec[f]["spread"] for f in ("mtgl1", "mtgl2")}
    print(f"{'conformal square':24s} {time.time() - t0:7.1f}s  {conformal_spreads}")

    doc = {
        "meta": {
            "procedure": "pilot spread = max(envelope spread, spread extended by the hitting-time spot check); "
            "threshold = min(factor * pilot spread, 10^deg F) with deg(pow:p) = p, deg(powlog:p,q) = p + q",
            "factor": V.THRESHOLD_FACTOR,
            "pilot_seed": V.PILOT_SEED,
            "acceptance_seed": V.ACCEPTANCE_SEED,
            "n_paths": args.n_paths,
            "conformal_paths": args.conformal_paths,
            "t_grid": [float(t) for t in V.ENVELOPE_TIMES],
            "numpy": np.__version__,
        },
        "envelope": envelope,
        "pilot_spreads": spreads,
        "conformal": conformal,
        "conformal_pilot_spreads": conformal_spreads,
    }
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main()
