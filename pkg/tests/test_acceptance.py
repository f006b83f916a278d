"""Acceptance suite: one group of tests per criterion, summarized at the end of the run.

Time budgets are stated for 8 cores. Monte Carlo criteria run with one
worker per available core and scale their budget by 8 / min(8, cores);
analytic criteria are single-threaded and keep the raw budget.
"""

import math
import os
import time

import numpy as np
import pytest
from scipy import stats

from maxineq import analytic as A
from maxineq import cli
from maxineq import verify as V
from maxineq.config import ConfigError, parse_config
from maxineq.engine import GridPolicy
from maxineq.montecarlo import sample_maxima, sample_terminal
from maxineq.processes import BESQ, CIR, OU, BMDrift, ComplexOU, ReflectedBMDrift

pytestmark = [pytest.mark.acceptance, pytest.mark.slow]

CORES = os.cpu_count() or 1
WORKERS = min(8, CORES)
SEED = V.ACCEPTANCE_SEED


def budget(seconds: float, parallel: bool = True) -> float:
    return seconds * 8 / WORKERS if parallel else seconds


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start


# ---------------------------------------------------------------------------
# 1. analytic suite

SYMMETRIC_GRID = np.linspace(-2.0, 2.0, 16)
POSITIVE_GRID = np.linspace(0.25, 4.0, 16)
RESIDUAL_CASES = (
    [("ou", {"alpha": a}, SYMMETRIC_GRID) for a in (0.5, 1.0, 2.0)]
    + [("bm_drift", {"mu": m}, SYMMETRIC_GRID) for m in (0.5, 1.0, 2.0)]
    + [("besq", {"alpha": a}, POSITIVE_GRID) for a in (0.5, 1.0, 3.0)]
    + [("cir", {"a": a, "b": b, "c": c}, POSITIVE_GRID) for a, b, c in ((1, -1, 1), (1, -1, 2), (2, -0.5, 1))]
)
GROWTH_CASES = [
    ("ou", {"alpha": 1.0}),
    ("bm_drift", {"mu": 1.0}),
    ("reflected_bm_drift", {"mu": 0.5}),
    ("bm_drift_log", {"mu": 2.0}),
    ("cir", {"a": 1.0, "b": -1.0, "c": 2.0}),
    ("besq", {}),
    ("bessel", {}),
    ("radial_ou", {"alpha": 2.0, "beta": 0.5}),
    ("complex_ou", {"a": 1.0}),
    ("complex_bm", {}),
    ("complex_bm_normalized", {}),
]


def test_analytic_suite(criterion_log):
    with Timer() as clock:
        residual = max(A.check_generator_residual(tag, p, grid) for tag, p, grid in RESIDUAL_CASES)
        round_trip = 0.0
        for tag, p in GROWTH_CASES:
            ys = np.logspace(-6, 3, 64)
            t = A.g_inverse(tag, p, ys)
            ok = np.isfinite(t)
            round_trip = max(round_trip, float(np.max(np.abs(A.g_eval(tag, p, t[ok]) / ys[ok] - 1.0))))
        sandwich = min(
            [A.sandwich_check("bm_drift", {"mu": m}).worst_slack for m in (0.5, 1.0, 2.0)]
            + [A.sandwich_check("cir", {"a": a, "b": b, "c": c}).worst_slack for a, b, c in ((1, -1, 1), (1, -1, 2), (2, -0.5, 1))]
        )
        inverse_growth = min(A.ou_inverse_growth_check(al, a) for al in (0.5, 1.0, 2.0) for a in (2.0, 3.0))
    parts = {
        "generator residual": (residual <= 1e-6, f"max |Lf-1| = {residual:.3g}"),
        "round trip": (round_trip <= 1e-10, f"max relative error {round_trip:.3g}"),
        "sandwich": (sandwich >= -1e-10, f"min slack {sandwich:.3g}"),
        "inverse growth": (inverse_growth >= 0, f"min log margin {inverse_growth:.3g}"),
        "time": (clock.elapsed < budget(30, parallel=False), f"{clock.elapsed:.1f} s"),
    }
    for name, (ok, detail) in parts.items():
        criterion_log(1, name, ok, detail)
    assert all(ok for ok, _ in parts.values()), parts


# ---------------------------------------------------------------------------
# 2. phi(delta) suite

PHI_CASES = [
    ("ou", {"alpha": 0.5}, lambda d: 0.5 * d * d),
    ("ou", {"alpha": 1.0}, lambda d: d * d),
    ("ou", {"alpha": 2.0}, lambda d: 2.0 * d * d),
    ("bm_drift", {"mu": 0.5}, lambda d: d),
    ("bm_drift", {"mu": 1.0}, lambda d: d),
    ("bm_drift", {"mu": 2.0}, lambda d: d),
    ("besq", {"alpha": 1.0}, None),
    ("besq", {"alpha": 3.0}, None),
    ("cir", {"a": 1.0, "b": -1.0, "c": 1.0}, None),
    ("cir", {"a": 2.0, "b": -0.5, "c": 1.0}, None),
]


def test_phi_suite(criterion_log):
    deltas = [2.0**-k for k in range(1, 6)]
    failures = []
    with Timer() as clock:
        for tag, p, bound in PHI_CASES:
            vals = [A.compute_phi(tag, p, 2.0, d) for d in deltas]
            if not all(b < a for a, b in zip(vals, vals[1:])):
                failures.append(f"{tag}{p} not decreasing {vals}")
            if bound is not None:
                over = [(d, v) for d, v in zip(deltas, vals) if v > bound(d) * (1 + 1e-9)]
                if over:
                    failures.append(f"{tag}{p} above analytic bound at {over}")
    criterion_log(2, "monotone and bounded", not failures, "; ".join(failures))
    criterion_log(2, "time", clock.elapsed < budget(30, parallel=False), f"{clock.elapsed:.1f} s")
    assert not failures and clock.elapsed < budget(30, parallel=False)


# ---------------------------------------------------------------------------
# 3. sampler suite


def _within(draws, truth, k=4.0):
    se = draws.std(ddof=1) / math.sqrt(draws.size)
    return abs(draws.mean() - truth) <= k * se, f"mean {draws.mean():.6g} vs {truth:.6g} (SE {se:.2g})"


def test_sampler_suite(criterion_log):
    n, t = 1_000_000, 1.0
    results = {}
    with Timer() as clock:
        ou = OU(alpha=1.0, x0=1.0)
        results["OU mean"] = _within(sample_terminal(ou, t, n, SEED, ("acc", "ou"), WORKERS), math.exp(-t))
        besq = BESQ(alpha=1.5, x0=0.5)
        results["BESQ mean"] = _within(sample_terminal(besq, t, n, SEED, ("acc", "besq"), WORKERS), 0.5 + 1.5 * t)
        cir = CIR(a=1.0, b=-1.0, c=1.0, x0=2.0)
        m_cir = 1.0 + (2.0 - 1.0) * math.exp(-t)  # m' = a + b m
        results["CIR mean"] = _within(sample_terminal(cir, t, n, SEED, ("acc", "cir"), WORKERS), m_cir)
        cou = ComplexOU(a=1.0, b=1.0, x0=1.0 + 0.5j)
        z = sample_terminal(cou, t, n, SEED, ("acc", "complex_ou"), WORKERS)
        mean = (1.0 + 0.5j) * np.exp(-(1.0 + 1.0j) * t)
        results["ComplexOU mean (real)"] = _within(z.real, mean.real)
        results["ComplexOU mean (imag)"] = _within(z.imag, mean.imag)
        # |Z|^2 solves the CIR(2, -2a, 2) mean equation m' = 2 - 2a m
        results["ComplexOU |Z|^2 mean"] = _within(np.abs(z) ** 2, 1.0 + (1.25 - 1.0) * math.exp(-2.0 * t))
        m = 100_000
        crit = V.ks_critical(m, m)
        # default grid (4096 steps per unit time) and start 0; BESQ dimension 2 because for
        # dimension < 2 the full-truncation scheme puts an O(sqrt(dt)) atom at 0
        grid = GridPolicy()
        for name, spec in (("OU", OU(alpha=1.0)), ("BESQ", BESQ(alpha=2.0))):
            ex = sample_maxima(spec, [t], m, SEED, grid, "exact", namespace=("acc", "ks", "exact"), workers=WORKERS)
            eu = sample_maxima(spec, [t], m, SEED, grid, "euler", namespace=("acc", "ks", "euler"), workers=WORKERS)
            for what, a, b in (("terminal", ex[1][:, 0], eu[1][:, 0]), ("maximum", ex[0][:, 0], eu[0][:, 0])):
                ks = stats.ks_2samp(a, b).statistic
                results[f"{name} exact vs Euler KS ({what})"] = (ks < crit, f"KS {ks:.4g} vs {crit:.4g}")
    results["time"] = (clock.elapsed < budget(180), f"{clock.elapsed:.1f} s")
    for name, (ok, detail) in results.items():
        criterion_log(3, name, ok, detail)
    assert all(ok for ok, _ in results.values()), results


# ---------------------------------------------------------------------------
# 4. identity suite


def test_identity_suite(criterion_log):
    pairs = ["complex_ou_vs_cir", "cir_vs_time_changed_besq", "besq_additivity", "time_changed_cbm_vs_complex_ou"]
    ok_all = True
    with Timer() as clock:
        for name, src in cli.identity_sources(pairs):
            rep = V.distribution_equiv(src, 100_000, 0.01, SEED, name)
            w = rep.witness
            criterion_log(4, name, rep.passed, f"KS {w['ks']:.4g} vs {w['critical']:.4g}")
            ok_all &= rep.passed
    criterion_log(4, "time", clock.elapsed < budget(180), f"{clock.elapsed:.1f} s")
    assert ok_all and clock.elapsed < budget(180)


# ---------------------------------------------------------------------------
# 5. L^p bound


def test_lp_bound_suite(criterion_log):
    ok_all = True
    with Timer() as clock:
        for alpha in (1.0, 2.0):
            for p in (0.25, 0.5):
                rep = V.lp_bound_check(alpha, p, [0.5, 1.0, 4.0], 100_000, SEED, workers=WORKERS)
                worst = max(r["estimate"] - 4 * r["stderr"] - r["bound"] for r in rep.witness["rows"])
                criterion_log(5, f"alpha={alpha:g}, p={p:g}", rep.passed, f"max(estimate - 4SE - bound) = {worst:.3g}")
                ok_all &= rep.passed
    criterion_log(5, "time", clock.elapsed < budget(60), f"{clock.elapsed:.1f} s")
    assert ok_all and clock.elapsed < budget(60)


# ---------------------------------------------------------------------------
# 6. controllability


def test_controllability_suite(criterion_log):
    t_grid = np.logspace(-1, 1, 4)
    lam = np.logspace(-0.5, 1, 4)
    cases = [("OU(1)", OU(alpha=1.0), (2.0, 1.0, 1.0))]
    for a in (0.5, 2.0):
        cases.append((f"BESQ({a:g})", BESQ(alpha=a), V.besq_controllability_constants(a)))
    cases.append(("ReflectedBMDrift(1)", ReflectedBMDrift(mu=1.0), (2.0, 1.0, 2.0)))
    ok_all = True
    with Timer() as clock:
        for name, spec, (beta, gamma, C) in cases:
            rep = V.controllability_check(spec, beta, gamma, C, t_grid, lam, 20_000, SEED, workers=WORKERS)
            detail = f"{rep.verdict}, {rep.witness['n_vacuous']} vacuous of {len(rep.witness['points'])}"
            criterion_log(6, name, rep.passed, detail)
            ok_all &= rep.passed
        beta, gamma, _ = V.besq_controllability_constants(2.0)
        wrong = V.controllability_check(BESQ(alpha=2.0), beta, gamma, 0.01, t_grid, lam, 20_000, SEED, workers=WORKERS)
        criterion_log(6, "BESQ(2) with C = 0.01 rejected", wrong.verdict == V.FAIL, wrong.verdict)
        ok_all &= wrong.verdict == V.FAIL
    criterion_log(6, "time", clock.elapsed < budget(300), f"{clock.elapsed:.1f} s")
    assert ok_all and clock.elapsed < budget(300)


# ---------------------------------------------------------------------------
# 7. two-sided envelopes

ENVELOPE_LABELS = [label for label, _, _ in V.canonical_envelope_processes()]
_ENVELOPE_CLOCK = {"elapsed": 0.0}


def _envelope_param(label):
    if label == "bm_drift":
        reason = (
            "sup|B - mu t| grows linearly while log(mu sqrt(t) + 1) grows logarithmically, "
            "so no finite spread limit can hold over six decades"
        )
        return pytest.param(label, marks=pytest.mark.xfail(strict=True, reason=reason))
    return label


@pytest.mark.parametrize("label", [_envelope_param(lab) for lab in ENVELOPE_LABELS])
def test_envelope_suite(label, criterion_log):
    with Timer() as clock:
        rep = V.envelope_suite(100_000, SEED, labels=[label], workers=WORKERS)[label]
    _ENVELOPE_CLOCK["elapsed"] += clock.elapsed
    per_F = rep.witness["per_F"]
    bad = [f"{r['F']} spread {r.get('extended_spread', r['spread']):.3g} > {r['spread_limit']:.3g}" for r in per_F if r["verdict"] != V.PASS]
    min_ratio = min(r["min_ratio"] for r in per_F)
    detail = "; ".join(bad) if bad else f"max spread {max(r.get('extended_spread', r['spread']) for r in per_F):.3g}, min ratio {min_ratio:.3g}"
    criterion_log(7, label, rep.passed, detail)
    assert rep.passed, detail


def test_envelope_wrong_growth_is_rejected(criterion_log):
    with Timer() as clock:
        rep = V.wrong_g_check(100_000, SEED, workers=WORKERS)
    _ENVELOPE_CLOCK["elapsed"] += clock.elapsed
    spreads = ", ".join(f"{r['F']} {r['spread']:.3g}/{r['spread_limit']:.3g}" for r in rep.witness["per_F"])
    criterion_log(7, "OU against sqrt(t) rejected", rep.verdict == V.FAIL, spreads)
    total = _ENVELOPE_CLOCK["elapsed"]
    criterion_log(7, "time", total < budget(900), f"{total:.1f} s")
    assert rep.verdict == V.FAIL


# ---------------------------------------------------------------------------
# 8. good lambda


def test_good_lambda_suite(criterion_log):
    deltas = [2.0**-k for k in range(1, 5)]
    ok_all = True
    with Timer() as clock:
        for name, spec in (("OU(1)", OU(alpha=1.0)), ("BMDrift(1)", BMDrift(mu=1.0))):
            rep = V.good_lambda_process_check(
                spec, [0.5, 1.0, 2.0], 200.0, 20_000, deltas, 2.0, cli.analytic_phi_for(spec), SEED, workers=WORKERS
            )
            prof = ", ".join(f"{r['phi_hat']:.3g}" for r in rep.witness["profile"])
            criterion_log(8, name, rep.passed, f"{rep.verdict}; phi_hat = [{prof}]")
            ok_all &= rep.passed
    criterion_log(8, "time", clock.elapsed < budget(300), f"{clock.elapsed:.1f} s")
    assert ok_all and clock.elapsed < budget(300)


# ---------------------------------------------------------------------------
# 9. conformal scenario


def test_conformal_suite(criterion_log):
    with Timer() as clock:
        ident = V.conformal_scenario(
            "identity", T=10.0, n_paths=10_000, seed=SEED, spread_limit=math.inf, compare_complex_bm=True, workers=WORKERS
        )
        square = V.conformal_scenario(
            "square", T=10.0, n_paths=10_000, seed=SEED, spread_limit=V.load_thresholds()["conformal"], workers=WORKERS
        )
    worst = max(abs(c["log_ratio_difference"]) / c["tolerance"] for r in ident.witness["per_F"] for c in r["complex_bm_comparison"])
    criterion_log(9, "identity map matches complex BM", ident.passed, f"worst |difference| / tolerance {worst:.3g}")
    spreads = [r[f]["spread"] for r in square.witness["per_F"] for f in ("mtgl1", "mtgl2")]
    refinement = max(square.witness["qv_refinement_delta"])
    criterion_log(9, "square map finite spreads", square.passed and all(map(math.isfinite, spreads)),
                  f"max spread {max(spreads):.3g}")
    criterion_log(9, "quadratic-variation refinement", refinement <= 0.05, f"{refinement:.3%}")
    criterion_log(9, "time", clock.elapsed < budget(300), f"{clock.elapsed:.1f} s")
    assert ident.passed and square.passed and refinement <= 0.05 and clock.elapsed < budget(300)


# ---------------------------------------------------------------------------
# 10. infrastructure

INFRA_CONFIG = """\
seed = 11
n_paths = 9000
checks = ["envelope", "lp_bound", "identities"]
F = ["pow:1", "pow:2"]
plots = false

[time_grid]
start_decade = -2
decades = 3
points_per_decade = 1

[[process]]
kind = "cir"
a = 1.0
b = -0.5
c = 1.0

[[process]]
kind = "complex_ou"
a = 0.5
b = 1.0

[lp_bound]
alpha = [1.0]
p = [0.5]
t = [1.0]

[identities]
pairs = ["besq_additivity"]
"""


def test_infrastructure(tmp_path, criterion_log):
    cfg = tmp_path / "infra.toml"
    cfg.write_text(INFRA_CONFIG, encoding="utf-8")
    outputs = {}
    for w in (1, 2, 8):
        out = tmp_path / f"w{w}"
        status = cli.main(["run", str(cfg), "--out", str(out), "--workers", str(w)])
        outputs[w] = {p.name: p.read_bytes() for p in sorted(out.iterdir()) if p.suffix in (".csv", ".json") and p.name != "manifest.json"}
        outputs[w]["status"] = status
    identical = outputs[1] == outputs[2] == outputs[8] and len(outputs[1]) == 7
    criterion_log(10, "bit-identical across 1, 2, 8 workers", identical, f"{len(outputs[1]) - 1} files compared")

    replay_status = cli.main(["replay", str(tmp_path / "w2" / "manifest.json")])
    replayed = all(
        (tmp_path / "w2" / name).read_bytes() == (tmp_path / "w2" / "replay" / name).read_bytes()
        for name in outputs[2] if name.endswith(".csv")
    )
    criterion_log(10, "manifest replay byte-identical", replay_status != cli.EXIT_REPLAY_MISMATCH and replayed,
                  f"replay exit {replay_status}")

    try:
        parse_config('seed = 1\n[[process]]\nkind = "cir"\na = 1.0\nb = 0.0\nc = 1.0\n')
        rejected, msg = False, "accepted"
    except ConfigError as exc:
        rejected, msg = "b < 0" in str(exc), str(exc)
    criterion_log(10, "CIR with b >= 0 rejected at parse", rejected, "" if rejected else msg)
    assert identical and replayed and replay_status != cli.EXIT_REPLAY_MISMATCH and rejected
