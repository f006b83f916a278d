import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from maxineq import verify as V
from maxineq.analytic import GrowthFunction, g_eval
from maxineq.engine import GridPolicy
from maxineq.processes import BESQ, OU, ParameterError


def test_combine_verdicts():
    assert V.combine_verdicts([]) == V.PASS
    assert V.combine_verdicts([V.PASS, V.INCONCLUSIVE]) == V.INCONCLUSIVE
    assert V.combine_verdicts([V.INCONCLUSIVE, V.FAIL, V.PASS]) == V.FAIL


@pytest.mark.parametrize(
    "desc,deg", [("pow:0.5", 0.5), ("pow:2", 2.0), ("powlog:1,1", 2.0), ("sqrt(pow:2)", 1.0), ("sqrt(powlog:2,1)", 1.5)]
)
def test_growth_degree(desc, deg):
    assert V.growth_degree(desc) == deg


def test_freeze_threshold_caps_by_degree():
    assert V.freeze_threshold(1.2, "pow:2") == pytest.approx(1.8)
    assert V.freeze_threshold(500.0, "pow:2") == 100.0
    assert V.freeze_threshold(12.0, "pow:0.5") == pytest.approx(math.sqrt(10.0))


def test_shipped_thresholds_cover_canonical_suite():
    th = V.load_thresholds()
    labels = [lab for lab, _, _ in V.canonical_envelope_processes()]
    assert sorted(th["envelope"]) == sorted(labels)
    for lab in labels:
        for d in V.ENVELOPE_F:
            limit = th["envelope"][lab][d]
            assert 1.0 <= limit <= 10.0 ** V.growth_degree(d)
            assert limit == pytest.approx(V.freeze_threshold(th["pilot_spreads"][lab][d], d), rel=1e-12)
    assert set(th["conformal"]) == set(V.CONFORMAL_F)


def test_good_lambda_identical_samples_give_zero():
    x = np.random.default_rng(0).exponential(size=5000)
    rep = V.good_lambda_check(x, x, 2.0, [0.5, 0.25])
    assert rep.verdict == V.PASS
    assert all(r["phi_hat"] == 0.0 for r in rep.witness["profile"])


def test_good_lambda_detects_domination_failure():
    # Y independent of X: P(X >= 2 lam, Y < delta lam) / P(X >= lam) is large
    rng = np.random.default_rng(1)
    x, y = rng.exponential(size=20_000), rng.exponential(size=20_000)
    rep = V.good_lambda_check(x, y, 2.0, [0.5, 0.25], analytic_phi=lambda d: 1e-3 * d)
    assert rep.verdict == V.FAIL and rep.witness["failures"]


def test_good_lambda_preconditions():
    with pytest.raises(ParameterError):
        V.good_lambda_check(np.ones(3), np.ones(4), 2.0, [0.5])
    with pytest.raises(ParameterError):
        V.good_lambda_check(np.ones(3), np.ones(3), 1.0, [0.5])


def test_controllability_vacuous_points():
    rep = V.controllability_check(OU(alpha=1.0), 2.0, 1.0, 1.0, [1.0], [1.0, 1e3], n_paths=2000, grid=GridPolicy(n_steps=64))
    assert rep.verdict == V.PASS
    big = [p for p in rep.witness["points"] if p["lambda"] == 1e3][0]
    assert big["vacuous"] and big["left"] == 0.0 and big["right"] == 0.0
    only = V.controllability_check(OU(alpha=1.0), 2.0, 1.0, 1.0, [1.0], [1e3], n_paths=1000, grid=GridPolicy(n_steps=32))
    assert only.verdict == V.INCONCLUSIVE and "limit" in only.witness


def test_controllability_fail_carries_witness():
    beta, gamma, _ = V.besq_controllability_constants(2.0)
    rep = V.controllability_check(BESQ(alpha=2.0), beta, gamma, 0.01, [1.0], [1.0], n_paths=5000, grid=GridPolicy(n_steps=64))
    assert rep.verdict == V.FAIL and "worst" in rep.witness


def test_besq_constants():
    assert V.besq_controllability_constants(0.5) == (4.0, 0.25, 4.0)
    assert V.besq_controllability_constants(2.0) == (4.0, 0.5, 2.0)
    assert V.besq_controllability_constants(1.0) == (4.0, 0.5, 2.0)


def test_lp_bound_arithmetic():
    assert V.lp_bound(2.0, 0.5, 4.0) == pytest.approx(6 * math.sqrt(2.0), rel=1e-15)
    assert V.lp_bound(1.0, 0.5, 1.0) == pytest.approx(3.0)
    with pytest.raises(ParameterError):
        V.lp_bound_check(1.0, 1.0, [1.0])


def test_lp_bound_small_time_holds():
    rep = V.lp_bound_check(1.0, 0.5, [1e-6, 1.0], n_paths=2000, grid=GridPolicy(rel_step=0.05, t_start=1e-7, bridge=True))
    assert rep.verdict == V.PASS
    assert rep.witness["rows"][0]["estimate"] < 1e-2


def test_ks_critical_formula():
    n = 100_000
    assert V.ks_critical(n, n) == pytest.approx(1.6276 * math.sqrt(2.0 / n), rel=1e-4)


def test_distribution_equiv_size_mismatch():
    with pytest.raises(ParameterError):
        V.distribution_equiv((np.zeros(3), np.zeros(4)))


def test_distribution_equiv_rejects_different_laws():
    rng = np.random.default_rng(2)
    rep = V.distribution_equiv((rng.normal(size=5000), rng.normal(0.2, 1.0, size=5000)))
    assert rep.verdict == V.FAIL and "location" in rep.witness


def test_distribution_equiv_self_test_false_rejection_rate():
    from maxineq.processes import CIR

    spec = CIR(a=1.0, b=-1.0, c=1.0, x0=1.0)

    def same_law(n, rng):
        return V._terminal(spec, 1.0, n, rng), V._terminal(spec, 1.0, n, rng)

    # rate <= 2% measured over 1000 seeds; 100 seeds exceed 2 by chance about 8% of the time
    rejections = sum(V.distribution_equiv(same_law, n=2000, seed=s, name="self").verdict == V.FAIL for s in range(1000))
    assert rejections <= 20


@given(t=st.floats(1e-2, 1e4))
def test_wrong_growth_ratio_drifts(t):
    # closed form: sqrt(t) / g_OU(t) increases, and by more than 8x across the canonical window
    g = GrowthFunction("ou", {"alpha": 0.05})
    r = lambda s: math.sqrt(s) / float(g(s))
    assert r(t * 1.5) > r(t)
    assert r(1e4) / r(1e-2) > 8.0


def test_two_sided_passes_and_fails_with_witness():
    t = np.logspace(-2, 2, 5)
    ok = V.two_sided_check(BESQ(alpha=1.0), ["pow:1"], t, n_paths=2000, spread_limit=10.0, hitting_paths=1000)
    assert ok.verdict == V.PASS
    rec = ok.witness["per_F"][0]
    assert rec["extended_spread"] >= rec["spread"] and len(rec["stopping_time_spot_check"]) == 3
    bad = V.two_sided_check(
        OU(alpha=0.05), ["pow:2"], np.logspace(-2, 4, 7), n_paths=2000, spread_limit=10.0,
        growth=GrowthFunction("sqrt", {}), hitting_levels=False,
    )
    assert bad.verdict == V.FAIL and "witness" in bad.witness["per_F"][0]


def test_conformal_g_and_map_validation():
    np.testing.assert_allclose(V.conformal_g([0.0, math.e - 1, math.exp(math.e - 1) - 1]), [0.0, math.sqrt(math.log(2)), 1.0])
    assert V.conformal_g(10.0) == pytest.approx(float(g_eval("complex_bm_normalized", {}, 10.0)))
    with pytest.raises(ParameterError):
        V.conformal_samples("cube", 1.0, [1.0], 10, 0)


def test_conformal_scenario_small_run():
    rep = V.conformal_scenario("square", T=1.0, F_list=["pow:1"], n_paths=500, n_steps=2**10, spread_limit=math.inf)
    rec = rep.witness["per_F"][0]
    assert math.isfinite(rec["mtgl1"]["spread"]) and math.isfinite(rec["mtgl2"]["spread"])
    assert max(rep.witness["qv_refinement_delta"]) < 0.05
    assert rep.verdict == V.PASS
