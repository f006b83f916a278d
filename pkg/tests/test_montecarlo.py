import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from maxineq import montecarlo as MC
from maxineq.analytic import GrowthFunction, growth_for
from maxineq.engine import EulerFallbackWarning, FixedTime, GridPolicy, HittingLevel
from maxineq.moderate import ModerateFunction, parse_descriptor, power
from maxineq.processes import BESQ, OU, ComplexBM, ParameterError, ReflectedBMDrift

COARSE = GridPolicy(n_steps=256, bridge=True)


@pytest.mark.parametrize("spec", [OU(alpha=1.0), BESQ(alpha=1.0), ComplexBM()])
def test_zero_horizon_is_exact(spec):
    est = MC.estimate_sup_expectation(spec, power(2.0), 0.0, n_paths=1000)
    assert est.mean == 0.0 and est.stderr == 0.0


def test_besq_sup_mean_dominates_terminal_mean():
    est = MC.estimate_sup_expectation(BESQ(alpha=1.0), power(1.0), 1.0, n_paths=100_000, grid=COARSE, seed=3)
    assert est.stderr > 0
    assert est.mean >= 1.0 - 4 * est.stderr
    assert est.reference == pytest.approx(1.0)
    assert est.scheme == "exact" and est.refinement_delta is None


def test_besq_root_moment_below_lp_bound():
    est = MC.estimate_sup_expectation(BESQ(alpha=1.0), power(0.5), 1.0, n_paths=100_000, grid=COARSE, seed=4)
    assert est.mean <= 3.0


def test_euler_reports_refinement_delta():
    with pytest.warns(EulerFallbackWarning):
        est = MC.estimate_sup_expectation(
            ReflectedBMDrift(mu=1.0), power(1.0), 1.0, n_paths=2000, grid=GridPolicy(n_steps=64), seed=5
        )
    assert est.scheme == "euler"
    assert est.refinement_delta is not None and est.refinement_delta >= 0
    assert est.refinement_delta < 0.1


def test_hitting_rule_reports_censoring():
    est = MC.estimate_sup_expectation(
        OU(alpha=1.0), power(1.0), HittingLevel(3.0, 0.05), n_paths=1000, grid=GridPolicy(n_steps=64), seed=6
    )
    assert est.censored_fraction > 0.9
    assert est.mean <= 3.0


def test_preconditions():
    with pytest.raises(ParameterError):
        MC.estimate_sup_expectation(OU(alpha=1.0), power(1.0), 1.0, n_paths=999)
    with pytest.raises(ParameterError):
        MC.estimate_sup_expectation(OU(alpha=1.0), power(1.0), -1.0, n_paths=1000)
    with pytest.raises(ParameterError):
        MC.estimate_tail(OU(alpha=1.0), 0.0, 1.0, 0.0, n_paths=10)


def test_non_finite_F_names_the_path():
    base = power(1.0)
    bad = dataclasses.replace(base, fn=lambda x: np.where(x > 0.5, np.inf, x))
    with pytest.raises(MC.EstimationError, match=r"seed=7.*block="):
        MC.estimate_sup_expectation(OU(alpha=1.0), bad, 1.0, n_paths=1000, grid=GridPolicy(n_steps=32), seed=7)


def test_tail_examples():
    near_zero = MC.estimate_tail(OU(alpha=1.0), 0.0, 1.0, 1e-6, n_paths=2000, grid=GridPolicy(n_steps=64))
    assert near_zero.probability == 1.0
    far = MC.estimate_tail(ComplexBM(), 0j, 1.0, 1e3, n_paths=2000, grid=GridPolicy(n_steps=64))
    assert far.count == 0 and far.ci_low == 0.0
    # BESQ(2) from 1: P(Y* >= 4) <= 2 P_0(Y* >= 1/2) within the joint interval
    left = MC.estimate_tail(BESQ(alpha=2.0), 1.0, 1.0, 4.0, n_paths=20_000, grid=COARSE, seed=8, z=4.0)
    right = MC.estimate_tail(BESQ(alpha=2.0), 0.0, 1.0, 0.5, n_paths=20_000, grid=COARSE, seed=9, z=4.0)
    assert left.ci_low <= 2.0 * right.ci_high


@given(count=st.integers(0, 500), extra=st.integers(0, 500))
@settings(max_examples=30)
def test_wilson_brackets_the_proportion(count, extra):
    n = count + extra
    if n == 0:
        return
    w = MC.wilson(count, n)
    assert 0.0 <= w.ci_low <= w.probability <= w.ci_high <= 1.0


def test_single_point_envelope_has_unit_spread():
    mx = np.abs(np.random.default_rng(0).standard_normal((500, 1))) + 0.1
    env = MC.envelope_from_maxima(mx, [1.0], power(1.0), GrowthFunction("sqrt", {}))
    assert env.spread == 1.0


def test_envelope_rejects_zero_time():
    with pytest.raises(ParameterError):
        MC.envelope_from_maxima(np.ones((10, 2)), [0.0, 1.0], power(1.0), GrowthFunction("sqrt", {}))


def test_envelope_invariants_and_monotone_means():
    spec = OU(alpha=1.0)
    env = MC.ratio_envelope(spec, parse_descriptor("pow:2"), np.logspace(-2, 1, 7), n_paths=4000, seed=10)
    assert np.all(env.ratios > 0)
    assert np.all(np.isfinite(env.ci_high - env.ci_low))
    assert np.all(env.ci_low <= env.ratios) and np.all(env.ratios <= env.ci_high)
    slack = 2 * 1.96 * env.stderrs
    assert np.all(np.diff(env.means) >= -(slack[1:] + slack[:-1]))
    assert len(env.rows()) == 7 and env.meta["g"] == growth_for(spec).tag


def test_worker_count_invariance():
    spec = BESQ(alpha=1.0)
    n = 10 * 1024 + 17
    runs = [MC.sample_maxima(spec, [0.5, 1.0], n, 11, GridPolicy(n_steps=32), workers=w) for w in (1, 2, 8)]
    for other in runs[1:]:
        for a, b in zip(runs[0], other):
            assert np.array_equal(a, b)


def test_complex_bm_scaling_law():
    # E (|W|*_T)^2 / T is the same constant for every T on a grid scaled with T
    vals = []
    for i, T in enumerate((0.25, 1.0, 4.0)):
        est = MC.estimate_sup_expectation(
            ComplexBM(), power(2.0), T, n_paths=20_000, grid=GridPolicy(n_steps=256, bridge=True), seed=20 + i
        )
        vals.append((est.mean / T, est.stderr / T))
    for (a, sa), (b, sb) in zip(vals, vals[1:]):
        assert abs(a - b) <= 4 * math.hypot(sa, sb)


def test_besq_terminal_mean_ci_coverage():
    covered = 0
    for rep in range(100):
        x = MC.sample_terminal(BESQ(alpha=1.5), 1.0, 2000, seed=rep)
        m = x.mean()
        se = x.std(ddof=1) / math.sqrt(x.size)
        covered += abs(m - 1.5) <= 1.96 * se
    assert covered >= 90


def test_tail_counts_shape_and_monotone_in_level():
    c = MC.tail_counts(OU(alpha=1.0), [0.5, 1.0], [0.5, 1.0, 2.0], 2000, 12, GridPolicy(n_steps=64))
    assert c.shape == (2, 3)
    assert np.all(np.diff(c, axis=1) <= 0) and np.all(np.diff(c, axis=0) >= 0)


def test_relaxation_time_and_grid():
    assert MC.relaxation_time(OU(alpha=0.05)) == pytest.approx(20.0)
    assert MC.relaxation_time(ComplexBM()) == math.inf
    g = MC.envelope_grid(OU(alpha=0.05))
    assert g.max_step == pytest.approx(5.0) and g.bridge


def test_fixed_time_rule_matches_plain_time():
    a = MC.estimate_sup_expectation(OU(alpha=1.0), power(1.0), FixedTime(1.0), n_paths=1000, grid=GridPolicy(n_steps=32))
    b = MC.estimate_sup_expectation(OU(alpha=1.0), power(1.0), 1.0, n_paths=1000, grid=GridPolicy(n_steps=32))
    assert a.mean == b.mean and a.stderr == b.stderr
