import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hconsist import losses as L, risk as R, simulator as S, transforms as TR, verifier as V

CP = R.ConditionalPoint


def test_hinge_slack_grows_linearly_off_the_boundary():
    # surrogate regret at wrong-side h is t (1 - h) while T(target regret) = t, so slack = -t h
    t = 0.4
    cls = R.HypothesisClassSpec.linear(W=1.0, B=1.0)
    dist = R.DiscreteDistribution(np.array([1.0]), (CP.binary((1 + t) / 2, 0.0, 0.0),))
    for h in (-0.3, -1.0, -1e-6):
        rep = V.verify_bound(R.Loss.margin(L.hinge()), R.Loss.zero_one(), TR.binary_linear_transform("hinge", 1.0),
                             cls, dist, [[h]], gap_mode="none")
        assert rep.slack == pytest.approx(-t * h, abs=1e-12)


def test_hinge_tightness_at_boundary():
    t = 0.6
    cls = R.HypothesisClassSpec.linear(W=1.0, B=1.0)
    dist = R.DiscreteDistribution(np.array([1.0]), (CP.binary((1 + t) / 2, 0.0, 0.0),))
    rep = V.verify_bound(R.Loss.margin(L.hinge()), R.Loss.zero_one(), TR.binary_linear_transform("hinge", 1.0),
                         cls, dist, [[-1e-12]], gap_mode="none")
    assert abs(rep.slack) <= 1e-9


def test_optimal_hypothesis_gives_zero_lhs():
    cls = R.HypothesisClassSpec.all_measurable()
    pts = (CP.binary(0.8), CP.binary(0.3))
    dist = R.DiscreteDistribution(np.array([0.5, 0.5]), pts)
    scores = [[math.log(0.8 / 0.2)], [math.log(0.3 / 0.7)]]
    rep = V.verify_bound(R.Loss.margin(L.logistic2()), R.Loss.zero_one(), TR.binary_complete_transform("logistic"),
                         cls, dist, scores)
    assert rep.target_excess + rep.target_gap == pytest.approx(0.0, abs=1e-15)
    assert rep.lhs == 0.0 and rep.slack == pytest.approx(0.0, abs=1e-12) and rep.slack >= V.SLACK_FLOOR


def test_report_row_columns():
    cls = R.HypothesisClassSpec.complete(3)
    dist = R.DiscreteDistribution(np.array([1.0]), (CP(np.array([0.6, 0.3, 0.1])),))
    rep = V.verify_bound(R.Loss.comp_sum(1.0), R.Loss.zero_one(), TR.comp_sum_transform(1.0, 3), cls, dist, [[0.0, 1.0, 0.0]])
    row = rep.row()
    assert len(row) == len(V.REPORT_COLUMNS)
    assert rep.slack == pytest.approx(rep.rhs - rep.lhs)
    assert rep.slack >= V.SLACK_FLOOR


def test_unknown_gap_mode():
    cls = R.HypothesisClassSpec.complete(2)
    dist = R.DiscreteDistribution(np.array([1.0]), (CP.binary(0.5),))
    with pytest.raises(ValueError):
        V.verify_bound(R.Loss.comp_sum(1.0), R.Loss.zero_one(), TR.comp_sum_transform(1.0, 2), cls, dist, [[0.0, 0.0]],
                       gap_mode="weird")


def test_mixture_example_on_discretized_support():
    # h(x) = -5x, quadratic surrogate, beta = 1/2 Massart transform (the identity)
    spec = S.SimulationSpec("nonadversarial", 0.01)
    dist = S.discretize(spec, 10_000)
    scores = [[-5.0 * pt.x] for pt in dist.points]
    T = TR.massart_modified(TR.binary_complete_transform("quadratic"), 0.5)
    rep = V.verify_bound(R.Loss.margin(L.quadratic()), R.Loss.zero_one(), T, R.HypothesisClassSpec.all_measurable(),
                         dist, scores)
    pop = S.population_risks(spec)
    assert rep.lhs == pytest.approx(pop["target"], abs=1e-12)
    assert rep.slack == pytest.approx(pop["quadratic"] - pop["target"], abs=1e-5)
    assert rep.slack >= 0
    # the slack decays linearly in sigma; it reaches 0.01 only for sigma below ~6e-4
    small = S.population_risks(S.SimulationSpec("nonadversarial", 5e-4))
    assert small["quadratic"] - small["target"] <= 0.01


def test_tightness_comp_sum_examples():
    tgt, sur, T = V.tightness_comp_sum(1.0, 3, 1.0)
    assert tgt == pytest.approx(1.0) and sur == pytest.approx(math.log(2), abs=1e-9)
    tgt, sur, T = V.tightness_comp_sum(0.0, 3, 0.6)
    assert tgt == pytest.approx(0.6) and sur == pytest.approx(0.2, abs=1e-9)
    tgt, sur, T = V.tightness_comp_sum(0.5, 4, 0.0)
    assert tgt == pytest.approx(0.0, abs=1e-15) and sur == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        V.tightness_comp_sum(1.5, 3, 0.5)


@pytest.mark.parametrize("tau", [0.0, 0.5, 1.0])
def test_tightness_comp_sum_grid(tau):
    for beta in np.linspace(0, 1, 21):
        tgt, sur, T = V.tightness_comp_sum(tau, 4, float(beta))
        assert tgt == pytest.approx(beta, abs=1e-15)
        assert abs(sur - T) <= 1e-6


@pytest.mark.parametrize("lid", ["hinge", "sigmoid", "rho_margin"])
def test_tightness_binary_linear_curves(lid):
    for t in (0.2, 0.5, 0.9):
        best, T, slack, res = V.tightness_binary(lid, t, B=0.8)
        assert -1e-12 <= slack <= 2 * res


def test_witness_adversarial():
    for phi in (L.hinge(), L.sigmoid(1.0), L.exponential()):
        w = V.negative_witness_adversarial(phi=phi)
        assert w.pair() == pytest.approx((0.5, 0.0), abs=1e-12)
        assert w.detail["separating_target_excess"] == pytest.approx(0.0)
    with pytest.raises(ValueError):
        V.negative_witness_adversarial(R.HypothesisClassSpec.linear(W=1.0, B=0.1, gamma=0.5))


def test_witness_max_loss():
    for phi in (L.hinge(), L.exponential()):
        w = V.negative_witness_max_loss(3, phi)
        assert w.pair() == pytest.approx((0.5, 0.0), abs=1e-12)
        assert w.detail["tie_broken_target_excess"] == pytest.approx(0.0)
    with pytest.raises(ValueError):
        V.negative_witness_max_loss(2)


def test_registry_ids_are_descriptive():
    reg = V.registry()
    assert len(reg) == 28
    for qid, spec in reg.items():
        assert qid == spec.quad_id and qid.count("/") >= 2


def test_fuzz_small_suite_nonnegative():
    res = V.fuzz_suite(cases=20, seed=3)
    assert set(res) == set(V.registry())
    assert min(res.values()) >= V.SLACK_FLOOR


def test_fuzz_threads_do_not_change_results():
    assert V.fuzz_suite(cases=5, seed=1, threads=1) == V.fuzz_suite(cases=5, seed=1, threads=4)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from(sorted(V.registry())))
def test_registered_bounds_hold(seed, qid):
    spec = V.registry()[qid]
    worst, rep = V.fuzz_quadruple(spec, cases=3, seed=seed)
    assert worst >= V.SLACK_FLOOR, rep
