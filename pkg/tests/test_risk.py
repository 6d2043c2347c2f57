import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hconsist import losses as L, risk as R, simulator as S

CP = R.ConditionalPoint


def test_conditional_risk_examples():
    assert R.conditional_risk(R.Loss.zero_one(), [1.0, 0.0], CP(np.array([0.3, 0.7]))) == pytest.approx(0.7)
    assert R.conditional_risk(R.Loss.margin(L.logistic2()), [0.0], CP.binary(0.5)) == pytest.approx(1.0, abs=1e-15)
    # direct evaluation: every label has loss 1 - 1/3 at equal scores
    val = R.conditional_risk(R.Loss.comp_sum(2.0), np.zeros(3), CP(np.array([0.7, 0.2, 0.1])))
    assert val == pytest.approx(2.0 / 3.0, abs=1e-12)


def test_conditional_risk_ignores_infinite_loss_on_null_labels():
    val = R.conditional_risk(R.Loss.comp_sum(1.0), [0.0, -1e6], CP(np.array([1.0, 0.0])))
    assert val == pytest.approx(0.0, abs=1e-12)


def test_best_in_class_examples():
    assert R.best_in_class_conditional(R.Loss.zero_one(), R.HypothesisClassSpec.complete(), CP.binary(0.7)) == pytest.approx(0.3)
    ref = -0.9 * math.log2(0.9) - 0.1 * math.log2(0.1)
    got = R.best_in_class_conditional(R.Loss.margin(L.logistic2()), R.HypothesisClassSpec.all_measurable(), CP.binary(0.9))
    assert got == pytest.approx(ref, abs=1e-12) and got == pytest.approx(0.46900, abs=5e-6)
    got = R.best_in_class_conditional(R.Loss.comp_sum(1.0), R.HypothesisClassSpec.bounded(1.0, 3), CP(np.array([1.0, 0, 0])))
    assert got == pytest.approx(math.log(1 + 2 * math.exp(-2)), abs=1e-12)
    assert got == pytest.approx(0.23954, abs=5e-6)


def test_brute_force_examples():
    lin = R.HypothesisClassSpec.linear(W=1.0, B=5.0)
    got = R.brute_force_conditional_oracle(R.Loss.margin(L.logistic2()), lin, CP.binary(0.9), grid_resolution=10_000)
    assert got == pytest.approx(0.46900, abs=1e-4)
    zo = R.brute_force_conditional_oracle(R.Loss.zero_one(), lin, CP.binary(0.5))
    assert zo == pytest.approx(0.5)
    small = R.HypothesisClassSpec.linear(W=1.0, B=0.2)
    got = R.brute_force_conditional_oracle(R.Loss.margin(L.exponential()), small, CP.binary(0.9), grid_resolution=10_000)
    ref = 0.9 * math.exp(-0.2) + 0.1 * math.exp(0.2)
    assert got == pytest.approx(ref, abs=1e-9) and ref == pytest.approx(0.858998, abs=5e-7)


@pytest.mark.parametrize("phi", [L.hinge(), L.logistic2(), L.exponential(), L.quadratic(), L.sigmoid(1.0), L.rho_margin(0.5)])
def test_binary_closed_forms_match_oracle(phi):
    rng = np.random.default_rng(11)
    cls = R.HypothesisClassSpec.linear(W=1.0, B=0.7)
    loss = R.Loss.margin(phi)
    for eta in rng.uniform(0, 1, 20):
        pt = CP.binary(float(eta), norm_of_x=float(rng.uniform(0, 2)))
        closed = R.best_in_class_conditional(loss, cls, pt)
        assert R.brute_force_conditional_oracle(loss, cls, pt) == pytest.approx(closed, abs=1e-4)


@pytest.mark.parametrize("tau", [0.0, 0.5, 1.0, 1.5, 2.0, 3.0])
def test_comp_sum_complete_closed_form_matches_oracle(tau):
    rng = np.random.default_rng(int(tau * 10))
    cls = R.HypothesisClassSpec.complete(3)
    loss = R.Loss.comp_sum(tau)
    for _ in range(5):
        p = rng.dirichlet(np.ones(3))
        closed = R.best_in_class_conditional(loss, cls, CP(p))
        got = R.brute_force_conditional_oracle(loss, cls, CP(p), radius=25.0, grid_resolution=201)
        assert got == pytest.approx(closed, abs=1e-4)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.01, 1), min_size=2, max_size=6))
def test_zero_one_cstar_is_one_minus_max(raw):
    p = np.array(raw) / sum(raw)
    for cls in (R.HypothesisClassSpec.complete(len(p)), R.HypothesisClassSpec.bounded(1.0, len(p))):
        assert R.best_in_class_conditional(R.Loss.zero_one(), cls, CP(p)) == pytest.approx(1 - p.max())


@pytest.mark.parametrize("c", [1.0, 2.0])
def test_entropy_forms_continuous_across_branch_points(c):
    rng = np.random.default_rng(3)
    for _ in range(20):
        p = rng.dirichlet(np.ones(4))
        mid = R.comp_sum_cstar_complete(c, p)
        for d in (-1e-6, 1e-6):
            assert abs(R.comp_sum_cstar_complete(c + d, p) - mid) <= 1e-4


def test_generalization_risk_examples():
    pt = CP(np.array([0.3, 0.7]))
    single = R.DiscreteDistribution(np.array([1.0]), (pt,))
    assert R.generalization_risk(R.Loss.zero_one(), [[1.0, 0.0]], single) == pytest.approx(
        R.conditional_risk(R.Loss.zero_one(), [1.0, 0.0], pt))
    two = R.DiscreteDistribution(np.array([0.5, 0.5]), (CP.binary(1.0), CP.binary(0.0)))
    assert R.generalization_risk(R.Loss.zero_one(), [[1.0], [1.0]], two) == pytest.approx(0.5)
    # h0 = 0 at x0 = 0: both labels are hit inside the ball
    witness = R.DiscreteDistribution(np.array([1.0]), (CP.binary(0.5, 0.0, 0.0),))
    scores = [R._adv_pair(0.0, 0.0, 0.0, 0.1)]
    assert R.generalization_risk(R.Loss.adv_zero_one(), scores, witness) == pytest.approx(1.0)


def test_generalization_risk_length_mismatch():
    d = R.DiscreteDistribution(np.array([1.0]), (CP.binary(0.5),))
    with pytest.raises(ValueError):
        R.generalization_risk(R.Loss.zero_one(), [[0.0], [1.0]], d)


@pytest.mark.parametrize("eta,x,gamma", [(0.3, 0.0, 0.1), (0.8, 0.5, 0.2), (0.5, -0.4, 0.3)])
def test_adversarial_closed_form_branch(eta, x, gamma):
    # B > 0 lets the constant hypothesis clear the ball, so the infimum is min(eta, 1 - eta)
    cls = R.HypothesisClassSpec.linear(W=1.0, B=0.5, gamma=gamma)
    pt = CP.binary(eta, abs(x), x)
    closed = R.best_in_class_conditional(R.Loss.adv_zero_one(), cls, pt)
    assert closed == pytest.approx(min(eta, 1 - eta))
    assert R.brute_force_conditional_oracle(R.Loss.adv_zero_one(), cls, pt, grid_resolution=201) == pytest.approx(closed)


def test_adversarial_without_margin_costs_one():
    # hypotheses confined to w in [-W, W], b = 0 at x = 0 always straddle 0 over the ball
    pt = CP.binary(0.5, 0.0, 0.0)
    for w in np.linspace(-1, 1, 11):
        assert R.conditional_risk(R.Loss.adv_zero_one(), R._adv_pair(w, 0.0, 0.0, 0.1), pt) == 1.0


def test_sup_rho_closed_form_matches_oracle():
    cls = R.HypothesisClassSpec.linear(W=1.0, B=0.3, gamma=0.2)
    loss = R.Loss.sup_margin(L.rho_margin(1.0))
    for eta, x in ((0.2, 0.5), (0.7, 1.0), (0.9, 0.1)):
        pt = CP.binary(eta, x, x)
        assert R.brute_force_conditional_oracle(loss, cls, pt, grid_resolution=401) == pytest.approx(
            R.best_in_class_conditional(loss, cls, pt), abs=1e-6)


def test_no_closed_form_raises():
    with pytest.raises(R.NoClosedForm):
        R.best_in_class_conditional(R.Loss.comp_sum(1.0), R.HypothesisClassSpec.bounded(1.0, 3), CP(np.array([0.5, 0.3, 0.2])))
    with pytest.raises(R.UnboundedClass):
        R.brute_force_conditional_oracle(R.Loss.margin(L.hinge()), R.HypothesisClassSpec.all_measurable(), CP.binary(0.5))


def test_decoupled_gap_is_zero():
    d = R.DiscreteDistribution(np.array([0.25, 0.75]), (CP.binary(0.2), CP.binary(0.9)))
    rep = R.minimizability_gap(R.Loss.margin(L.hinge()), R.HypothesisClassSpec.linear(), d, "decoupled")
    assert rep.gap == 0.0


def test_deterministic_bounded_formula():
    cls = R.HypothesisClassSpec.bounded(1.0, 10)
    d = R.DiscreteDistribution(np.array([1.0]), (CP(np.eye(10)[0]),))
    rep = R.minimizability_gap(R.Loss.comp_sum(1.0), cls, d, "deterministic_bounded_formula", R_star_tau0=2.0)
    c0 = math.exp(-2.0) * 9
    assert rep.gap == pytest.approx(math.log(3.0) - math.log1p(c0), abs=1e-12)
    with pytest.raises(ValueError):
        R.minimizability_gap(R.Loss.comp_sum(1.0), cls, d, "deterministic_bounded_formula", R_star_tau0=0.1)
    with pytest.raises(ValueError):
        R.minimizability_gap(R.Loss.comp_sum(1.0), cls, d, "nope")


def test_linear_grid_gap_on_mixture():
    dist = S.discretize(S.SimulationSpec("nonadversarial", 0.1), 300)
    loss = R.Loss.margin(L.quadratic())
    # all-measurable class: labels are deterministic given x, every minimal error is 0
    assert R.minimizability_gap(loss, R.HypothesisClassSpec.all_measurable(), dist, "decoupled").best_in_class_risk == 0.0
    # a 1-D linear model cannot fit the atoms, so its gap is large; least-squares oracle with b = 0
    X = np.array([pt.x for pt in dist.points])
    Y = np.array([1.0 if pt.eta > 0.5 else -1.0 for pt in dist.points])
    w = dist.weights
    wstar = float(np.sum(w * X * Y) / np.sum(w * X * X))
    ref = float(np.sum(w * (1 - wstar * X * Y) ** 2))
    cls = R.HypothesisClassSpec.linear(W=1.0, B=1.0)
    coarse = R.minimizability_gap(loss, cls, dist, "linear_1d_grid", resolution=61)
    fine = R.minimizability_gap(loss, cls, dist, "linear_1d_grid", resolution=121)
    assert coarse.gap == pytest.approx(fine.gap, abs=1e-9)
    assert fine.gap == pytest.approx(ref, abs=1e-9)
    assert fine.gap > 0.9


@pytest.mark.parametrize("Lam,n,Rstar", [(1.0, 10, 2.0), (0.5, 3, 1.0), (2.0, 5, 0.5)])
def test_gap_ordering(Lam, n, Rstar):
    taus = (0.0, 1.0, 1.5, 2.0)
    gaps, flags, margins = R.gap_ordering_check(Lam, n, Rstar, taus)
    c0 = math.exp(-2 * Lam) * (n - 1)
    for tau, g in zip(taus, gaps):
        assert g == pytest.approx(float(L.phi_tau(tau, Rstar) - L.phi_tau(tau, c0)), abs=1e-12)
    assert all(flags)
    assert np.all(np.diff(gaps) < 0)


def test_gap_ordering_hand_values():
    c0 = math.exp(-1.0) * 2
    gaps, _, _ = R.gap_ordering_check(0.5, 3, 1.0, (0.0, 1.0, 2.0))
    assert gaps[0] == pytest.approx(1.0 - c0)
    assert gaps[1] == pytest.approx(math.log(2.0) - math.log(1 + c0))
    assert gaps[2] == pytest.approx(1 / (1 + c0) - 0.5)


def test_gap_ordering_equal_gives_zero():
    c0 = math.exp(-2.0) * 4
    gaps, _, _ = R.gap_ordering_check(1.0, 5, c0, (0.0, 0.5, 1.0, 2.0))
    assert np.allclose(gaps, 0.0, atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6))
def test_linear_gap_nonnegative(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, 5))
    xs = rng.uniform(-1, 1, m)
    pts = tuple(CP.binary(float(rng.uniform()), abs(float(x)), float(x), i) for i, x in enumerate(xs))
    d = R.DiscreteDistribution(rng.dirichlet(np.ones(m)), pts)
    rep = R.minimizability_gap(R.Loss.margin(L.hinge()), R.HypothesisClassSpec.linear(0.5, 0.5), d, "linear_1d_grid", resolution=41)
    assert rep.gap >= -1e-9


def test_distribution_text_round_trip():
    d = R.DiscreteDistribution(np.array([0.2, 0.8]), (CP.binary(0.3, 1.5, 1.5), CP.binary(0.9, 0.25, -0.25)))
    back = R.DiscreteDistribution.from_text(d.to_text())
    assert np.array_equal(back.weights, d.weights)
    for a, b in zip(back.points, d.points):
        assert np.array_equal(a.prob, b.prob) and a.norm_of_x == b.norm_of_x


def test_distribution_rejects_bad_weights():
    with pytest.raises(ValueError):
        R.DiscreteDistribution(np.array([0.5, 0.4]), (CP.binary(0.5), CP.binary(0.5)))
