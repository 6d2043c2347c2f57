import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hconsist import losses as L

MARGIN = {
    "hinge": (L.hinge(), lambda t: max(0.0, 1 - t)),
    "logistic2": (L.logistic2(), lambda t: math.log2(1 + math.exp(-t))),
    "exponential": (L.exponential(), lambda t: math.exp(-t)),
    "quadratic": (L.quadratic(), lambda t: (1 - t) ** 2 if t <= 1 else 0.0),
    "sigmoid": (L.sigmoid(1.5), lambda t: 1 - math.tanh(1.5 * t)),
    "rho_margin": (L.rho_margin(0.5), lambda t: min(1.0, max(0.0, 1 - t / 0.5))),
}


@pytest.mark.parametrize("name", sorted(MARGIN))
def test_margin_definitions_match_scalar_formulas(name):
    phi, ref = MARGIN[name]
    for t in np.linspace(-4, 4, 81):
        assert float(phi(t)) == pytest.approx(ref(t), rel=1e-13, abs=1e-15)


@pytest.mark.parametrize("name", sorted(L.CATALOG))
def test_values_finite_nonnegative(name):
    phi = L.make_phi(name)
    lo, hi = phi.domain
    t = np.linspace(max(lo, -5) + 1e-3, min(hi, 5), 257)
    v = phi(t)
    assert np.all(np.isfinite(v)) and np.all(v >= 0)


@pytest.mark.parametrize("name", sorted(L.CATALOG))
def test_derivative_matches_central_difference(name):
    phi = L.make_phi(name)
    if phi.derivative is None:
        pytest.skip("no derivative supplied")
    rng = np.random.default_rng(7)
    lo, hi = phi.domain
    lo, hi = max(lo, -3.0) + 0.05, min(hi, 3.0) - 0.05
    h = 1e-6
    for t in rng.uniform(lo, hi, 64):
        if name in ("hinge", "rho_margin", "quadratic") and min(abs(t), abs(t - 1), abs(t - 0.5)) < 1e-3:
            continue  # kinks
        fd = (float(phi(t + h)) - float(phi(t - h))) / (2 * h)
        d = float(phi.derivative(np.array(t)))
        assert fd == pytest.approx(d, rel=1e-6, abs=1e-6)


@pytest.mark.parametrize("name", ["hinge", "logistic2", "exponential", "quadratic", "sigmoid", "rho_margin"])
def test_margin_entries_upper_bound_indicator(name):
    phi, _ = MARGIN[name]
    t = np.linspace(-3, 3, 1000)
    assert np.all(phi(t) >= (t <= 0) - 1e-15)


def test_eval_margin_loss_examples():
    assert L.eval_margin_loss(L.hinge(), 0.0) == 1.0
    assert float(L.eval_margin_loss(L.logistic2(), 0.0)) == pytest.approx(1.0, abs=1e-15)
    assert float(L.eval_margin_loss(L.rho_margin(0.5), 0.25)) == pytest.approx(0.5)


def test_eval_comp_sum_examples():
    assert L.eval_comp_sum(L.CompSumParams(1.0, 2), [0.0, 0.0], 0) == pytest.approx(math.log(2), abs=1e-12)
    assert L.eval_comp_sum(L.CompSumParams(2.0, 4), np.zeros(4), 0) == pytest.approx(0.75, abs=1e-12)
    assert L.eval_comp_sum(L.CompSumParams(0.0, 2), [1.0, 0.0], 0) == pytest.approx(math.exp(-1), abs=1e-12)


def test_eval_constrained_examples():
    assert L.eval_constrained(L.exponential(), [0.0, 0.0], 0) == pytest.approx(1.0)
    assert L.eval_constrained(L.hinge(), [1.0, -1.0], 0) == 0.0
    assert L.eval_constrained(L.squared(), [0.5, -0.5], 0) == pytest.approx(0.25)
    with pytest.raises(L.ConstraintError):
        L.eval_constrained(L.hinge(), [1.0, 0.0], 0)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-30, 30), min_size=2, max_size=8), st.data())
def test_comp_sum_tau_one_is_negative_log_softmax(scores, data):
    y = data.draw(st.integers(0, len(scores) - 1))
    s = np.array(scores)
    ref = -(s[y] - np.logaddexp.reduce(s))
    assert L.eval_comp_sum(L.CompSumParams(1.0, len(s)), s, y) == pytest.approx(ref, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-20, 20), min_size=2, max_size=6), st.floats(-50, 50), st.floats(0, 4))
def test_comp_sum_shift_invariant(scores, c, tau):
    s = np.array(scores)
    p = L.CompSumParams(tau, len(s))
    assert L.eval_comp_sum(p, s + c, 0) == pytest.approx(L.eval_comp_sum(p, s, 0), rel=1e-9, abs=1e-12)


def test_phi_tau_below_identity_and_continuous():
    u = np.linspace(0, 50, 501)
    for tau in (0.0, 0.3, 1.0, 1.7, 2.0, 3.5):
        assert np.all(L.phi_tau(tau, u) <= u + 1e-12)
    for c in (1.0, 2.0):
        for d in (-1e-6, 1e-6):
            assert np.max(np.abs(L.phi_tau(c + d, u[:50]) - L.phi_tau(c, u[:50]))) <= 1e-4


def test_phi_tau_differences_nonincreasing_in_tau():
    taus = np.linspace(0, 4, 41)
    for u1 in np.linspace(0, 10, 11):
        for u2 in np.linspace(0, u1, 5):
            d = np.array([L.phi_tau(t, u1) - L.phi_tau(t, u2) for t in taus])
            assert np.all(np.diff(d) <= 1e-12)


def test_phi_tau_derivative_identity():
    u, h = np.linspace(0.1, 5, 30), 1e-6
    for tau in (0.0, 0.5, 1.0, 2.5):
        fd = (L.phi_tau(tau, u + h) - L.phi_tau(tau, u - h)) / (2 * h)
        assert np.allclose(fd, (1 + u) ** (-tau), rtol=1e-6)


def test_sup_margin_examples():
    h = L.LinearHypothesis(np.array([2.0]), 0.1)
    assert L.eval_sup_margin_linear(L.rho_margin(1.0), h, [0.5], +1, 0.1) == pytest.approx(0.1)
    h0 = L.LinearHypothesis(np.array([0.0]), 0.3)
    assert L.eval_sup_margin_linear(L.exponential(), h0, [0.7], +1, 0.4) == pytest.approx(math.exp(-0.3))
    h1 = L.LinearHypothesis(np.array([1.0]), 0.0)
    assert L.eval_sup_margin_linear(L.hinge(), h1, [0.0], -1, 0.2) == pytest.approx(1.2)


@settings(max_examples=100, deadline=None)
@given(st.floats(-2, 2), st.floats(-1, 1), st.floats(-2, 2), st.floats(0, 0.5), st.sampled_from([1, -1]),
       st.sampled_from(["hinge", "logistic2", "exponential", "quadratic", "sigmoid", "rho_margin"]))
def test_sup_margin_matches_grid_sup(w, b, x, gamma, y, name):
    phi, _ = MARGIN[name]
    h = L.LinearHypothesis(np.array([w]), b)
    xs = x + np.linspace(-gamma, gamma, 10_001)
    brute = float(np.max(phi(y * (w * xs + b))))
    assert L.eval_sup_margin_linear(phi, h, [x], y, gamma) == pytest.approx(brute, abs=1e-6)


def test_adversarial_zero_one_ball():
    h = L.LinearHypothesis(np.array([1.0]), 0.0)
    assert L.adversarial_zero_one(h, [0.05], +1, 0.1) == 1.0
    assert L.adversarial_zero_one(h, [0.5], +1, 0.1) == 0.0


def test_smooth_adversarial_example():
    p = L.SmoothAdvParams(tau=1.0, rho=1.0, nu=1.0, gamma=0.5)
    h = L.LinearHypothesis(np.array([[1.0], [0.0]]), np.array([0.0, 0.0]))
    assert L.eval_smooth_adv_comp_sum(p, h, [0.0], 0) == pytest.approx(math.log(2) + 0.5, abs=1e-12)


def test_smooth_adversarial_equal_weights_reduce_to_comp_sum():
    p = L.SmoothAdvParams(tau=0.5, rho=2.0, nu=1.0, gamma=0.3)
    W = np.ones((3, 1))
    b = np.array([0.2, -0.1, 0.4])
    h = L.LinearHypothesis(W, b)
    ref = L.eval_comp_sum(L.CompSumParams(0.5, 3), (W @ [0.7] + b) / 2.0, 1)
    assert L.eval_smooth_adv_comp_sum(p, h, [0.7], 1) == pytest.approx(ref, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6))
def test_smooth_adversarial_upper_bounds_grid_sup(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 5))
    rho = float(rng.uniform(0.5, 2))
    tau = float(rng.choice([0.0, 0.5, 1.0, 1.5, 2.0]))
    gamma = float(rng.uniform(0, 0.5))
    nu = math.sqrt(n - 1) / rho * float(rng.uniform(1.0, 2.0))
    h = L.LinearHypothesis(rng.normal(size=(n, 1)), rng.normal(size=n))
    x, y = float(rng.uniform(-1, 1)), int(rng.integers(n))
    smooth = L.eval_smooth_adv_comp_sum(L.SmoothAdvParams(tau, rho, nu, gamma), h, [x], y)
    assert smooth >= L.adv_comp_sum_rho(tau, rho, h, [x], y, gamma) - 1e-9


def test_smooth_adversarial_refuses_inexact_norms():
    p = L.SmoothAdvParams(tau=1.0, rho=1.0, nu=2.0, gamma=0.1, p=np.inf)
    h = L.LinearHypothesis(np.ones((2, 3)), np.zeros(2))
    with pytest.raises(L.UnsupportedConfiguration):
        L.eval_smooth_adv_comp_sum(p, h, np.zeros(3), 0)


def test_unknown_phi_rejected():
    with pytest.raises(KeyError):
        L.make_phi("nope")
