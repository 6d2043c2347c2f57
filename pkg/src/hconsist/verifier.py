"""Assembled consistency bounds, tightness constructions and negative witnesses.

A bound check evaluates T(R_target(h) - E[C*_target]) against
R_surrogate(h) - E[C*_surrogate].  Those are the two sides of the bound
with minimizability gaps added back, so the check needs only pointwise
best-in-class risks.  The excess/gap split is reported when the class
risk minimizer is computable (decoupled classes, 1-D linear models).
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import losses as L
from . import transforms as TR
from .risk import (ConditionalPoint, DiscreteDistribution, HypothesisClassSpec, Loss,
                   best_in_class_conditional, brute_force_conditional_oracle, comp_sum_cstar_complete,
                   conditional_risk, generalization_risk, linear_1d_minimize, _adv_pair)

SLACK_FLOOR = -1e-7


class UnregisteredTriple(KeyError):
    pass


@dataclass(frozen=True)
class BoundReport:
    target_excess: float
    surrogate_excess: float
    target_gap: float
    surrogate_gap: float
    lhs: float
    rhs: float
    slack: float
    tight: bool

    def row(self) -> list:
        return [self.target_excess, self.surrogate_excess, self.target_gap, self.surrogate_gap,
                self.lhs, self.rhs, self.slack, int(self.tight)]


REPORT_COLUMNS = ["target_excess", "surrogate_excess", "target_gap", "surrogate_gap", "lhs", "rhs", "slack", "tight"]


def _expected_cstar(loss, cls, dist):
    return math.fsum(w * best_in_class_conditional(loss, cls, pt) for w, pt in zip(dist.weights, dist.points))


def verify_bound(surrogate: Loss, target: Loss, transform: TR.TransformCurve, cls: HypothesisClassSpec,
                 dist: DiscreteDistribution, hypothesis_scores, gap_mode: str = "auto",
                 tol: float = 1e-9) -> BoundReport:
    """Evaluate one bound instance.

    ``gap_mode``: ``decoupled`` (pointwise-free scores, gaps 0),
    ``linear_1d_grid`` (joint (w, b) search) or ``none`` (split unknown:
    excess and gap fields are NaN while lhs/rhs are exact).  ``auto`` picks
    decoupled for complete and all-measurable classes and none otherwise.
    """
    scores = [np.atleast_1d(np.asarray(s, dtype=float)) for s in hypothesis_scores]
    r_t = generalization_risk(target, scores, dist)
    r_s = generalization_risk(surrogate, scores, dist)
    e_t = _expected_cstar(target, cls, dist)
    e_s = _expected_cstar(surrogate, cls, dist)
    lhs = float(transform(min(max(r_t - e_t, 0.0), 1.0)))
    rhs = r_s - e_s
    if gap_mode == "auto":
        gap_mode = "decoupled" if cls.variant in ("CompleteSymmetric", "AllMeasurable") else "none"
    if gap_mode == "decoupled":
        g_t = g_s = 0.0
        x_t, x_s = r_t - e_t, r_s - e_s
    elif gap_mode == "linear_1d_grid":
        best_t, _ = linear_1d_minimize(target, cls, dist)
        best_s, _ = linear_1d_minimize(surrogate, cls, dist)
        g_t, g_s = best_t - e_t, best_s - e_s
        x_t, x_s = r_t - best_t, r_s - best_s
    elif gap_mode == "none":
        g_t = g_s = x_t = x_s = math.nan
    else:
        raise ValueError(f"unknown gap mode {gap_mode!r}")
    slack = rhs - lhs
    return BoundReport(x_t, x_s, g_t, g_s, lhs, rhs, slack, abs(slack) <= tol)


# registry of valid bounds --------------------------------------------------------------

@dataclass(frozen=True)
class BoundSpec:
    quad_id: str
    surrogate: Loss
    target: Loss
    transform: Callable  # cls -> TransformCurve
    cls_factory: Callable  # rng -> HypothesisClassSpec
    kind: str  # binary | adversarial | multiclass
    massart_beta: Optional[float] = None


def _binary_classes():
    return {
        "Linear": lambda rng: HypothesisClassSpec.linear(W=rng.uniform(0.2, 2.0), B=rng.uniform(0.1, 2.0)),
        "OneLayerNN": lambda rng: HypothesisClassSpec.nn(Lam=rng.uniform(0.3, 2.0), W=rng.uniform(0.2, 2.0),
                                                         B=rng.uniform(0.1, 2.0)),
        "AllMeasurable": lambda rng: HypothesisClassSpec.all_measurable(2),
    }


def _binary_transform(loss_id, phi):
    def make(cls):
        kw = {"k": phi.param("k", 1.0), "rho": phi.param("rho", 1.0)}
        if cls.variant == "Linear":
            return TR.binary_linear_transform(loss_id, cls.B, **kw)
        if cls.variant == "OneLayerNN":
            return TR.binary_linear_transform(loss_id, cls.B, Lam=cls.Lam, **kw)
        return TR.binary_complete_transform(loss_id, **kw)
    return make


def registry() -> dict:
    reg = {}
    phis = {"hinge": L.hinge(), "logistic": L.logistic2(), "exponential": L.exponential(),
            "quadratic": L.quadratic(), "sigmoid": L.sigmoid(1.5), "rho_margin": L.rho_margin(0.7)}
    for lid, phi in phis.items():
        for cname, cf in _binary_classes().items():
            qid = f"binary/{lid}/{cname}"
            reg[qid] = BoundSpec(qid, Loss.margin(phi), Loss.zero_one(), _binary_transform(lid, phi), cf, "binary")
    for beta in (0.1, 0.25):
        qid = f"binary-massart/quadratic/Linear/beta={beta:g}"
        reg[qid] = BoundSpec(qid, Loss.margin(L.quadratic()), Loss.zero_one(),
                             lambda cls, beta=beta: TR.massart_modified(TR.binary_linear_transform("quadratic", cls.B), beta),
                             _binary_classes()["Linear"], "binary", massart_beta=beta)
    for rho in (0.5, 1.0):
        qid = f"adversarial/sup-rho={rho:g}/Linear"
        reg[qid] = BoundSpec(qid, Loss.sup_margin(L.rho_margin(rho)), Loss.adv_zero_one(),
                             lambda cls, rho=rho: TR.adversarial_rho_transform(cls.B, rho),
                             lambda rng: HypothesisClassSpec.linear(W=rng.uniform(0.2, 2.0), B=rng.uniform(0.1, 2.0),
                                                                    gamma=rng.uniform(0.01, 0.5)),
                             "adversarial")
    for tau in (0.0, 0.5, 1.0, 1.5, 2.0, 3.0):
        qid = f"comp-sum/tau={tau:g}/CompleteSymmetric"
        reg[qid] = BoundSpec(qid, Loss.comp_sum(tau), Loss.zero_one(),
                             lambda cls, tau=tau: TR.comp_sum_transform(tau, cls.n),
                             lambda rng: HypothesisClassSpec.complete(int(rng.integers(2, 6))), "multiclass")
    return reg


def _random_point(rng, n, massart_beta=None, x_range=2.0):
    if n == 2:
        if massart_beta is not None:
            d = rng.uniform(massart_beta, 0.5) * rng.choice([-1.0, 1.0])
            eta = 0.5 + d
        else:
            eta = rng.choice([rng.uniform(0, 1), 0.5, 0.0, 1.0], p=[0.85, 0.05, 0.05, 0.05])
        x = rng.uniform(-x_range, x_range)
        return ConditionalPoint.binary(float(eta), abs(x), x)
    p = rng.dirichlet(np.full(n, rng.choice([0.3, 1.0, 3.0])))
    if rng.random() < 0.15:
        p = np.zeros(n)
        p[rng.integers(n)] = 1.0
    p = p / p.sum()
    return ConditionalPoint(p)


def random_instance(spec: BoundSpec, rng):
    cls = spec.cls_factory(rng)
    m = int(rng.integers(1, 6))
    pts = tuple(_random_point(rng, cls.n, spec.massart_beta) for _ in range(m))
    w = rng.dirichlet(np.ones(m))
    dist = DiscreteDistribution(w / w.sum(), pts)
    if spec.kind == "binary":
        if cls.variant == "AllMeasurable":
            scores = [np.array([rng.uniform(-6, 6)]) for _ in pts]
        elif rng.random() < 0.5:
            # a single linear model evaluated at every point
            wv, bv = rng.uniform(-cls.W, cls.W), rng.uniform(-cls.B, cls.B)
            scale = cls.Lam if cls.variant == "OneLayerNN" else 1.0
            scores = [np.array([scale * (wv * pt.x + bv)]) for pt in pts]
        else:
            scores = [np.array([rng.uniform(-1, 1) * cls.radius(pt.norm_of_x)]) for pt in pts]
    elif spec.kind == "adversarial":
        wv, bv = rng.uniform(-cls.W, cls.W), rng.uniform(-cls.B, cls.B)
        if rng.random() < 0.2:
            wv = 0.0
        scores = [_adv_pair(wv, bv, pt.x, cls.gamma) for pt in pts]
    else:
        scale = rng.choice([0.5, 3.0, 10.0])
        scores = [rng.normal(0, scale, cls.n) for _ in pts]
        if rng.random() < 0.2:
            scores = [np.zeros(cls.n) for _ in pts]
    return cls, dist, scores


def fuzz_quadruple(spec: BoundSpec, cases: int = 200, seed: int = 0):
    """Minimum slack over ``cases`` random instances, with the worst report."""
    rng = np.random.default_rng(seed)
    worst, worst_rep = math.inf, None
    for _ in range(cases):
        cls, dist, scores = random_instance(spec, rng)
        rep = verify_bound(spec.surrogate, spec.target, spec.transform(cls), cls, dist, scores, gap_mode="none")
        if rep.slack < worst:
            worst, worst_rep = rep.slack, rep
    return worst, worst_rep


def fuzz_suite(cases: int = 200, seed: int = 0, threads: Optional[int] = 1) -> dict:
    """Run every registered quadruple; returns {quad_id: minimum slack}."""
    reg = registry()
    ids = sorted(reg)

    def run(i):
        # per-quadruple seeds keep results independent of scheduling
        sub = int(np.random.SeedSequence([seed, i]).generate_state(1)[0])
        return ids[i], fuzz_quadruple(reg[ids[i]], cases, sub)[0]

    if threads is None:
        from .simulator import thread_cap
        threads = thread_cap()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return dict(ex.map(run, range(len(ids))))
    return dict(map(run, range(len(ids))))


# tightness -------------------------------------------------------------------------------

def tightness_comp_sum(tau: float, n: int, beta: float, M: float = 40.0):
    """Singleton construction with two tied top scores and the rest at -M.

    Returns (achieved_target, achieved_surrogate, T_value).
    """
    if not 0 <= tau <= 1 or not 0 <= beta <= 1:
        raise ValueError("need tau in [0, 1] and beta in [0, 1]")
    p = np.zeros(n)
    p[0], p[1] = (1 + beta) / 2, (1 - beta) / 2
    pt = ConditionalPoint(p)
    scores = np.zeros(n)
    scores[2:] = -M
    target = float(conditional_risk(Loss.zero_one(), scores, pt)) - (1.0 - float(p.max()))
    surrogate = float(conditional_risk(Loss.comp_sum(tau), scores, pt)) - comp_sum_cstar_complete(tau, p)
    return target, surrogate, float(TR.comp_sum_T(tau, n, beta))


def tightness_binary(loss_id: str, t: float, B: float = 1.0, grid: int = 100_000, k: float = 1.0, rho: float = 1.0):
    """Singleton at norm 0 with eta = (1+t)/2, swept over h in [-B, 0).

    Returns (min surrogate regret, T(t), slack, grid resolution).
    """
    phis = {"hinge": L.hinge(), "sigmoid": L.sigmoid(k), "rho_margin": L.rho_margin(rho),
            "logistic": L.logistic2(), "exponential": L.exponential(), "quadratic": L.quadratic()}
    phi = phis[loss_id]
    cls = HypothesisClassSpec.linear(W=1.0, B=B)
    pt = ConditionalPoint.binary((1 + t) / 2, 0.0)
    h = -B * np.arange(1, grid + 1) / grid
    loss = Loss.margin(phi)
    reg = conditional_risk(loss, h[:, None], pt) - best_in_class_conditional(loss, cls, pt)
    T = TR.binary_linear_transform(loss_id, B, k=k, rho=rho)(t)
    best = float(np.min(reg))
    return best, float(T), best - float(T), B / grid


# negative witnesses ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WitnessRecord:
    kind: str
    target_excess: float
    surrogate_excess: float
    detail: dict = field(default_factory=dict)

    def pair(self):
        return (self.target_excess, self.surrogate_excess)


def negative_witness_adversarial(cls: Optional[HypothesisClassSpec] = None, phi: Optional[L.AuxiliaryFunction] = None):
    """Singleton at x0 = 0 with eta = 1/2 and h0 = 0 for a 1-D linear class."""
    cls = cls or HypothesisClassSpec.linear(W=1.0, B=1.0, gamma=0.1)
    phi = phi or L.hinge()
    if cls.variant != "Linear" or not 0 < cls.gamma < cls.B / cls.W:
        raise ValueError("need a Linear class with 0 < gamma < B/W")
    if not (phi.convex or phi.id == "sigmoid"):
        raise ValueError("witness covers convex or symmetric auxiliaries")
    pt = ConditionalPoint.binary(0.5, 0.0, 0.0)
    dist = DiscreteDistribution(np.array([1.0]), (pt,))
    h0 = [_adv_pair(0.0, 0.0, 0.0, cls.gamma)]
    target_loss, sur = Loss.adv_zero_one(), Loss.sup_margin(phi)
    r_t = generalization_risk(target_loss, h0, dist)
    r_s = generalization_risk(sur, h0, dist)
    best_t = best_in_class_conditional(target_loss, cls, pt)
    best_s, arg = linear_1d_minimize(sur, cls, dist, resolution=401)
    sep = [_adv_pair(0.0, 0.5 * cls.B, 0.0, cls.gamma)]
    return WitnessRecord("adversarial-convex", r_t - best_t, max(r_s - best_s, 0.0),
                         {"R_target_h0": r_t, "R_surrogate_h0": r_s, "surrogate_minimizer": arg,
                          "separating_target_excess": generalization_risk(target_loss, sep, dist) - best_t})


def negative_witness_max_loss(n: int = 3, phi: Optional[L.AuxiliaryFunction] = None, radius: float = 3.0):
    """p = (1/2, 1/2, 0, ...) with all-equal scores; ties go to the highest index."""
    if n <= 2:
        raise ValueError("the max-loss witness needs n > 2")
    phi = phi or L.hinge()
    if not phi.convex:
        raise ValueError("the max-loss witness needs a convex auxiliary")
    p = np.zeros(n)
    p[0] = p[1] = 0.5
    pt = ConditionalPoint(p)
    cls = HypothesisClassSpec.complete(n)
    h0 = np.zeros(n)
    target, sur = Loss.zero_one(), Loss.max_loss(phi)
    t_ex = float(conditional_risk(target, h0, pt)) - best_in_class_conditional(target, cls, pt)
    c_s = float(conditional_risk(sur, h0, pt))
    best_s = brute_force_conditional_oracle(sur, cls, pt, grid_resolution=61, radius=radius)
    tie_break = h0.copy()
    tie_break[0] = 1e-3
    return WitnessRecord("max-loss", t_ex, max(c_s - best_s, 0.0),
                         {"C_surrogate_h0": c_s, "C_star_surrogate": best_s,
                          "tie_broken_target_excess": float(conditional_risk(target, tie_break, pt)) - 0.5})
