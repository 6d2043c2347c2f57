"""Loss catalog: margin auxiliaries, comp-sum, constrained, adversarial losses.

Binary margin auxiliaries take the margin ``y h(x)`` and are nonincreasing.
Softmax auxiliaries (neg_log, inv_minus_one, gen_ce, one_minus, squared)
take a softmax probability in (0, 1].
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

LN2 = math.log(2.0)


class ConstraintError(ValueError):
    """Scores violate the zero-sum constraint of a constrained loss."""


class UnsupportedConfiguration(ValueError):
    """A loss configuration outside the exactly computable cases."""


@dataclass(frozen=True)
class AuxiliaryFunction:
    id: str
    value: Callable = field(repr=False, compare=False)
    derivative: Optional[Callable] = field(default=None, repr=False, compare=False)
    second_derivative: Optional[Callable] = field(default=None, repr=False, compare=False)
    convex: bool = True
    nonincreasing: bool = True
    twice_differentiable: bool = False
    log_base: str = "natural"
    params: tuple = ()
    domain: tuple = (-np.inf, np.inf)

    def __call__(self, t):
        with np.errstate(over="ignore", divide="ignore"):
            return self.value(np.asarray(t, dtype=float))

    def param(self, name, default=None):
        return dict(self.params).get(name, default)

    def record(self) -> dict:
        return {"family": self.id, "params": dict(self.params), "log_base": self.log_base}


# binary margin auxiliaries ---------------------------------------------------

def hinge() -> AuxiliaryFunction:
    return AuxiliaryFunction(
        "hinge", lambda t: np.maximum(0.0, 1.0 - t),
        derivative=lambda t: np.where(t < 1.0, -1.0, 0.0),
    )


def logistic2(log_base: str = "two") -> AuxiliaryFunction:
    """log_b(1 + e^{-t}); base two in the binary catalog."""
    c = LN2 if log_base == "two" else 1.0

    def d1(t):
        return -1.0 / (1.0 + np.exp(t)) / c

    def d2(t):
        s = 1.0 / (1.0 + np.exp(-t))
        return s * (1.0 - s) / c

    return AuxiliaryFunction(
        "logistic2", lambda t: np.logaddexp(0.0, -t) / c, d1, d2,
        twice_differentiable=True, log_base=log_base,
    )


def exponential() -> AuxiliaryFunction:
    return AuxiliaryFunction(
        "exponential", lambda t: np.exp(-t), lambda t: -np.exp(-t), lambda t: np.exp(-t),
        twice_differentiable=True,
    )


def quadratic() -> AuxiliaryFunction:
    """(1 - t)^2 1_{t <= 1}; doubles as the squared hinge."""
    return AuxiliaryFunction(
        "quadratic", lambda t: np.where(t <= 1.0, (1.0 - t) ** 2, 0.0),
        lambda t: np.where(t <= 1.0, -2.0 * (1.0 - t), 0.0),
        lambda t: np.where(t <= 1.0, 2.0, 0.0),
        twice_differentiable=True,
    )


def sigmoid(k: float = 1.0) -> AuxiliaryFunction:
    return AuxiliaryFunction(
        "sigmoid", lambda t: 1.0 - np.tanh(k * t),
        lambda t: -k / np.cosh(k * t) ** 2,
        lambda t: 2.0 * k * k * np.tanh(k * t) / np.cosh(k * t) ** 2,
        convex=False, twice_differentiable=True, params=(("k", float(k)),),
    )


def rho_margin(rho: float = 1.0) -> AuxiliaryFunction:
    return AuxiliaryFunction(
        "rho_margin", lambda t: np.minimum(1.0, np.maximum(0.0, 1.0 - t / rho)),
        lambda t: np.where((t > 0) & (t < rho), -1.0 / rho, 0.0),
        convex=False, params=(("rho", float(rho)),),
    )


# softmax auxiliaries -----------------------------------------------------------

def neg_log() -> AuxiliaryFunction:
    return AuxiliaryFunction(
        "neg_log", lambda u: -np.log(u), lambda u: -1.0 / u, lambda u: 1.0 / u ** 2,
        twice_differentiable=True, domain=(0.0, 1.0),
    )


def inv_minus_one() -> AuxiliaryFunction:
    return AuxiliaryFunction(
        "inv_minus_one", lambda u: 1.0 / u - 1.0, lambda u: -1.0 / u ** 2, lambda u: 2.0 / u ** 3,
        twice_differentiable=True, domain=(0.0, 1.0),
    )


def gen_ce(q: float = 0.5) -> AuxiliaryFunction:
    if not 0.0 < q < 1.0:
        raise ValueError("gen_ce needs q in (0, 1)")
    return AuxiliaryFunction(
        "gen_ce", lambda u: (1.0 - u ** q) / q, lambda u: -(u ** (q - 1.0)),
        lambda u: (1.0 - q) * u ** (q - 2.0),
        twice_differentiable=True, params=(("q", float(q)),), domain=(0.0, 1.0),
    )


def one_minus() -> AuxiliaryFunction:
    return AuxiliaryFunction(
        "one_minus", lambda u: 1.0 - u, lambda u: -np.ones_like(u), lambda u: np.zeros_like(u),
        domain=(0.0, 1.0),
    )


def squared() -> AuxiliaryFunction:
    return AuxiliaryFunction(
        "squared", lambda u: (1.0 - u) ** 2, lambda u: -2.0 * (1.0 - u), lambda u: 2.0 + 0.0 * u,
        twice_differentiable=True,
    )


CATALOG = {
    "hinge": hinge,
    "logistic2": logistic2,
    "exponential": exponential,
    "quadratic": quadratic,
    "sigmoid": sigmoid,
    "rho_margin": rho_margin,
    "neg_log": neg_log,
    "inv_minus_one": inv_minus_one,
    "gen_ce": gen_ce,
    "one_minus": one_minus,
    "squared": squared,
}

ALIASES = {"logistic": "logistic2", "exp": "exponential", "quad": "quadratic", "rho": "rho_margin",
           "sq_hinge": "quadratic", "sig": "sigmoid", "sq": "squared", "log": "neg_log"}


def make_phi(name: str, **params) -> AuxiliaryFunction:
    key = ALIASES.get(name, name)
    if key not in CATALOG:
        raise KeyError(f"unknown auxiliary function {name!r}")
    return CATALOG[key](**params)


def eval_margin_loss(phi: AuxiliaryFunction, margin):
    return phi(margin)


# comp-sum -----------------------------------------------------------------------

@dataclass(frozen=True)
class CompSumParams:
    tau: float
    n: int

    def __post_init__(self):
        if self.tau < 0 or self.n < 2:
            raise ValueError("comp-sum needs tau >= 0 and n >= 2")


def phi_tau(tau: float, u):
    """((1+u)^{1-tau} - 1)/(1-tau), with the log branch at tau = 1."""
    u = np.asarray(u, dtype=float)
    if abs(tau - 1.0) < 1e-12:
        return np.log1p(u)
    return np.expm1((1.0 - tau) * np.log1p(u)) / (1.0 - tau)


def eval_comp_sum(params: CompSumParams, scores, y: int) -> float:
    """Comp-sum loss of label ``y`` (0-based) for a score vector."""
    s = np.asarray(scores, dtype=float)
    if s.shape[-1] != params.n:
        raise ValueError("score dimension does not match n")
    s = s - s.max(axis=-1, keepdims=True)
    e = np.exp(s)
    u = e.sum(axis=-1) / e[..., y] - 1.0
    out = phi_tau(params.tau, u)
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("comp-sum loss is not finite after score shift")
    return out


def softmax(scores):
    s = np.asarray(scores, dtype=float)
    s = s - s.max(axis=-1, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=-1, keepdims=True)


# constrained ----------------------------------------------------------------------

def eval_constrained(phi: AuxiliaryFunction, scores, y: int, atol: float = 1e-9) -> float:
    s = np.asarray(scores, dtype=float)
    if abs(s.sum()) > atol:
        raise ConstraintError(f"scores must sum to zero, got {s.sum():.3g}")
    mask = np.ones(s.shape[0], dtype=bool)
    mask[y] = False
    return float(np.sum(phi(-s[mask])))


# max loss ---------------------------------------------------------------------------

def eval_max_loss(phi: AuxiliaryFunction, scores, y: int) -> float:
    s = np.asarray(scores, dtype=float)
    others = np.delete(s, y)
    return float(np.max(phi(s[y] - others)))


# adversarial, linear hypotheses ----------------------------------------------------

@dataclass(frozen=True)
class LinearHypothesis:
    """Binary: w of shape (d,), b scalar.  Multi-class: w (n, d), b (n,)."""
    w: np.ndarray
    b: np.ndarray
    p: float = 2.0

    @property
    def q(self) -> float:
        return conjugate(self.p)

    def scores(self, x):
        return np.asarray(self.w) @ np.asarray(x, dtype=float) + self.b


def conjugate(p: float) -> float:
    if p == 1:
        return np.inf
    if np.isinf(p):
        return 1.0
    return p / (p - 1.0)


def dual_norm(w, p: float) -> float:
    return float(np.linalg.norm(np.atleast_1d(np.asarray(w, dtype=float)), ord=conjugate(p)))


def perturbed_scores(h: LinearHypothesis, x, gamma: float):
    """Return (inf, sup) of the binary score over the gamma-ball around x."""
    base = float(np.dot(np.atleast_1d(h.w), np.atleast_1d(np.asarray(x, dtype=float))) + float(h.b))
    r = gamma * dual_norm(h.w, h.p)
    return base - r, base + r


def eval_sup_margin_linear(phi: AuxiliaryFunction, h: LinearHypothesis, x, y: int, gamma: float) -> float:
    """sup over the gamma-ball of phi(y h(x')); exact for nonincreasing phi."""
    lo, hi = perturbed_scores(h, x, gamma)
    return float(phi(lo)) if y > 0 else float(phi(-hi))


def adversarial_zero_one(h: LinearHypothesis, x, y: int, gamma: float) -> float:
    """sup over the ball of 1{y h(x') <= 0}."""
    lo, hi = perturbed_scores(h, x, gamma)
    return 1.0 if (lo <= 0.0 if y > 0 else -hi <= 0.0) else 0.0


@dataclass(frozen=True)
class SmoothAdvParams:
    tau: float
    rho: float
    nu: float
    gamma: float
    p: float = 2.0


def operator_norm_p_to_2(M, p: float) -> float:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[1] == 1:
        return float(np.linalg.norm(M[:, 0]))
    if p == 2:
        return float(np.linalg.norm(M, ord=2))
    raise UnsupportedConfiguration("operator norm p->2 is only exact for d = 1 or p = 2")


def eval_smooth_adv_comp_sum(params: SmoothAdvParams, h: LinearHypothesis, x, y: int) -> float:
    W = np.atleast_2d(np.asarray(h.w, dtype=float))
    n = W.shape[0]
    if params.nu < math.sqrt(n - 1) / params.rho - 1e-15:
        raise ValueError("smooth adversarial loss needs nu >= sqrt(n-1)/rho")
    if W.shape[1] > 1 and params.p != 2:
        raise UnsupportedConfiguration("d > 1 requires p = 2")
    scores = W @ np.atleast_1d(np.asarray(x, dtype=float)) + np.asarray(h.b, dtype=float)
    base = float(eval_comp_sum(CompSumParams(params.tau, n), scores / params.rho, y))
    diffs = np.delete(W[y][None, :] - W, y, axis=0)
    return base + params.nu * params.gamma * operator_norm_p_to_2(diffs, params.p)


def adv_comp_sum_rho(tau: float, rho: float, h: LinearHypothesis, x, y: int, gamma: float, grid: int = 2001) -> float:
    """Brute-force sup over a 1-D gamma-interval of the comp-sum rho-margin loss."""
    W = np.atleast_2d(np.asarray(h.w, dtype=float))
    xs = float(np.atleast_1d(x)[0]) + np.linspace(-gamma, gamma, grid)
    S = xs[:, None] * W[:, 0][None, :] + np.asarray(h.b, dtype=float)[None, :]
    diffs = np.delete(S - S[:, [y]], y, axis=1)
    inner = np.minimum(1.0, np.maximum(0.0, 1.0 + diffs / rho)).sum(axis=1)
    return float(np.max(phi_tau(tau, inner)))
