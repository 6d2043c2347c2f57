"""Closed-form estimation-error transformations and their inverses.

Every curve is a ``TransformCurve`` on t in [0, 1].  Inverses use a closed
form where one is known and vectorized bisection otherwise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .losses import LN2

DOMAIN_SLACK = 1e-9
BISECT_ITERS = 80


class OutOfDomain(ValueError):
    pass


class UnknownTransform(KeyError):
    pass


def _clip_t(t):
    t = np.asarray(t, dtype=float)
    if np.any(t < -DOMAIN_SLACK) or np.any(t > 1.0 + DOMAIN_SLACK):
        raise OutOfDomain("transformations are defined on [0, 1]")
    return np.clip(t, 0.0, 1.0)


@dataclass(frozen=True)
class TransformCurve:
    func: Callable
    source_tag: str
    convex: bool = True
    nondecreasing: bool = True
    zero_at_zero: bool = True
    closed_inverse: Optional[Callable] = None
    relaxed_inverse: Optional[Callable] = None
    params: dict = field(default_factory=dict)

    @property
    def inverse_mode(self) -> str:
        return "closed_form" if self.closed_inverse is not None else "bisection"

    def __call__(self, t):
        tt = _clip_t(t)
        with np.errstate(all="ignore"):
            v = np.asarray(self.func(tt), dtype=float)
        return float(v) if v.ndim == 0 else v

    def inverse(self, s, relaxed: bool = False):
        """Smallest t with T(t) >= s; saturates at 1 above T(1)."""
        s = np.asarray(s, dtype=float)
        if np.any(s < -DOMAIN_SLACK):
            raise OutOfDomain("inverse is defined for s >= 0")
        s = np.maximum(s, 0.0)
        if relaxed:
            if self.relaxed_inverse is None:
                raise UnknownTransform(f"{self.source_tag} has no relaxed inverse")
            return self.relaxed_inverse(s)
        if self.closed_inverse is not None:
            with np.errstate(all="ignore"):
                out = np.clip(np.asarray(self.closed_inverse(s), dtype=float), 0.0, 1.0)
            out = np.where(s >= self(1.0), 1.0, out)
            return float(out) if out.ndim == 0 else out
        lo = np.zeros(s.shape)
        hi = np.ones(s.shape)
        for _ in range(BISECT_ITERS):
            mid = 0.5 * (lo + hi)
            below = self(mid) < s
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        # T(0) = 0 and T is nondecreasing, so s <= 0 inverts to 0 exactly
        out = np.where(s <= 0.0, 0.0, hi)
        return float(out) if out.ndim == 0 else out

    def certify(self, points: int = 1001, tol: float = 1e-12) -> dict:
        t = np.linspace(0.0, 1.0, points)
        v = self(t)
        scale = max(1.0, float(np.max(np.abs(v))))
        res = {"finite": bool(np.all(np.isfinite(v)))}
        if self.zero_at_zero:
            res["zero_at_zero"] = abs(float(v[0])) <= tol * scale
        if self.nondecreasing:
            res["nondecreasing"] = bool(np.all(np.diff(v) >= -tol * scale))
        if self.convex:
            mid = self(0.5 * (t[:-1] + t[1:]))
            res["convex"] = bool(np.all(mid <= 0.5 * (v[:-1] + v[1:]) + tol * scale))
        return res


def _one_minus_sqrt(t):
    # 1 - sqrt(1 - t^2) without cancellation
    return t * t / (1.0 + np.sqrt(np.maximum(1.0 - t * t, 0.0)))


def _ent(t):
    # (1+t)/2 ln(1+t) + (1-t)/2 ln(1-t), with 0 ln 0 = 0
    a = 0.5 * (1.0 + t) * np.log1p(t)
    with np.errstate(divide="ignore", invalid="ignore"):
        b = np.where(t < 1.0, 0.5 * (1.0 - t) * np.log1p(-np.minimum(t, 1.0)), 0.0)
    return a + b


def _linear(c, tag, **params):
    c = float(c)
    inv = (lambda s: s / c) if c > 0 else None
    return TransformCurve(lambda t: c * t, tag, closed_inverse=inv, params=dict(params, coefficient=c))


# binary, linear and one-hidden-layer classes ---------------------------------------

def binary_linear_transform(loss_id: str, B: float, k: float = 1.0, rho: float = 1.0,
                            Lam: Optional[float] = None, log_base: str = "two") -> TransformCurve:
    """Transformation for linear models; pass ``Lam`` for the one-hidden-layer class."""
    if B <= 0:
        raise ValueError("B must be positive")
    cls = "binary-linear"
    if Lam is not None:
        B = Lam * B
        cls = "binary-nn"
    tag = f"{cls}/{loss_id}"
    if loss_id == "hinge":
        return _linear(min(B, 1.0), tag, B=B)
    if loss_id == "sigmoid":
        return _linear(math.tanh(k * B), tag, B=B, k=k)
    if loss_id in ("rho_margin", "rho"):
        return _linear(min(B, rho) / rho, tag, B=B, rho=rho)
    if loss_id in ("logistic", "logistic2"):
        c = LN2 if log_base == "two" else 1.0
        th = math.tanh(B / 2.0)
        lp, lm = math.log1p(math.exp(-B)), B + math.log1p(math.exp(-B))

        def f(t):
            tail = LN2 - (t + 1) / 2 * lp - (1 - t) / 2 * lm
            return np.where(t <= th, _ent(t), tail) / c

        def relaxed(s):
            cut = 0.5 * th * th
            return np.where(s <= cut, np.sqrt(2 * s), 2 * s / th)

        return TransformCurve(f, tag, relaxed_inverse=relaxed, params={"B": B, "threshold": th, "log_base": log_base})
    if loss_id in ("exponential", "exp"):
        th = math.tanh(B)
        eB, emB = math.exp(B), math.exp(-B)

        def f(t):
            return np.where(t <= th, _one_minus_sqrt(t), 1.0 - (t + 1) / 2 * emB - (1 - t) / 2 * eB)

        def relaxed(s):
            cut = 0.5 * th * th
            return np.where(s <= cut, np.sqrt(2 * s), 2 * s / th)

        return TransformCurve(f, tag, relaxed_inverse=relaxed, params={"B": B, "threshold": th})
    if loss_id in ("quadratic", "quad", "sq_hinge"):
        def f(t):
            return np.where(t <= B, t * t, 2 * B * t - B * B)

        def inv(s):
            return np.where(s <= B * B, np.sqrt(s), s / (2 * B) + B / 2)

        return TransformCurve(f, tag, closed_inverse=inv, params={"B": B})
    raise UnknownTransform(f"unknown binary loss {loss_id!r}")


def binary_complete_transform(loss_id: str, **kw) -> TransformCurve:
    """All-measurable limit: the first branch everywhere."""
    return binary_linear_transform(loss_id, B=50.0, **kw)


# comp-sum family ----------------------------------------------------------------------

def _log_power_mean(beta, r):
    """log of (((1+b)^r + (1-b)^r)/2)^(1/r), computed in log space."""
    beta = np.asarray(beta, dtype=float)
    lp = np.log1p(beta)
    with np.errstate(divide="ignore"):
        lm = np.log1p(-beta)
    lse = np.logaddexp(r * lp, r * lm) - math.log(2.0)
    return lse / r


def comp_sum_T(tau: float, n: int, beta):
    beta = np.asarray(beta, dtype=float)
    if abs(tau - 1.0) < 1e-12:
        return _ent(beta)
    if tau >= 2.0 - 1e-12:
        return beta / ((tau - 1.0) * n ** (tau - 1.0))
    r = 1.0 / (2.0 - tau)
    lm = _log_power_mean(beta, r)
    if tau < 1.0:
        return -(2.0 ** (1.0 - tau)) / (1.0 - tau) * np.expm1(lm)
    return np.expm1(lm) / ((tau - 1.0) * n ** (tau - 1.0))


def comp_sum_transform(tau: float, n: int) -> TransformCurve:
    if tau < 0 or n < 2:
        raise ValueError("need tau >= 0 and n >= 2")
    inv = None
    if tau >= 2.0 - 1e-12:
        c = 1.0 / ((tau - 1.0) * n ** (tau - 1.0))
        inv = lambda s: s / c
    return TransformCurve(lambda b: comp_sum_T(tau, n, b), f"comp-sum/tau={tau:g}",
                          closed_inverse=inv, params={"tau": tau, "n": n})


def comp_sum_poly_bounds(tau: float, n: int):
    """Polynomial lower bound of T_tau and the inverse of that bound."""
    if tau < 1.0:
        a = 1.0 / (2.0 ** tau * (2.0 - tau))
    elif tau < 2.0:
        a = 1.0 / (2.0 * n ** (tau - 1.0))
    else:
        c = 1.0 / ((tau - 1.0) * n ** (tau - 1.0))
        lower = _linear(c, f"comp-sum-poly/tau={tau:g}", tau=tau, n=n)
        return lower, (lambda s: np.asarray(s, dtype=float) / c)
    lower = TransformCurve(lambda b: a * b * b, f"comp-sum-poly/tau={tau:g}",
                           closed_inverse=lambda s: np.sqrt(s / a), params={"tau": tau, "n": n, "a": a})
    return lower, (lambda s: np.sqrt(np.asarray(s, dtype=float) / a))


# tabulated multi-class curves -----------------------------------------------------------

def _gen_ce_T(q, n):
    def f(t):
        lm = _log_power_mean(t, 1.0 / (1.0 - q))
        return np.expm1(lm) / (q * n ** q)
    return f


def multiclass_table_transform(family: str, phi_id: str, n: int = 2, q: float = 0.5,
                               rho: float = 1.0, B: float = 1.0, Lam: Optional[float] = None) -> TransformCurve:
    tag = f"{family}/{phi_id}"
    if family == "comp_sum_phi":
        if phi_id == "neg_log":
            return TransformCurve(_ent, tag)
        if phi_id == "inv_minus_one":
            return TransformCurve(_one_minus_sqrt, tag)
        if phi_id == "gen_ce":
            if not 0 < q < 1:
                raise ValueError("gen_ce needs q in (0, 1)")
            return TransformCurve(_gen_ce_T(q, n), tag, params={"q": q, "n": n})
        if phi_id == "one_minus":
            return _linear(1.0 / n, tag, n=n)
        if phi_id == "squared":
            return TransformCurve(lambda t: t * t / 4, tag, closed_inverse=lambda s: np.sqrt(4 * s))
    if family == "cstnd_phi":
        if phi_id in ("exponential", "exp"):
            return TransformCurve(lambda t: t * t / (2.0 + np.sqrt(4.0 - t * t)), tag,
                                  closed_inverse=lambda s: np.sqrt(4.0 - (2.0 - s) ** 2))
        if phi_id == "hinge":
            return _linear(1.0, tag)
        if phi_id in ("sq_hinge", "quadratic", "squared"):
            return TransformCurve(lambda t: t * t / 2, tag, closed_inverse=lambda s: np.sqrt(2 * s))
    if family == "sum_loss":
        if phi_id in ("sq_hinge", "quadratic"):
            return TransformCurve(lambda t: t * t, tag, closed_inverse=np.sqrt)
        if phi_id in ("exponential", "exp"):
            return TransformCurve(lambda t: t * t / 2, tag, closed_inverse=lambda s: np.sqrt(2 * s))
        if phi_id in ("rho_margin", "rho"):
            return _linear(1.0, tag)
    if family == "cstnd_sum":
        # constrained losses with complete symmetric classes, pairwise form
        if phi_id == "hinge" or phi_id in ("rho_margin", "rho"):
            return _linear(1.0, tag)
        if phi_id in ("sq_hinge", "quadratic"):
            return TransformCurve(lambda t: t * t, tag, closed_inverse=np.sqrt)
        if phi_id in ("exponential", "exp"):
            return TransformCurve(lambda t: t * t / 2, tag, closed_inverse=lambda s: np.sqrt(2 * s))
    if family == "max_rho":
        if phi_id == "complete":
            return _linear(1.0, tag)
        if phi_id == "linear":
            return _linear(min(1.0, 2.0 * B / rho), tag, B=B, rho=rho)
        if phi_id == "nn":
            lam = 1.0 if Lam is None else Lam
            return _linear(min(1.0, 2.0 * lam * B / rho), tag, B=B, rho=rho, Lam=lam)
    raise UnknownTransform(f"no tabulated curve for ({family}, {phi_id})")


def adversarial_rho_transform(B: float, rho: float, Lam: Optional[float] = None) -> TransformCurve:
    if B <= 0 or rho <= 0:
        raise ValueError("B and rho must be positive")
    eff = B if Lam is None else Lam * B
    tag = "adversarial-linear/sup-rho" if Lam is None else "adversarial-nn/sup-rho"
    return _linear(min(eff, rho) / rho, tag, B=eff, rho=rho)


# Massart-modified transforms --------------------------------------------------------------

def massart_modified(base: TransformCurve, beta: float, adversarial: bool = False,
                     second: Optional[TransformCurve] = None) -> TransformCurve:
    """Replace the curve below the Massart threshold by its chord from 0.

    Adversarial mode takes the two adversarial pieces ``base`` (argument in
    [1/2 + beta, 1]) and ``second`` (argument in [2 beta, 1]) and returns
    the pointwise minimum of their chord-modified versions.
    """
    if not 0 < beta <= 0.5:
        raise ValueError("beta must lie in (0, 1/2]")
    tag = f"massart/{base.source_tag}/beta={beta:g}"
    if not adversarial:
        a = 2.0 * beta
        slope = base(a) / a

        def f(t):
            return np.where(t >= a, base(t), slope * t)

        return TransformCurve(f, tag, convex=base.convex, params={"beta": beta})
    if second is None:
        raise ValueError("adversarial mode needs the second piece")
    a1 = 0.5 + beta
    s1 = base(a1) * 2.0 / (1.0 + 2.0 * beta)
    a2 = 2.0 * beta
    s2 = second(a2) / a2

    def g(t):
        t1 = np.where(t >= a1, base(np.minimum(t, 1.0)), s1 * t)
        t2 = np.where(t >= a2, second(t), s2 * t)
        return np.minimum(t1, t2)

    return TransformCurve(g, tag + "/adversarial", convex=False, params={"beta": beta})


def adversarial_massart_lower(loss_id: str, B: float, beta: float, k: float = 1.0) -> TransformCurve:
    """Convex lower piece for sup-hinge and sup-sigmoid under Massart noise."""
    if not 0 < beta <= 0.5:
        raise ValueError("beta must lie in (0, 1/2]")
    if loss_id == "hinge":
        coef = min(B, 1.0)
    elif loss_id == "sigmoid":
        coef = math.tanh(k * B)
    else:
        raise UnknownTransform(f"no adversarial Massart piece for {loss_id!r}")
    a = 0.5 + beta

    def f(t):
        return np.where(t >= a, coef * (2 * t - 1), coef * 4 * beta / (1 + 2 * beta) * t)

    return TransformCurve(f, f"massart-adversarial/{loss_id}", convex=True,
                          params={"beta": beta, "coefficient": coef})


def adversarial_massart_coefficient(loss_id: str, B: float, beta: float, k: float = 1.0) -> float:
    """Bound coefficient (1+2 beta)/(4 beta coef): R_gamma excess <= coeff * surrogate excess."""
    piece = adversarial_massart_lower(loss_id, B, beta, k)
    return (1 + 2 * beta) / (4 * beta * piece.params["coefficient"])


# bounded-score (softmax range) curves --------------------------------------------------------

def bounded_hypothesis_psi(loss_id: str, s_min: float = None, s_max: float = None,
                           Lam_min: float = None, q: float = 0.5) -> TransformCurve:
    tag = f"bounded/{loss_id}"
    if loss_id == "cstnd_exp":
        if Lam_min is None or Lam_min <= 0:
            raise ValueError("cstnd_exp needs Lam_min > 0")
        th = math.tanh(Lam_min)
        eL, emL = math.exp(Lam_min), math.exp(-Lam_min)

        def f(t):
            return np.where(t <= th, _one_minus_sqrt(t), t / 2 * (eL - emL) + (2 - eL - emL) / 2)

        return TransformCurve(f, tag, params={"Lam_min": Lam_min, "threshold": th})
    if s_min is None or s_max is None:
        raise ValueError(f"{loss_id} needs s_min and s_max")
    if not s_max > s_min:
        raise ValueError("degenerate softmax range: s_min == s_max")
    lo, hi = float(s_min), float(s_max)
    if loss_id in ("logistic", "neg_log"):
        th = (hi - lo) / (lo + hi)

        def f(t):
            tail = t / 2 * math.log(hi / lo) + math.log(2 * math.sqrt(hi * lo) / (hi + lo)) if lo > 0 else np.inf
            return np.where(t <= th, _ent(t), tail)

        return TransformCurve(f, tag, params={"s_min": lo, "s_max": hi, "threshold": th})
    if loss_id in ("sum_exponential", "inv_minus_one"):
        th = (hi * hi - lo * lo) / (lo * lo + hi * hi)

        def f(t):
            tail = (hi - lo) / (2 * hi * lo) * t - (hi - lo) ** 2 / (2 * hi * lo * (hi + lo))
            return np.where(t <= th, _one_minus_sqrt(t), tail)

        # the head jumps up to the tail at the threshold for n > 2, so no convexity claim
        return TransformCurve(f, tag, convex=False, params={"s_min": lo, "s_max": hi, "threshold": th})
    if loss_id == "gen_ce":
        if not 0 < q < 1:
            raise ValueError("gen_ce needs q in (0, 1)")
        th = (hi ** (1 - q) - lo ** (1 - q)) / (lo ** (1 - q) + hi ** (1 - q))
        mid = ((lo + hi) / 2) ** q

        def f(t):
            head = mid / q * np.expm1(_log_power_mean(t, 1.0 / (1.0 - q)))
            tail = t / (2 * q) * (hi ** q - lo ** q) + ((lo ** q + hi ** q) / 2 - mid) / q
            return np.where(t <= th, head, tail)

        return TransformCurve(f, tag, params={"s_min": lo, "s_max": hi, "q": q, "threshold": th})
    if loss_id in ("mae", "one_minus"):
        return _linear((hi - lo) / 2, tag, s_min=lo, s_max=hi)
    raise UnknownTransform(f"no bounded curve for {loss_id!r}")


# catalog listing for the certificate and inversion suites ------------------------------------

def catalog_curves() -> dict:
    """Every catalog curve at representative parameters, keyed by source tag."""
    out = {}

    def add(c):
        out[c.source_tag + "".join(f"|{k}={v:g}" for k, v in sorted(c.params.items())
                                    if isinstance(v, (int, float)) and k in ("B", "n", "beta", "q", "rho"))] = c

    for B in (0.5, 1.0, 3.0):
        for lid in ("hinge", "logistic", "exponential", "quadratic", "sigmoid", "rho_margin"):
            add(binary_linear_transform(lid, B, k=1.0, rho=0.5))
        add(binary_linear_transform("hinge", B, Lam=2.0))
        add(adversarial_rho_transform(B, 1.0))
    for tau in (0.0, 0.5, 1.0, 1.5, 2.0, 3.0):
        for n in (2, 10):
            add(comp_sum_transform(tau, n))
            add(comp_sum_poly_bounds(tau, n)[0])
    for phi in ("neg_log", "inv_minus_one", "gen_ce", "one_minus", "squared"):
        add(multiclass_table_transform("comp_sum_phi", phi, n=4, q=0.5))
    for phi in ("exponential", "hinge", "sq_hinge"):
        add(multiclass_table_transform("cstnd_phi", phi))
    for phi in ("sq_hinge", "exponential", "rho_margin"):
        add(multiclass_table_transform("sum_loss", phi))
        add(multiclass_table_transform("cstnd_sum", phi))
    for phi in ("complete", "linear", "nn"):
        add(multiclass_table_transform("max_rho", phi, B=0.3, rho=1.0, Lam=2.0))
    for beta in (0.1, 0.25, 0.5):
        add(massart_modified(binary_linear_transform("quadratic", 1.0), beta))
        add(massart_modified(comp_sum_transform(1.0, 3), beta))
        add(adversarial_massart_lower("hinge", 0.5, beta))
        add(adversarial_massart_lower("sigmoid", 1.0, beta))
    for lam in (0.5, 1.0, 3.0):
        smax = 1 / (1 + 2 * math.exp(-2 * lam))
        smin = 1 / (1 + 2 * math.exp(2 * lam))
        for lid in ("logistic", "sum_exponential", "gen_ce", "mae"):
            c = bounded_hypothesis_psi(lid, smin, smax)
            out[f"{c.source_tag}|Lam={lam:g}"] = c
        c = bounded_hypothesis_psi("cstnd_exp", Lam_min=lam)
        out[f"{c.source_tag}|Lam={lam:g}"] = c
    return out
