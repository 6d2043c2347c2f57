"""Conditional risks, best-in-class conditional risks and minimizability gaps.

Binary conventions: a binary score is a scalar h(x); the probability vector
of a point is (eta, 1 - eta) with eta = P(y = +1 | x).  Adversarial binary
losses take the pair (inf, sup) of the score over the perturbation ball.
Multi-class argmax ties go to the highest index.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import losses as L
from .optim import golden_min


class NoClosedForm(LookupError):
    """No registered closed form for a (loss, class) pair."""


class UnboundedClass(ValueError):
    """The brute-force oracle needs a bounded score range."""


# losses as risk-engine objects ----------------------------------------------------

@dataclass(frozen=True)
class Loss:
    kind: str
    phi: Optional[L.AuxiliaryFunction] = None
    tau: Optional[float] = None

    KINDS = ("zero_one", "margin", "comp_sum", "constrained", "max", "adv_zero_one", "sup_margin")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}")

    @property
    def name(self) -> str:
        if self.kind == "comp_sum":
            return f"comp_sum(tau={self.tau:g})"
        if self.phi is not None:
            return f"{self.kind}:{self.phi.id}"
        return self.kind

    @property
    def adversarial(self) -> bool:
        return self.kind in ("adv_zero_one", "sup_margin")

    def per_label(self, scores) -> np.ndarray:
        """Loss for every label, ordered like the probability vector.

        ``scores`` may carry leading batch axes; the last axis is the score
        vector (length 1 for binary, 2 = (inf, sup) for adversarial binary).
        """
        s = np.asarray(scores, dtype=float)
        if self.kind in ("margin", "zero_one") and s.shape[-1] == 1:
            h = s[..., 0]
            if self.kind == "margin":
                return np.stack([self.phi(h), self.phi(-h)], axis=-1)
            pos = (h >= 0).astype(float)
            return np.stack([1.0 - pos, pos], axis=-1)
        if self.kind == "adv_zero_one":
            lo, hi = s[..., 0], s[..., 1]
            return np.stack([(lo <= 0).astype(float), (hi >= 0).astype(float)], axis=-1)
        if self.kind == "sup_margin":
            lo, hi = s[..., 0], s[..., 1]
            return np.stack([self.phi(lo), self.phi(-hi)], axis=-1)
        n = s.shape[-1]
        if self.kind == "zero_one":
            pred = n - 1 - np.argmax(s[..., ::-1], axis=-1)
            return (np.arange(n) != pred[..., None]).astype(float)
        if self.kind == "comp_sum":
            shifted = s - s.max(axis=-1, keepdims=True)
            e = np.exp(shifted)
            with np.errstate(divide="ignore"):
                u = e.sum(axis=-1, keepdims=True) / e - 1.0
            return L.phi_tau(self.tau, u)
        if self.kind == "constrained":
            v = self.phi(-s)
            return v.sum(axis=-1, keepdims=True) - v
        if self.kind == "max":
            diff = s[..., :, None] - s[..., None, :]
            vals = self.phi(diff)
            idx = np.arange(n)
            vals[..., idx, idx] = -np.inf
            return vals.max(axis=-1)
        raise ValueError(f"scores of shape {s.shape} do not fit loss {self.name}")

    # convenience constructors
    @classmethod
    def zero_one(cls):
        return cls("zero_one")

    @classmethod
    def margin(cls, phi):
        return cls("margin", phi=phi)

    @classmethod
    def comp_sum(cls, tau):
        return cls("comp_sum", tau=float(tau))

    @classmethod
    def constrained(cls, phi):
        return cls("constrained", phi=phi)

    @classmethod
    def max_loss(cls, phi):
        return cls("max", phi=phi)

    @classmethod
    def adv_zero_one(cls):
        return cls("adv_zero_one")

    @classmethod
    def sup_margin(cls, phi):
        return cls("sup_margin", phi=phi)


# hypothesis classes -------------------------------------------------------------

@dataclass(frozen=True)
class HypothesisClassSpec:
    variant: str
    n: int = 2
    W: float = 1.0
    B: float = 1.0
    Lam: float = 1.0
    p: float = 2.0
    Lam_bound: float = 1.0
    gamma: float = 0.0

    VARIANTS = ("AllMeasurable", "Linear", "OneLayerNN", "BoundedSymmetric", "CompleteSymmetric")

    def __post_init__(self):
        if self.variant not in self.VARIANTS:
            raise ValueError(f"unknown class variant {self.variant!r}")
        for k in ("W", "B", "Lam", "Lam_bound"):
            if getattr(self, k) <= 0:
                raise ValueError(f"{k} must be positive")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")

    @classmethod
    def linear(cls, W=1.0, B=1.0, p=2.0, gamma=0.0):
        return cls("Linear", W=W, B=B, p=p, gamma=gamma)

    @classmethod
    def nn(cls, Lam=1.0, W=1.0, B=1.0, p=2.0):
        return cls("OneLayerNN", Lam=Lam, W=W, B=B, p=p)

    @classmethod
    def bounded(cls, Lam_bound, n):
        return cls("BoundedSymmetric", n=n, Lam_bound=Lam_bound)

    @classmethod
    def complete(cls, n=2):
        return cls("CompleteSymmetric", n=n)

    @classmethod
    def all_measurable(cls, n=2):
        return cls("AllMeasurable", n=n)

    def radius(self, norm_x: float = 0.0) -> float:
        """Per-coordinate score bound at a point with the given norm."""
        if self.variant == "Linear":
            return self.W * norm_x + self.B
        if self.variant == "OneLayerNN":
            return self.Lam * (self.W * norm_x + self.B)
        if self.variant == "BoundedSymmetric":
            return self.Lam_bound
        return math.inf

    def lambda_min(self) -> float:
        return self.radius(0.0)

    def s_max(self) -> float:
        lam = self.lambda_min()
        return 1.0 / (1.0 + (self.n - 1) * math.exp(-2.0 * lam)) if math.isfinite(lam) else 1.0

    def s_min(self) -> float:
        lam = self.lambda_min()
        return 1.0 / (1.0 + (self.n - 1) * math.exp(2.0 * lam)) if math.isfinite(lam) else 0.0

    def adv_radius(self, norm_x: float) -> float:
        """Largest attainable inf-over-ball score for a linear class."""
        if self.variant != "Linear":
            raise NoClosedForm("adversarial closed forms are registered for Linear only")
        return self.W * max(norm_x, self.gamma) - self.gamma * self.W + self.B


# distributions ------------------------------------------------------------------

@dataclass(frozen=True)
class ConditionalPoint:
    prob: np.ndarray
    norm_of_x: float = 0.0
    x: Optional[float] = None
    point_id: int = 0

    def __post_init__(self):
        p = np.asarray(self.prob, dtype=float)
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("probabilities must be nonnegative and sum to one")
        object.__setattr__(self, "prob", p)

    @classmethod
    def binary(cls, eta, norm_of_x=0.0, x=None, point_id=0):
        return cls(np.array([eta, 1.0 - eta]), norm_of_x, x, point_id)

    @property
    def eta(self) -> float:
        return float(self.prob[0])

    @property
    def n(self) -> int:
        return int(self.prob.shape[0])


@dataclass(frozen=True)
class DiscreteDistribution:
    weights: np.ndarray
    points: tuple

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be positive and sum to one")
        if len(self.points) != w.shape[0]:
            raise ValueError("one weight per point required")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "points", tuple(self.points))

    def __len__(self):
        return len(self.points)

    def to_text(self) -> str:
        has_x = any(pt.x is not None for pt in self.points)
        n = self.points[0].n
        head = ["weight", "norm_of_x"] + (["x"] if has_x else []) + [f"p{i + 1}" for i in range(n)]
        rows = [",".join(head)]
        for w, pt in zip(self.weights, self.points):
            vals = [w, pt.norm_of_x] + ([pt.x if pt.x is not None else 0.0] if has_x else []) + list(pt.prob)
            rows.append(",".join(repr(float(v)) for v in vals))
        return "\n".join(rows) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "DiscreteDistribution":
        lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
        head = lines[0].split(",")
        if head[:2] != ["weight", "norm_of_x"]:
            raise ValueError("distribution header must start with weight,norm_of_x")
        has_x = len(head) > 2 and head[2] == "x"
        weights, pts = [], []
        for i, ln in enumerate(lines[1:]):
            vals = [float(v) for v in ln.split(",")]
            if len(vals) != len(head):
                raise ValueError(f"row {i + 1} has {len(vals)} fields, expected {len(head)}")
            k = 3 if has_x else 2
            weights.append(vals[0])
            pts.append(ConditionalPoint(np.array(vals[k:]), vals[1], vals[2] if has_x else None, i))
        w = np.array(weights)
        return cls(w / w.sum() if abs(w.sum() - 1) <= 1e-12 else w, tuple(pts))


@dataclass(frozen=True)
class GapReport:
    best_in_class_risk: float
    expected_pointwise_infimum: float
    gap: float


# risks -----------------------------------------------------------------------------

def conditional_risk(loss: Loss, scores, point: ConditionalPoint):
    vals = loss.per_label(np.atleast_1d(np.asarray(scores, dtype=float)))
    if vals.shape[-1] != point.n:
        raise ValueError(f"score/label dimension mismatch: {vals.shape[-1]} vs {point.n}")
    w = point.prob
    # zero-probability labels contribute nothing even where the loss is infinite
    terms = np.where(w > 0, np.where(w > 0, vals, 0.0) * w, 0.0)
    return terms.sum(axis=-1)


def generalization_risk(loss: Loss, scores_per_point: Sequence, dist: DiscreteDistribution) -> float:
    if len(scores_per_point) != len(dist):
        raise ValueError("one score vector per support point required")
    vals = [float(conditional_risk(loss, s, pt)) for s, pt in zip(scores_per_point, dist.points)]
    return math.fsum(w * v for w, v in zip(dist.weights, vals))


def _xlogx(p):
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)


def _binary_margin_cstar(phi: L.AuxiliaryFunction, t: float, R: float) -> float:
    hi, lo = max(t, 1.0 - t), min(t, 1.0 - t)
    a = abs(2.0 * t - 1.0)
    pid = phi.id
    if pid == "hinge":
        return 1.0 - a * min(R, 1.0)
    if pid == "sigmoid":
        return 1.0 - a * math.tanh(phi.param("k") * R)
    if pid == "rho_margin":
        rho = phi.param("rho")
        return lo + hi * (1.0 - min(R, rho) / rho)
    if pid == "logistic2":
        c = L.LN2 if phi.log_base == "two" else 1.0
        logit = math.inf if lo == 0 else math.log(hi / lo)
        if logit <= R:
            return -float(_xlogx(t) + _xlogx(1.0 - t)) / c
        return (hi * math.log1p(math.exp(-R)) + lo * (R + math.log1p(math.exp(-R)))) / c
    if pid == "exponential":
        logit = math.inf if lo == 0 else math.log(hi / lo)
        if 0.5 * logit <= R:
            return 2.0 * math.sqrt(t * (1.0 - t))
        return hi * math.exp(-R) + lo * math.exp(R)
    if pid == "quadratic":
        if a <= R:
            return 4.0 * t * (1.0 - t)
        return hi * (1.0 - R) ** 2 + lo * (1.0 + R) ** 2
    raise NoClosedForm(f"no closed form for margin loss {pid}")


def comp_sum_cstar_complete(tau: float, p) -> float:
    """Best-in-class conditional comp-sum risk over a complete symmetric class."""
    p = np.asarray(p, dtype=float)
    if abs(tau - 1.0) < 1e-12:
        return -float(_xlogx(p).sum())
    if abs(tau - 2.0) < 1e-12:
        return 1.0 - float(p.max())
    if tau > 2.0:
        # loss is concave in the softmax mass, so the infimum sits at a vertex
        return (1.0 - float(p.max())) / (tau - 1.0)
    r = 1.0 / (2.0 - tau)
    pos = p[p > 0]
    # (sum p^r)^(1/r) via logs for stability near tau = 2
    lg = np.log(np.sum(np.exp(r * np.log(pos) - r * np.log(pos.max())))) / r + np.log(pos.max())
    return float(np.expm1(lg) / (1.0 - tau)) if tau != 1 else 0.0


def comp_sum_cstar_deterministic(tau: float, Lam: float, n: int) -> float:
    return float(L.phi_tau(tau, math.exp(-2.0 * Lam) * (n - 1)))


def best_in_class_conditional(loss: Loss, cls: HypothesisClassSpec, point: ConditionalPoint) -> float:
    symmetric = cls.variant in HypothesisClassSpec.VARIANTS
    if loss.kind == "zero_one" and symmetric:
        return 1.0 - float(point.prob.max())
    if loss.kind == "margin" and point.n == 2 and cls.variant in ("AllMeasurable", "CompleteSymmetric", "Linear", "OneLayerNN", "BoundedSymmetric"):
        return _binary_margin_cstar(loss.phi, point.eta, cls.radius(point.norm_of_x))
    if loss.kind == "adv_zero_one" and cls.variant == "Linear":
        separable = max(cls.adv_radius(point.norm_of_x), cls.B) > 0
        return min(point.eta, 1.0 - point.eta) if separable else 1.0
    if loss.kind == "sup_margin" and cls.variant == "Linear" and loss.phi.id == "rho_margin":
        rho = loss.phi.param("rho")
        R = cls.adv_radius(point.norm_of_x)
        t = point.eta
        return min(t, 1 - t) + max(t, 1 - t) * (1.0 - min(R, rho) / rho)
    if loss.kind == "comp_sum" and cls.variant in ("CompleteSymmetric", "AllMeasurable"):
        return comp_sum_cstar_complete(loss.tau, point.prob)
    if loss.kind == "comp_sum" and cls.variant == "BoundedSymmetric":
        if np.count_nonzero(point.prob) == 1:
            return comp_sum_cstar_deterministic(loss.tau, cls.Lam_bound, point.n)
        raise NoClosedForm("bounded comp-sum closed form needs a deterministic point")
    raise NoClosedForm(f"no closed form for ({loss.name}, {cls.variant})")


# brute-force oracle --------------------------------------------------------------------

def _adv_pair(w, b, x, gamma):
    base = w * x + b
    r = gamma * np.abs(w)
    return np.stack([base - r, base + r], axis=-1)


def brute_force_conditional_oracle(loss: Loss, cls: HypothesisClassSpec, point: ConditionalPoint,
                                   grid_resolution: int = 4096, radius: Optional[float] = None,
                                   max_grid_points: int = 2_000_000) -> float:
    """Grid search over the score box followed by golden-section refinement.

    Adversarial binary losses search the (w, b) box of a 1-D linear class at
    the point's x.  ``radius`` overrides the class range (required for
    unbounded classes).
    """
    if loss.adversarial:
        if cls.variant != "Linear" or point.x is None:
            raise UnboundedClass("adversarial oracle needs a Linear class and a 1-D x")
        x, g = float(point.x), cls.gamma
        f2 = lambda w, b: conditional_risk(loss, _adv_pair(w, b, x, g), point)
        m = int(min(grid_resolution, math.isqrt(max_grid_points)))
        ws = np.linspace(-cls.W, cls.W, m)
        bs = np.linspace(-cls.B, cls.B, m)
        Wg, Bg = np.meshgrid(ws, bs, indexing="ij")
        vals = f2(Wg, Bg)
        i, j = np.unravel_index(np.argmin(vals), vals.shape)
        best = float(vals[i, j])
        w0, b0 = ws[i], bs[j]
        dw, db = 2 * cls.W / (m - 1), 2 * cls.B / (m - 1)
        for _ in range(4):
            bw, fw = golden_min(lambda w: f2(w, b0), [max(-cls.W, w0 - dw)], [min(cls.W, w0 + dw)])
            w0 = float(bw[0])
            bb, fb = golden_min(lambda b: f2(w0, b), [max(-cls.B, b0 - db)], [min(cls.B, b0 + db)])
            b0 = float(bb[0])
            best = min(best, float(fw[0]), float(fb[0]))
        return best

    R = cls.radius(point.norm_of_x) if radius is None else radius
    if not math.isfinite(R):
        raise UnboundedClass(f"{cls.variant} has unbounded scores; pass a surrogate radius")
    binary = loss.kind in ("margin",) or (loss.kind == "zero_one" and point.n == 2)
    dim = 1 if binary else point.n
    f = lambda S: conditional_risk(loss, S, point)
    m = int(min(grid_resolution, max(3, int(round(max_grid_points ** (1.0 / dim))))))
    if m % 2 == 0:
        m += 1  # keep the origin on the grid
    axis = np.linspace(-R, R, m)
    mesh = np.stack(np.meshgrid(*([axis] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
    vals = f(mesh)
    k = int(np.argmin(vals))
    best = float(vals[k])
    if loss.kind == "zero_one":
        return best  # piecewise constant: the grid is exact up to ties
    x0 = mesh[k].copy()
    step = 2 * R / (m - 1)
    if dim > 1:
        # zoom: 5-point local grid per axis, halving the step when the centre wins
        offs = np.stack(np.meshgrid(*([np.arange(-2, 3)] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
        for _ in range(400):
            cand = np.clip(x0 + step * offs, -R, R)
            v = f(cand)
            j = int(np.argmin(v))
            if v[j] < best:
                x0, best = cand[j].copy(), float(v[j])
            else:
                step *= 0.5
                if step < 1e-10 * max(R, 1.0):
                    break
    # one golden-section pass per coordinate
    for c in range(dim):
        def fc(v, c=c):
            S = np.repeat(x0[None, :], np.size(v), axis=0)
            S[:, c] = np.ravel(v)
            return f(S)
        lo, hi = max(-R, x0[c] - step), min(R, x0[c] + step)
        xc, fv = golden_min(fc, [lo], [hi])
        if fv[0] <= best:
            x0[c], best = float(xc[0]), float(fv[0])
    return best


# minimizability gaps ------------------------------------------------------------------

def _expected_cstar(loss, cls, dist):
    return math.fsum(w * best_in_class_conditional(loss, cls, pt) for w, pt in zip(dist.weights, dist.points))


def _support_arrays(dist: DiscreteDistribution):
    if any(pt.x is None for pt in dist.points):
        raise ValueError("linear_1d_grid needs 1-D x on every point")
    X = np.array([float(np.ravel(pt.x)[0]) for pt in dist.points])
    return X, np.stack([pt.prob for pt in dist.points]), np.asarray(dist.weights, dtype=float)


def _linear_risk(loss, cls, arrays, w, b, chunk=256):
    X, P, wt = arrays
    w = np.asarray(w, dtype=float)[..., None]
    b = np.asarray(b, dtype=float)[..., None]
    total = np.zeros(np.broadcast(w, b).shape[:-1])
    for k in range(0, len(X), chunk):
        x, pk, wk = X[k:k + chunk], P[k:k + chunk], wt[k:k + chunk]
        S = _adv_pair(w, b, x, cls.gamma) if loss.adversarial else (w * x + b)[..., None]
        vals = loss.per_label(S)
        terms = np.where(pk > 0, np.where(pk > 0, vals, 0.0) * pk, 0.0).sum(axis=-1)
        total = total + terms @ wk
    return total


def linear_1d_risk(loss: Loss, cls: HypothesisClassSpec, dist: DiscreteDistribution, w, b):
    """Risk of the 1-D linear model h(x) = w x + b (arrays broadcast), batched over support points."""
    return _linear_risk(loss, cls, _support_arrays(dist), w, b)


def linear_1d_minimize(loss: Loss, cls: HypothesisClassSpec, dist: DiscreteDistribution, resolution: int = 401):
    arrays = _support_arrays(dist)
    ws = np.linspace(-cls.W, cls.W, resolution)
    bs = np.linspace(-cls.B, cls.B, resolution)
    Wg, Bg = np.meshgrid(ws, bs, indexing="ij")
    vals = _linear_risk(loss, cls, arrays, Wg, Bg)
    i, j = np.unravel_index(np.argmin(vals), vals.shape)
    best, w0, b0 = float(vals[i, j]), ws[i], bs[j]
    dw, db = 2 * cls.W / (resolution - 1), 2 * cls.B / (resolution - 1)
    for _ in range(6):
        bw, fw = golden_min(lambda w: _linear_risk(loss, cls, arrays, w, b0), [max(-cls.W, w0 - dw)], [min(cls.W, w0 + dw)])
        if fw[0] <= best:
            w0, best = float(bw[0]), float(fw[0])
        bb, fb = golden_min(lambda b: _linear_risk(loss, cls, arrays, w0, b), [max(-cls.B, b0 - db)], [min(cls.B, b0 + db)])
        if fb[0] <= best:
            b0, best = float(bb[0]), float(fb[0])
    return best, (w0, b0)


def minimizability_gap(loss: Loss, cls: HypothesisClassSpec, dist: DiscreteDistribution,
                       mode: str = "decoupled", resolution: int = 401,
                       R_star_tau0: Optional[float] = None) -> GapReport:
    if mode == "decoupled":
        e = _expected_cstar(loss, cls, dist)
        return GapReport(e, e, 0.0)
    if mode == "linear_1d_grid":
        if cls.variant != "Linear":
            raise ValueError("linear_1d_grid mode needs a Linear class")
        best, _ = linear_1d_minimize(loss, cls, dist, resolution)
        e = _expected_cstar(loss, cls, dist)
        return GapReport(best, e, max(best - e, 0.0) if best - e > -1e-9 else best - e)
    if mode == "deterministic_bounded_formula":
        if loss.kind != "comp_sum" or cls.variant != "BoundedSymmetric":
            raise ValueError("deterministic_bounded_formula needs comp-sum and BoundedSymmetric")
        c0 = math.exp(-2.0 * cls.Lam_bound) * (cls.n - 1)
        r0 = c0 if R_star_tau0 is None else R_star_tau0
        if r0 < c0 - 1e-12:
            raise ValueError("R*_{tau=0} must be at least e^{-2 Lambda}(n-1)")
        best = float(L.phi_tau(loss.tau, r0))
        e = float(L.phi_tau(loss.tau, c0))
        return GapReport(best, e, best - e)
    raise ValueError(f"unsupported mode {mode!r}")


def gap_upper_bounds(Lam: float, n: int, R_star_tau0: float, taus: Sequence[float]) -> np.ndarray:
    c0 = math.exp(-2.0 * Lam) * (n - 1)
    if R_star_tau0 < c0 - 1e-12:
        raise ValueError("R*_{tau=0} must be at least e^{-2 Lambda}(n-1)")
    return np.array([float(L.phi_tau(t, R_star_tau0) - L.phi_tau(t, c0)) for t in taus])


def gap_ordering_check(Lam: float, n: int, R_star_tau0: float, taus: Sequence[float]):
    """Return (gaps, ordered_flags, margins) for increasing taus."""
    taus = list(taus)
    if any(b < a for a, b in zip(taus, taus[1:])):
        raise ValueError("taus must be nondecreasing")
    gaps = gap_upper_bounds(Lam, n, R_star_tau0, taus)
    margins = gaps[:-1] - gaps[1:]
    flags = margins >= -1e-12
    return gaps, flags, margins
