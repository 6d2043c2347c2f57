"""Monte-Carlo risk estimation on the two truncated-normal mixtures.

Nonadversarial mixture on [-1, 1]:
  (1, -1) with mass 1/16, label +1 with x ~ TN(loc sigma, scale sigma) on
  [sigma, 1] with mass 7/16, and the mirror image (labels flipped) of both.
Adversarial mixture:
  (1, -1) and (-1, +1) with mass 1/16 each, label -1 with
  x ~ TN(loc gamma - sigma, scale sigma) on [-1, gamma - sigma] with mass 7/8.

Truncated-normal parameters are pre-truncation (location, scale).  Samples
come from per-shard counter-based streams seeded by (seed, shard); shard
sums are exact (math.fsum) and reduced in shard order, so results do not
depend on thread scheduling.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.stats import truncnorm

from . import losses as L

NONADVERSARIAL_LOSSES = ("quadratic", "logistic", "exponential")
ADVERSARIAL_LOSSES = ("rho_margin", "hinge", "sigmoid")
SIM_COLUMNS = ["sigma", "loss", "risk_target", "se_target", "risk_surrogate", "se_surrogate", "slack"]


class DegenerateTruncation(ValueError):
    pass


def thread_cap(requested: int | None = None) -> int:
    """Worker count: the request (or min(8, cpus)) capped by HCONSIST_THREADS."""
    env = os.environ.get("HCONSIST_THREADS")
    want = requested or min(8, os.cpu_count() or 1)
    if env:
        try:
            return max(1, min(want, int(env)))
        except ValueError:
            raise ValueError(f"HCONSIST_THREADS must be an integer, got {env!r}")
    return max(1, want)


def sim_phi(name: str) -> L.AuxiliaryFunction:
    # sigmoid k=1 and rho=1 are the simulated settings
    if name in ("sigmoid", "sig"):
        return L.sigmoid(1.0)
    if name in ("rho_margin", "rho"):
        return L.rho_margin(1.0)
    return L.make_phi(name)


@dataclass(frozen=True)
class SimulationSpec:
    scenario: str = "nonadversarial"
    sigma: float = 0.1
    gamma: float = 0.1
    sample_count: int = 1_000_000
    seed: int = 0
    shards: int = 16
    hypothesis: tuple = (-5.0, 0.0)
    losses: tuple = ()

    def __post_init__(self):
        if self.scenario not in ("nonadversarial", "adversarial"):
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.sample_count < 10_000:
            raise ValueError("sample_count must be at least 1e4")
        if self.shards < 1:
            raise ValueError("shards must be positive")
        if not self.losses:
            default = ADVERSARIAL_LOSSES if self.adversarial else NONADVERSARIAL_LOSSES
            object.__setattr__(self, "losses", default)
        object.__setattr__(self, "losses", tuple(self.losses))
        self.component()  # validates the truncation interval

    @property
    def adversarial(self) -> bool:
        return self.scenario == "adversarial"

    def component(self):
        """(loc, scale, lower, upper) of the continuous component."""
        s = self.sigma
        if self.adversarial:
            lo, hi, loc = -1.0, self.gamma - s, self.gamma - s
        else:
            lo, hi, loc = s, 1.0, s
        if s >= hi - lo:
            raise DegenerateTruncation(f"sigma={s} is not below the truncation width {hi - lo}")
        return loc, s, lo, hi

    def atoms(self):
        """List of (mass, x, y) point masses plus the continuous components as (mass, sign, y)."""
        if self.adversarial:
            return [(1 / 16, 1.0, -1), (1 / 16, -1.0, 1)], [(7 / 8, 1.0, -1)]
        # the mirrored continuous part is x -> -x with label -1
        return [(1 / 16, 1.0, -1), (1 / 16, -1.0, 1)], [(7 / 16, 1.0, 1), (7 / 16, -1.0, -1)]


@dataclass
class SimResult:
    sigma: float
    losses: list
    risk_target: float
    se_target: float
    risk_surrogate: dict = field(default_factory=dict)
    se_surrogate: dict = field(default_factory=dict)
    slack: dict = field(default_factory=dict)

    def rows(self) -> list:
        return [[self.sigma, name, self.risk_target, self.se_target, self.risk_surrogate[name],
                 self.se_surrogate[name], self.slack[name]] for name in self.losses]


def _pointwise(spec: SimulationSpec, phis, x, y):
    """Target and surrogate losses of h(x) = a x + b, vectorized over samples."""
    a, b = spec.hypothesis
    if spec.adversarial:
        lo = a * x - spec.gamma * abs(a) + b
        hi = a * x + spec.gamma * abs(a) + b
        target = np.where(y > 0, lo <= 0.0, hi >= 0.0).astype(float)
        worst = np.where(y > 0, lo, -hi)
        return target, [np.asarray(phi(worst), dtype=float) for phi in phis]
    h = a * x + b
    target = np.where(y > 0, h < 0.0, h >= 0.0).astype(float)
    return target, [np.asarray(phi(y * h), dtype=float) for phi in phis]


def sample_distribution(spec: SimulationSpec, count: int, rng: np.random.Generator):
    """Draw ``count`` i.i.d. (x, y) pairs; truncated normals by inverse CDF."""
    loc, scale, lo, hi = spec.component()
    points, parts = spec.atoms()
    masses = np.array([m for m, _, _ in points] + [m for m, _, _ in parts])
    comp = np.searchsorted(np.cumsum(masses), rng.random(count), side="right")
    comp = np.minimum(comp, len(masses) - 1)
    u = rng.random(count)
    z = truncnorm.ppf(u, (lo - loc) / scale, (hi - loc) / scale, loc=loc, scale=scale)
    x = np.empty(count)
    y = np.empty(count)
    for k, (_, px, py) in enumerate(points):
        sel = comp == k
        x[sel], y[sel] = px, py
    for j, (_, sign, py) in enumerate(parts):
        sel = comp == len(points) + j
        x[sel], y[sel] = sign * z[sel], py
    return x, y


def _shard_sizes(total: int, shards: int):
    base, extra = divmod(total, shards)
    return [base + (1 if k < extra else 0) for k in range(shards)]


def _shard_stream(seed: int, shard: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, shard])))


def _run_shard(spec: SimulationSpec, shard: int, count: int):
    rng = _shard_stream(spec.seed, shard)
    x, y = sample_distribution(spec, count, rng)
    target, surr = _pointwise(spec, [sim_phi(n) for n in spec.losses], x, y)
    sums = []
    for v in [target] + surr:
        sums.append((math.fsum(v.tolist()), math.fsum((v * v).tolist())))
    return sums


def _moments(s1: float, s2: float, n: int):
    mean = s1 / n
    var = max(s2 - n * mean * mean, 0.0) / (n - 1)
    return mean, math.sqrt(var / n)


def estimate_risks(spec: SimulationSpec, threads: int | None = None) -> SimResult:
    sizes = _shard_sizes(spec.sample_count, spec.shards)
    workers = min(spec.shards, thread_cap(threads))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(lambda k: _run_shard(spec, k, sizes[k]), range(spec.shards)))
    stats = []
    for j in range(len(spec.losses) + 1):
        s1 = math.fsum(p[j][0] for p in parts)
        s2 = math.fsum(p[j][1] for p in parts)
        stats.append(_moments(s1, s2, spec.sample_count))
    res = SimResult(spec.sigma, list(spec.losses), stats[0][0], stats[0][1])
    for name, (m, se) in zip(spec.losses, stats[1:]):
        res.risk_surrogate[name] = m
        res.se_surrogate[name] = se
        res.slack[name] = m - res.risk_target
    return res


def _tn_expectation(f, loc, scale, lo, hi):
    """E[f(X)] for X ~ TN(loc, scale) on [lo, hi], integrated on the standard scale."""
    a, b = (lo - loc) / scale, (hi - loc) / scale
    # mass beyond 40 sd from the mode of the window is below double precision
    a_eff, b_eff = max(a, min(b, 0.0) - 40.0), min(b, max(a, 0.0) + 40.0)
    dens = lambda z: math.exp(-0.5 * z * z) * f(loc + scale * z)
    num = integrate.quad(dens, a_eff, b_eff, epsabs=1e-14, epsrel=1e-12, limit=400)[0]
    den = integrate.quad(lambda z: math.exp(-0.5 * z * z), a_eff, b_eff, epsabs=1e-14, epsrel=1e-12, limit=400)[0]
    return num / den


def population_risks(spec: SimulationSpec) -> dict:
    """Quadrature risks {"target": R, loss: R_loss}; the oracle for the Monte-Carlo estimates."""
    loc, scale, lo, hi = spec.component()
    points, parts = spec.atoms()
    phis = [sim_phi(n) for n in spec.losses]

    def losses_at(x, y):
        t, s = _pointwise(spec, phis, np.array([x]), np.array([float(y)]))
        return [float(t[0])] + [float(v[0]) for v in s]

    k = len(phis) + 1
    terms = [[] for _ in range(k)]
    for m, x, y in points:
        for j, v in enumerate(losses_at(x, y)):
            terms[j].append(m * v)
    for m, sign, y in parts:
        for j in range(k):
            f = lambda z, j=j, sign=sign, y=y: losses_at(sign * z, y)[j]
            terms[j].append(m * _tn_expectation(f, loc, scale, lo, hi))
    out = {"target": math.fsum(terms[0])}
    for name, tj in zip(spec.losses, terms[1:]):
        out[name] = math.fsum(tj)
    return out


def sweep_sigma(spec: SimulationSpec, sigmas, threads: int | None = None) -> list:
    """One SimResult per sigma, same seed and shards."""
    sigmas = list(sigmas)
    if any(s <= 0 for s in sigmas):
        raise ValueError("sigmas must be positive")
    if any(b > a for a, b in zip(sigmas, sigmas[1:])):
        raise ValueError("sigmas must be descending")
    out = []
    for s in sigmas:
        sub = SimulationSpec(spec.scenario, s, spec.gamma, spec.sample_count, spec.seed, spec.shards,
                             spec.hypothesis, spec.losses)
        out.append(estimate_risks(sub, threads))
    return out


def discretize(spec: SimulationSpec, support: int = 10_000):
    """Finite-support stand-in: each continuous component becomes ``support`` equal-mass
    points at truncated-normal quantile midpoints; labels are deterministic."""
    from .risk import ConditionalPoint, DiscreteDistribution
    loc, scale, lo, hi = spec.component()
    points, parts = spec.atoms()
    u = (np.arange(support) + 0.5) / support
    z = truncnorm.ppf(u, (lo - loc) / scale, (hi - loc) / scale, loc=loc, scale=scale)
    weights, pts = [], []

    def add(m, x, y):
        weights.append(m)
        pts.append(ConditionalPoint.binary(1.0 if y > 0 else 0.0, abs(float(x)), float(x), len(pts)))

    for m, x, y in points:
        add(m, x, y)
    for m, sign, y in parts:
        for zi in z:
            add(m / support, sign * zi, y)
    w = np.array(weights)
    return DiscreteDistribution(w / w.sum(), tuple(pts))
