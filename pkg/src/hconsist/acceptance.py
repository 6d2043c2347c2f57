"""Acceptance criteria, shared by the ``selftest`` command and the test suite.

Each criterion returns a CriterionResult; nothing here loosens a
tolerance to make a check pass.  Criteria that cannot hold report the
measured values in ``detail``.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import growth as G
from . import losses as L
from . import simulator as SIM
from . import solver as S
from . import transforms as TR
from . import verifier as V
from .risk import (ConditionalPoint, HypothesisClassSpec, Loss, best_in_class_conditional,
                   brute_force_conditional_oracle, gap_ordering_check)

SIGMAS = (0.3, 0.1, 0.03, 0.01, 0.003)


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"criterion {self.number} {self.name}: {status} ({self.detail}) [{self.seconds:.1f}s]"


# 1 -------------------------------------------------------------------------------

def table_rows(n: int = 4, q: float = 0.5):
    """(row id, solver closure, closed-form curve) for the comp-sum and constrained tables."""
    rows = []
    for pid in ("neg_log", "inv_minus_one", "gen_ce", "one_minus", "squared"):
        phi = L.gen_ce(q) if pid == "gen_ce" else L.make_phi(pid)
        rows.append((f"comp/{pid}", lambda t, phi=phi: S.solve_comp_transform(phi, n, t),
                     TR.multiclass_table_transform("comp_sum_phi", pid, n=n, q=q)))
    for pid, phi in (("exponential", L.exponential()), ("hinge", L.hinge()),
                     ("sq_hinge", L.quadratic()), ("squared", L.squared())):
        rows.append((f"cstnd/{pid}", lambda t, phi=phi: S.solve_cstnd_transform(phi, n, t),
                     TR.multiclass_table_transform("cstnd_phi", pid)))
    return rows


def criterion_catalog_solver():
    t = np.linspace(0.0, 1.0, 51)
    start = time.perf_counter()
    worst = {}
    for rid, solve, curve in table_rows():
        worst[rid] = float(np.max(np.abs(np.asarray(solve(t)) - curve(t))))
    elapsed = time.perf_counter() - start
    top = max(worst, key=worst.get)
    ok = len(worst) == 9 and max(worst.values()) <= 1e-6 and elapsed <= 30.0
    return ok, f"9 rows, max |diff| {worst[top]:.2e} at {top}, {elapsed:.1f}s"


# 2 -------------------------------------------------------------------------------

def criterion_comp_sum_values():
    checks = [
        ("T1(1)", TR.comp_sum_T(1.0, 2, 1.0), math.log(2.0), 1e-9),
        ("T0(0.6)", TR.comp_sum_T(0.0, 2, 0.6), 0.2, 1e-9),
        ("T2(0.5), n=10", TR.comp_sum_T(2.0, 10, 0.5), 0.05, 1e-12),
    ]
    errs = [(name, abs(float(v) - ref), tol) for name, v, ref, tol in checks]
    ok = all(e <= tol for _, e, tol in errs)
    return ok, ", ".join(f"{name} err {e:.1e}" for name, e, _ in errs)


# 3 -------------------------------------------------------------------------------

def criterion_tightness():
    betas = np.round(np.arange(1, 10) / 10, 10)
    comp = max(abs(s - T) for tau in (0.0, 0.5, 1.0) for b in betas
               for _, s, T in [V.tightness_comp_sum(tau, 4, float(b))])
    binary = {lid: max(V.tightness_binary(lid, float(t))[2] for t in betas)
              for lid in ("hinge", "sigmoid", "rho_margin")}
    low = min(V.tightness_binary(lid, float(t))[2] for lid in binary for t in betas)
    ok = comp <= 1e-6 and max(binary.values()) <= 1e-4 and low >= -1e-12
    return ok, (f"comp-sum max |excess - T| {comp:.1e}; binary max slack "
                + ", ".join(f"{k} {v:.1e}" for k, v in binary.items()))


# 4 -------------------------------------------------------------------------------

def criterion_witnesses():
    pairs = {
        "adversarial/hinge": V.negative_witness_adversarial().pair(),
        "adversarial/sigmoid": V.negative_witness_adversarial(phi=L.sigmoid(1.0)).pair(),
        "max-loss/hinge": V.negative_witness_max_loss(3).pair(),
        "max-loss/exponential": V.negative_witness_max_loss(3, L.exponential()).pair(),
    }
    err = max(max(abs(a - 0.5), abs(b)) for a, b in pairs.values())
    return err <= 1e-12, f"max deviation from (0.5, 0) {err:.1e} over {len(pairs)} witnesses"


# 5 -------------------------------------------------------------------------------

def criterion_growth():
    fits = G.dichotomy(1e-4, 1e-2, 41)
    bad = []
    for cid, (fit, expect) in fits.items():
        tol = 0.02 if expect == 2.0 else 0.001
        if abs(fit.slope - expect) > tol:
            bad.append(f"{cid} slope {fit.slope:.4f}")
        if expect == 2.0 and fit.C / fit.c > 1.5:
            bad.append(f"{cid} C/c {fit.C / fit.c:.3f}")
    smooth = [f.slope for f, e in fits.values() if e == 2.0]
    poly = [f.slope for f, e in fits.values() if e == 1.0]
    detail = f"smooth slopes [{min(smooth):.4f}, {max(smooth):.4f}], polyhedral [{min(poly):.5f}, {max(poly):.5f}]"
    return not bad, detail + ("; " + "; ".join(bad) if bad else "")


# 6 -------------------------------------------------------------------------------

def criterion_simulation(samples: int = 1_000_000, seed: int = 0, threads: int | None = None):
    start = time.perf_counter()
    k_se = 4.0 * max(1.0, math.sqrt(1_000_000 / samples))
    issues, final = [], {}
    for scenario in ("nonadversarial", "adversarial"):
        for sigma in SIGMAS:
            spec = SIM.SimulationSpec(scenario, sigma, sample_count=samples, seed=seed)
            mc = SIM.estimate_risks(spec, threads)
            pop = SIM.population_risks(spec)
            if abs(mc.risk_target - pop["target"]) > k_se * mc.se_target:
                issues.append(f"{scenario} sigma={sigma} target MC off by >{k_se:g} SE")
            for name in spec.losses:
                if pop["target"] > pop[name] + 1e-12:
                    issues.append(f"{scenario}/{name} sigma={sigma} population bound violated")
                if abs(mc.risk_surrogate[name] - pop[name]) > k_se * mc.se_surrogate[name]:
                    issues.append(f"{scenario}/{name} sigma={sigma} MC off by >{k_se:g} SE")
                if sigma == SIGMAS[-1]:
                    final[name] = pop[name] - pop["target"]
    elapsed = time.perf_counter() - start
    for name, s in final.items():
        if s > 0.02:
            issues.append(f"{name} slack {s:.4f} > 0.02 at sigma={SIGMAS[-1]}")
    if elapsed > 180:
        issues.append(f"runtime {elapsed:.0f}s > 180s")
    slacks = ", ".join(f"{k} {v:.4f}" for k, v in final.items())
    return not issues, f"slack at sigma={SIGMAS[-1]}: {slacks}" + ("; " + "; ".join(issues) if issues else "")


# 7 -------------------------------------------------------------------------------

def criterion_gap_ordering(seed: int = 0):
    rng = np.random.default_rng(seed)
    taus = (0.0, 1.0, 1.5, 2.0)
    worst = math.inf
    for _ in range(20):
        lam = float(rng.uniform(0.2, 3.0))
        n = int(rng.choice([3, 10, 100]))
        c0 = math.exp(-2 * lam) * (n - 1)
        r = c0 + float(rng.uniform(0.01, 2.0))
        _, flags, margins = gap_ordering_check(lam, n, r, taus)
        if not np.all(margins > 0):
            return False, f"ordering fails at Lam={lam:.3f}, n={n}, R*={r:.3f}"
        worst = min(worst, float(margins.min()))
    return True, f"20 tuples strictly ordered, smallest margin {worst:.3e}"


# 8 -------------------------------------------------------------------------------

def oracle_pairs():
    """(pair id, loss, class, point sampler, oracle kwargs) for every registered closed form."""
    lin = HypothesisClassSpec.linear(W=1.0, B=0.5)
    nn = HypothesisClassSpec.nn(Lam=1.5, W=1.0, B=0.5)
    adv = HypothesisClassSpec.linear(W=1.0, B=0.5, gamma=0.2)

    def binary_point(rng):
        x = float(rng.uniform(-2.0, 2.0))
        return ConditionalPoint.binary(float(rng.uniform(0.0, 1.0)), abs(x), x)

    def simplex_point(rng, n=3):
        p = rng.dirichlet(np.ones(n))
        return ConditionalPoint(p / p.sum())

    def one_hot(rng, n=3):
        p = np.zeros(n)
        p[rng.integers(n)] = 1.0
        return ConditionalPoint(p)

    pairs = [("zero-one/Linear", Loss.zero_one(), lin, binary_point, {}),
             ("zero-one/CompleteSymmetric n=3", Loss.zero_one(), HypothesisClassSpec.complete(3), simplex_point,
              {"radius": 5.0, "max_grid_points": 200_000}),
             ("adv-zero-one/Linear", Loss.adv_zero_one(), adv, binary_point, {"max_grid_points": 250_000})]
    phis = {"hinge": L.hinge(), "logistic": L.logistic2(), "exponential": L.exponential(),
            "quadratic": L.quadratic(), "sigmoid": L.sigmoid(1.0), "rho_margin": L.rho_margin(0.5)}
    for lid, phi in phis.items():
        for cname, cls in (("Linear", lin), ("OneLayerNN", nn)):
            pairs.append((f"{lid}/{cname}", Loss.margin(phi), cls, binary_point, {"grid_resolution": 10_001}))
    pairs.append(("sup-rho/Linear", Loss.sup_margin(L.rho_margin(1.0)), adv, binary_point, {"max_grid_points": 250_000}))
    for tau in (0.0, 0.5, 1.0, 1.5, 2.0, 3.0):
        pairs.append((f"comp-sum tau={tau:g}/CompleteSymmetric n=3", Loss.comp_sum(tau),
                      HypothesisClassSpec.complete(3), simplex_point, {"radius": 30.0, "max_grid_points": 200_000}))
    for tau in (0.0, 1.0, 2.0):
        pairs.append((f"comp-sum tau={tau:g}/BoundedSymmetric deterministic", Loss.comp_sum(tau),
                      HypothesisClassSpec.bounded(1.0, 3), one_hot, {"max_grid_points": 200_000}))
    return pairs


def criterion_oracle(seed: int = 0, points: int = 50):
    rng = np.random.default_rng(seed)
    worst, where = 0.0, ""
    for pid, loss, cls, sampler, kw in oracle_pairs():
        for _ in range(points):
            pt = sampler(rng)
            err = abs(brute_force_conditional_oracle(loss, cls, pt, **kw) - best_in_class_conditional(loss, cls, pt))
            if err > worst:
                worst, where = err, pid
    n_pairs = len(oracle_pairs())
    return worst <= 1e-4, f"{n_pairs} pairs x {points} points, max |oracle - closed form| {worst:.1e}" + (
        f" at {where}" if where else "")


# 9 -------------------------------------------------------------------------------

def criterion_inversion():
    t = np.linspace(0.0, 1.0, 101)
    worst, where = 0.0, ""
    curves = TR.catalog_curves()
    for tag, curve in curves.items():
        err = float(np.max(np.abs(np.asarray(curve.inverse(curve(t))) - t)))
        if err > worst:
            worst, where = err, tag
    return worst <= 1e-8, f"{len(curves)} curves, max |Gamma(T(t)) - t| {worst:.1e}" + (f" at {where}" if where else "")


# 10 ------------------------------------------------------------------------------

def criterion_fuzz(seed: int = 0, cases: int = 200, threads: int | None = None):
    res = V.fuzz_suite(cases, seed, threads)
    qid = min(res, key=res.get)
    return res[qid] >= V.SLACK_FLOOR, f"{len(res)} quadruples x {cases} cases, min slack {res[qid]:.2e} ({qid})"


CRITERIA: list[tuple[int, str, Callable]] = [
    (1, "catalog-solver", lambda ctx: criterion_catalog_solver()),
    (2, "comp-sum-values", lambda ctx: criterion_comp_sum_values()),
    (3, "tightness", lambda ctx: criterion_tightness()),
    (4, "witnesses", lambda ctx: criterion_witnesses()),
    (5, "growth", lambda ctx: criterion_growth()),
    (6, "simulation", lambda ctx: criterion_simulation(ctx["samples"], ctx["seed"], ctx["threads"])),
    (7, "gap-ordering", lambda ctx: criterion_gap_ordering(ctx["seed"])),
    (8, "oracle", lambda ctx: criterion_oracle(ctx["seed"])),
    (9, "inversion", lambda ctx: criterion_inversion()),
    (10, "fuzz", lambda ctx: criterion_fuzz(ctx["seed"], threads=ctx["threads"])),
]


def select(only=None):
    if not only:
        return list(CRITERIA)
    keys = {str(k).strip() for k in only}
    chosen = [c for c in CRITERIA if str(c[0]) in keys or c[1] in keys]
    unknown = keys - {str(c[0]) for c in chosen} - {c[1] for c in chosen}
    if unknown:
        raise KeyError(f"unknown criteria: {', '.join(sorted(unknown))}")
    return chosen


def run_criterion(number: int, samples: int = 1_000_000, seed: int = 0, threads: int | None = None) -> CriterionResult:
    num, name, fn = next(c for c in CRITERIA if c[0] == number)
    start = time.perf_counter()
    ok, detail = fn({"samples": samples, "seed": seed, "threads": threads})
    return CriterionResult(num, name, bool(ok), detail, time.perf_counter() - start)


def run(only=None, samples: int = 1_000_000, seed: int = 0, threads: int | None = None) -> list:
    return [run_criterion(num, samples, seed, threads) for num, _, _ in select(only)]
