"""Numerical transformations from their inf-sup characterizations.

Inner problems are convex in mu for convex auxiliary functions and are
solved by golden section; the outer tau search is a dense grid followed by
golden refinement around the grid argmin.  All tau grid points are solved
in one vectorized pass.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .losses import AuxiliaryFunction
from .optim import expand_bracket, golden_min


class NonConvexAuxiliary(ValueError):
    pass


class BracketFailure(RuntimeError):
    def __init__(self, msg, largest):
        super().__init__(f"{msg} (largest bracket half-width tried: {largest:g})")
        self.largest = largest


@dataclass(frozen=True)
class SolverConfig:
    tau_grid_size: int = 512
    mu_tolerance: float = 1e-10
    refine_iterations: int = 60
    P_handling: str = "analytic_endpoint"
    tau_cap: float = 10.0

    def __post_init__(self):
        if self.tau_grid_size < 16 or self.refine_iterations < 16:
            raise ValueError("grid sizes and iteration counts must be at least 16")
        if self.mu_tolerance <= 0 or self.tau_cap <= 0:
            raise ValueError("tolerances must be positive")
        if self.P_handling not in ("analytic_endpoint", "grid"):
            raise ValueError("P_handling must be analytic_endpoint or grid")


DEFAULT = SolverConfig()


def _ev(phi, u):
    with np.errstate(all="ignore"):
        return np.asarray(phi(u), dtype=float)


def check_convex(phi: AuxiliaryFunction, lo: float, hi: float, points: int = 257):
    u = np.linspace(lo, hi, points)
    v = _ev(phi, u)
    m = _ev(phi, 0.5 * (u[:-1] + u[1:]))
    ok = np.isfinite(v[:-1]) & np.isfinite(v[1:])
    scale = np.maximum(1.0, np.abs(v[:-1]) + np.abs(v[1:]))
    if np.any(m[ok] > 0.5 * (v[:-1] + v[1:])[ok] + 1e-12 * scale[ok]) or not phi.convex:
        raise NonConvexAuxiliary(f"{phi.id} fails the midpoint convexity test on [{lo:g}, {hi:g}]")


def _wsum(a, fa, b, fb):
    # a*fa + b*fb with zero weights dropping infinite values
    return np.where(a > 0, a * fa, 0.0) + np.where(b > 0, b * fb, 0.0)


def _outer(obj, lo, hi, cfg):
    """Minimize obj over tau in [lo_i, hi_i] for a batch of problems.

    ``obj`` maps a tau array of shape (batch, ...) to values of the same
    shape.  Returns (values, argmins), each of shape (batch,).
    """
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    grid = np.linspace(0.0, 1.0, cfg.tau_grid_size)
    taus = lo[:, None] + (hi - lo)[:, None] * grid[None, :]
    vals = obj(taus)
    k = np.argmin(vals, axis=1)
    rows = np.arange(len(lo))
    best, arg = vals[rows, k], taus[rows, k]
    a = taus[rows, np.maximum(k - 1, 0)]
    b = taus[rows, np.minimum(k + 1, cfg.tau_grid_size - 1)]
    x, fx = golden_min(obj, a, b, iters=cfg.refine_iterations)
    better = fx <= best
    return np.where(better, fx, best), np.where(better, x, arg)


def _col(t, like):
    """Reshape a batch vector so it broadcasts against ``like``."""
    return t.reshape(t.shape + (1,) * (np.ndim(like) - 1))


def _as_batch(t):
    tt = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(tt < 0) or np.any(tt > 1):
        raise ValueError("t must lie in [0, 1]")
    return tt


def _result(t, out):
    out = np.maximum(out, 0.0)
    return float(out[0]) if np.ndim(t) == 0 else out


# comp-sum -----------------------------------------------------------------------

def _comp_inner(phi, a, b, tau, mu_lo, mu_hi, cfg):
    """inf over mu of a phi(tau - mu) + b phi(tau + mu), elementwise."""
    def g(mu):
        return _wsum(a, _ev(phi, tau - mu), b, _ev(phi, tau + mu))

    return golden_min(g, mu_lo, mu_hi, iters=cfg.refine_iterations + 30)


def comp_inner_argmin(phi, t, tau, cfg=DEFAULT):
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    mu, _ = _comp_inner(phi, (1 + t) / 2, (1 - t) / 2, tau, -tau, tau, cfg)
    return mu


def _comp_batch(phi, n, tt, cfg, P=1.0):
    def obj(tau):
        t = _col(tt, tau)
        a, b = (P + t) / 2 + 0 * tau, (P - t) / 2 + 0 * tau
        _, inner = _comp_inner(phi, a, b, tau, -tau, tau, cfg)
        return P * _ev(phi, tau) - inner

    ones = np.ones_like(tt)
    return _outer(obj, ones / n, 0.5 * ones, cfg)


def solve_comp_transform(phi: AuxiliaryFunction, n: int, t, cfg: SolverConfig = DEFAULT,
                         return_tau: bool = False):
    """Comp-sum transformation at t (scalar or array)."""
    if n < 2:
        raise ValueError("n must be at least 2")
    tt = _as_batch(t)
    check_convex(phi, 1e-3, 1.0)
    if cfg.P_handling == "grid" and n > 2:
        vals = np.array([p_grid_check(phi, n, ti, "comp", cfg=cfg)[2].min() for ti in tt])
        return _result(t, vals)
    vals, taus = _comp_batch(phi, n, tt, cfg)
    if return_tau:
        return _result(t, vals), (float(taus[0]) if np.ndim(t) == 0 else taus)
    return _result(t, vals)


def p_grid_check(phi, n, t, kind="comp", points=41, cfg=DEFAULT):
    """Grid over the weight P at a single t; returns (argmin P, P grid, values).

    The analytic reduction puts the minimum at P = 1 for comp-sum losses
    and at P = 1/(n-1) for constrained losses.
    """
    if n < 3:
        raise ValueError("the weight P only appears for n > 2")
    lo = max(1.0 / (n - 1), t) if kind == "comp" else 1.0 / (n - 1)
    Ps = np.linspace(lo, 1.0, points)
    tt = np.array([float(t)])
    if kind == "comp":
        vals = np.array([_comp_batch(phi, n, tt, cfg, P=P)[0][0] for P in Ps])
        # ties resolve toward the analytic endpoint
        k = len(vals) - 1 - int(np.argmin(vals[::-1]))
    elif kind == "cstnd":
        vals = np.array([_cstnd_batch(phi, tt, 2.0 - P, cfg)[0][0] for P in Ps])
        k = int(np.argmin(vals))
    else:
        raise ValueError("kind must be comp or cstnd")
    return float(Ps[k]), Ps, vals


# constrained --------------------------------------------------------------------

def _cstnd_batch(phi, tt, c, cfg):
    def obj(tau):
        t = _col(tt, tau)
        a, b = (c - t) / 2 + 0 * tau, (c + t) / 2 + 0 * tau

        def g(mu):
            return _wsum(a, _ev(phi, -tau + mu), b, _ev(phi, -tau - mu))

        lo, hi, ok = expand_bracket(g, np.zeros_like(tau))
        # a vanishing weight (c = t) pushes the infimum to mu -> -inf
        edge = a <= 1e-15
        if not np.all(ok | edge):
            raise BracketFailure("inner bracket did not close", float(np.max(hi)))
        _, inner = golden_min(g, lo, hi, iters=cfg.refine_iterations + 60)
        inner = np.where(edge, np.minimum(inner, b * _ev(phi, np.full_like(tau, 1e6))), inner)
        return c * _ev(phi, -tau) - inner

    ones = np.ones_like(tt)
    return _outer(obj, 0.0 * ones, cfg.tau_cap * ones, cfg)


def solve_cstnd_transform(phi: AuxiliaryFunction, n: int, t, tau_cap: float = None,
                          cfg: SolverConfig = DEFAULT, form: str = "table"):
    """Constrained-loss transformation at t (scalar or array).

    ``form='table'`` uses the n-free weight 2 (the tabulated lower curve);
    ``form='exact'`` uses the n-dependent weight 2 - 1/(n-1).
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    tt = _as_batch(t)
    check_convex(phi, -3.0, 3.0)
    if tau_cap is not None:
        cfg = SolverConfig(cfg.tau_grid_size, cfg.mu_tolerance, cfg.refine_iterations, cfg.P_handling, tau_cap)
    if form == "table":
        c = 2.0
    elif form == "exact":
        c = 2.0 - 1.0 / (n - 1)
    else:
        raise ValueError("form must be table or exact")
    if cfg.P_handling == "grid" and n > 2 and form == "exact":
        vals = np.array([p_grid_check(phi, n, ti, "cstnd", cfg=cfg)[2].min() for ti in tt])
        return _result(t, vals)
    return _result(t, _cstnd_batch(phi, tt, c, cfg)[0])


# bounded classes ----------------------------------------------------------------

def solve_bounded_comp_transform(phi: AuxiliaryFunction, cls, t, cfg: SolverConfig = DEFAULT):
    """Bounded-score comp-sum transformation.

    The outer problem is reduced to tau1 = tau2 = (s_min + s_max)/2 and
    P = 1, where the mu-set is [-(s_max - s_min)/2, (s_max - s_min)/2];
    the inner sup is solved numerically.  For n = 2 the midpoint is 1/2 and
    the reduction is exact.
    """
    smin, smax = cls.s_min(), cls.s_max()
    if not smin < smax:
        raise ValueError("degenerate softmax range")
    assert smin + smax <= 1.0 + 1e-12, "empty constraint set"
    tt = _as_batch(t)
    check_convex(phi, max(smin, 1e-3), smax)
    tau = np.full(tt.shape, 0.5 * (smin + smax))
    half = 0.5 * (smax - smin)
    _, inner = _comp_inner(phi, (1 + tt) / 2, (1 - tt) / 2, tau, -half + 0 * tau, half + 0 * tau, cfg)
    return _result(t, _ev(phi, tau) - inner)


def solve_bounded_cstnd_transform(phi: AuxiliaryFunction, cls, t, cfg: SolverConfig = DEFAULT):
    lam = cls.lambda_min()
    if not lam > 0 or not math.isfinite(lam):
        raise ValueError("bounded constrained solver needs a finite Lambda_min > 0")
    tt = _as_batch(t)
    check_convex(phi, -3.0, 3.0)

    def obj(tau):
        t_ = _col(tt, tau)
        a, b = (1 - t_) / 2 + 0 * tau, (1 + t_) / 2 + 0 * tau

        def g(mu):
            # negated inner objective: the sup becomes an inf
            return -_wsum(a, _ev(phi, tau) - _ev(phi, -tau + mu), b, _ev(phi, -tau) - _ev(phi, tau - mu))

        _, neg = golden_min(g, tau - lam, tau + lam, iters=cfg.refine_iterations + 30)
        return -neg

    ones = np.ones_like(tt)
    return _result(t, _outer(obj, 0.0 * ones, cfg.tau_cap * ones, cfg)[0])


# binary, complete classes -----------------------------------------------------------

def binary_minimizer(phi: AuxiliaryFunction, t, cfg: SolverConfig = DEFAULT):
    """Minimizer and minimum of f_t(u) = (1-t)/2 psi(-u) + (1+t)/2 psi(u).

    ``psi`` is a nonincreasing margin function; in the nondecreasing
    orientation Phi(u) = psi(-u) this is (1-t)/2 Phi(u) + (1+t)/2 Phi(-u).
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    a, b = (1 - t) / 2, (1 + t) / 2

    def f(u):
        return _wsum(a, _ev(phi, -u), b, _ev(phi, u))

    lo, hi, ok = expand_bracket(f, np.zeros_like(t))
    if not np.all(ok):
        raise BracketFailure("minimizer escapes every bracket", float(np.max(hi)))
    return golden_min(f, lo, hi, iters=cfg.refine_iterations + 60)


def binary_transform_from_phi(phi: AuxiliaryFunction, t, complete: bool = True, cfg: SolverConfig = DEFAULT):
    if not complete:
        raise ValueError("only complete classes are supported")
    check_convex(phi, -3.0, 3.0)
    tt = _as_batch(t)
    _, fmin = binary_minimizer(phi, tt, cfg)
    f0 = float(_ev(phi, np.array(0.0)))
    return _result(t, f0 - fmin)
