"""One-dimensional search helpers shared by the risk engine and the solvers.

The golden-section routine is vectorized: it minimizes a batch of
unimodal problems at once, one bracket per entry.  Endpoints are evaluated
at the end so that minima sitting on a bracket boundary are not missed.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.optimize import brentq

INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def _safe_eval(f, x):
    with np.errstate(all="ignore"):
        v = np.asarray(f(x), dtype=float)
    return np.where(np.isnan(v), np.inf, v)


def golden_min(f, a, b, iters: int = 90):
    """Minimize unimodal ``f`` on each bracket ``[a_i, b_i]``.

    ``f`` must accept an array of abscissae with the same shape as ``a``.
    Returns ``(x_min, f_min)`` arrays.  90 iterations shrink a bracket by
    a factor ~1e-19, so the result is converged to machine precision for
    any bracket of moderate width.
    """
    a = np.array(a, dtype=float, copy=True)
    b = np.array(b, dtype=float, copy=True)
    lo0, hi0 = a.copy(), b.copy()
    c = b - INVPHI * (b - a)
    d = a + INVPHI * (b - a)
    fc = _safe_eval(f, c)
    fd = _safe_eval(f, d)
    for _ in range(iters):
        left = fc <= fd
        # keep [a, d] where f(c) <= f(d), otherwise [c, b]
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        nc = np.where(left, b - INVPHI * (b - a), d)
        nd = np.where(left, c, a + INVPHI * (b - a))
        fnew = _safe_eval(f, np.where(left, nc, nd))
        fc, fd = np.where(left, fnew, fd), np.where(left, fc, fnew)
        c, d = nc, nd
    x = np.where(fc <= fd, c, d)
    fx = np.minimum(fc, fd)
    # boundary check
    flo = _safe_eval(f, lo0)
    fhi = _safe_eval(f, hi0)
    x = np.where(flo < fx, lo0, x)
    fx = np.minimum(fx, flo)
    x = np.where(fhi < fx, hi0, x)
    fx = np.minimum(fx, fhi)
    return x, fx


def expand_bracket(f, center, start: float = 1.0, cap: float = 2.0 ** 40):
    """Grow symmetric brackets ``center +/- L`` until a convex ``f`` turns up.

    A secant-slope test replaces derivative signs so non-differentiable
    losses work.  Returns ``(lo, hi, converged)``; ``converged`` is False for
    entries whose minimizer escapes past ``cap``.
    """
    center = np.asarray(center, dtype=float)
    L = np.full(center.shape, float(start))
    done = np.zeros(center.shape, dtype=bool)
    f0 = _safe_eval(f, center)
    while True:
        fl = _safe_eval(f, center - L)
        fr = _safe_eval(f, center + L)
        fl2 = _safe_eval(f, center - L / 2)
        fr2 = _safe_eval(f, center + L / 2)
        ok = (fl >= fl2) & (fr >= fr2) & (fl >= f0) & (fr >= f0)
        done = done | ok
        if done.all() or L.max() >= cap:
            break
        L = np.where(done, L, L * 2.0)
    return center - L, center + L, done


def invert_monotone(f, s: float, lo: float = 0.0, hi: float = 1.0, xtol: float = 1e-15) -> float:
    """Solve ``f(x) = s`` for nondecreasing ``f`` on ``[lo, hi]``."""
    flo, fhi = f(lo), f(hi)
    if s <= flo:
        return lo
    if s >= fhi:
        return hi
    return brentq(lambda x: f(x) - s, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=200)
