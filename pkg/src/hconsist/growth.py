"""Growth rate of transformation curves near zero.

Smooth auxiliaries give T(t) of order t^2 (square-root bounds); polyhedral
ones give T(t) of order t (linear bounds).  The rate is read off a
least-squares line in (log t, log T) on a log-spaced grid.

Catalog auxiliaries are margin functions psi, nonincreasing in y h.  The
growth analysis uses Phi(u) = psi(-u), nondecreasing in u = -y h;
``_as_phi_orientation`` is the one place the two conventions meet.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import losses as L
from . import solver as S
from . import transforms as TR


class NonpositiveTransform(ValueError):
    pass


class CurvatureCondition(ValueError):
    pass


@dataclass(frozen=True)
class GrowthFit:
    t_grid: np.ndarray
    T_values: np.ndarray
    slope: float
    intercept: float
    max_residual: float
    c: float
    C: float

    def fitted(self) -> np.ndarray:
        return np.exp(self.intercept) * self.t_grid ** self.slope

    def residuals(self) -> np.ndarray:
        return np.log(self.T_values) - (self.intercept + self.slope * np.log(self.t_grid))


def _evaluate(curve: Callable, t: np.ndarray, threads: int) -> np.ndarray:
    try:
        vals = np.asarray(curve(t), dtype=float)
        if vals.shape == t.shape:
            return vals
    except (TypeError, ValueError):
        pass
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return np.array(list(pool.map(lambda s: float(curve(float(s))), t)))


def fit_growth(curve: Callable, t_min: float = 1e-4, t_max: float = 1e-2, points: int = 41,
               threads: int = 1) -> GrowthFit:
    """Log-log slope of ``curve`` on [t_min, t_max] with the c t^2 <= T <= C t^2 envelope."""
    if not (0 < t_min < t_max <= 0.1):
        raise ValueError("need 0 < t_min < t_max <= 0.1")
    if points < 10:
        raise ValueError("need at least 10 grid points")
    t = np.geomspace(t_min, t_max, points)
    T = _evaluate(curve, t, threads)
    if not np.all(T > 0):
        raise NonpositiveTransform(f"T(t) <= 0 at t = {t[np.argmin(T)]:.3g}")
    slope, intercept = np.polyfit(np.log(t), np.log(T), 1)
    resid = np.log(T) - (intercept + slope * np.log(t))
    ratio = T / t ** 2
    return GrowthFit(t, T, float(slope), float(intercept), float(np.max(np.abs(resid))),
                     float(ratio.min()), float(ratio.max()))


def _as_phi_orientation(psi: L.AuxiliaryFunction):
    """(Phi'(0), Phi''(0)) for Phi(u) = psi(-u)."""
    h = 1e-4
    if psi.derivative is not None:
        d1 = -float(psi.derivative(np.array(0.0)))
    else:
        d1 = -float(psi(np.array(h)) - psi(np.array(-h))) / (2 * h)
    if psi.second_derivative is not None:
        d2 = float(psi.second_derivative(np.array(0.0)))
    else:
        d2 = float(psi(np.array(h)) - 2 * psi(np.array(0.0)) + psi(np.array(-h))) / h ** 2
    return d1, d2


@dataclass(frozen=True)
class Trajectory:
    t_grid: np.ndarray
    minimizers: np.ndarray
    ratio_limit: float
    ratio_at_small_t: float
    small_t: float

    @property
    def ok(self) -> bool:
        return abs(self.ratio_at_small_t / self.ratio_limit - 1.0) <= 0.02


def minimizer_trajectory(psi: L.AuxiliaryFunction, t_grid=None, small_t: float = 1e-3) -> Trajectory:
    """Minimizers a*_t of (1-t)/2 Phi(u) + (1+t)/2 Phi(-u) and the slope Phi'(0)/Phi''(0) at 0."""
    d1, d2 = _as_phi_orientation(psi)
    if not d2 > 0 or not psi.twice_differentiable:
        raise CurvatureCondition(f"{psi.id}: needs a twice differentiable Phi with Phi''(0) > 0")
    t_grid = np.asarray(np.geomspace(1e-4, 1e-1, 13) if t_grid is None else t_grid, dtype=float)
    a = np.asarray(S.binary_minimizer(psi, t_grid)[0], dtype=float)
    a = np.where(t_grid == 0, 0.0, a)
    a_small = float(np.asarray(S.binary_minimizer(psi, np.array([small_t]))[0])[0])
    return Trajectory(t_grid, a, d1 / d2, a_small / small_t, small_t)


# curves used by the growth dichotomy --------------------------------------------

SMOOTH = ("binary-logistic", "binary-exponential", "binary-squared-hinge", "comp-sum-tau=1", "constrained-exponential")
POLYHEDRAL = ("binary-hinge", "binary-rho-margin", "comp-sum-mae", "constrained-hinge")


def growth_curve(curve_id: str, n: int = 3) -> Callable:
    """Transformation curve by id; solver-backed where the rate is a property of Phi alone."""
    if curve_id == "binary-logistic":
        psi = L.logistic2("natural")
        return lambda t: S.binary_transform_from_phi(psi, t)
    if curve_id == "binary-exponential":
        psi = L.exponential()
        return lambda t: S.binary_transform_from_phi(psi, t)
    if curve_id == "binary-squared-hinge":
        psi = L.quadratic()
        return lambda t: S.binary_transform_from_phi(psi, t)
    if curve_id == "comp-sum-tau=1":
        return lambda t: TR.comp_sum_T(1.0, n, t)
    if curve_id == "constrained-exponential":
        psi = L.exponential()
        return lambda t: S.solve_cstnd_transform(psi, n, t)
    if curve_id == "binary-hinge":
        return TR.binary_linear_transform("hinge", B=1.0)
    if curve_id == "binary-rho-margin":
        return TR.binary_linear_transform("rho_margin", B=1.0, rho=0.5)
    if curve_id == "comp-sum-mae":
        return lambda t: TR.comp_sum_T(2.0, n, t)
    if curve_id == "constrained-hinge":
        psi = L.hinge()
        return lambda t: S.solve_cstnd_transform(psi, n, t)
    raise TR.UnknownTransform(curve_id)


def dichotomy(t_min: float = 1e-4, t_max: float = 1e-2, points: int = 41) -> dict:
    """{curve id: (GrowthFit, expected slope)} over both families."""
    out = {}
    for cid in SMOOTH:
        out[cid] = (fit_growth(growth_curve(cid), t_min, t_max, points), 2.0)
    for cid in POLYHEDRAL:
        out[cid] = (fit_growth(growth_curve(cid), t_min, t_max, points), 1.0)
    return out
