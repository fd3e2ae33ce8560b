"""Adjustment for density maximization (ADM) in one dimension.

A target log-density (or log-likelihood) is multiplied by the chosen family's
adjustment, the adjusted curve is maximized, and the family member whose own
adjusted log-density has the same mode and curvature is returned. The fitted
member's mean equals the adjusted mode.

=========  ===========  ==========  ===============================
family     support      adjustment  parameters from (x*, c)
=========  ===========  ==========  ===============================
Normal     real line    1           mean x*, variance 1/c
Gamma      (0, inf)     x           shape c x*^2, rate c x*
Beta       (0, 1)       x (1 - x)   a = c x*^2 (1-x*), b = c x* (1-x*)^2
=========  ===========  ==========  ===============================
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .exceptions import NoInteriorMax, NonConcaveAtMode

__all__ = ["PearsonFamily", "AdmFit", "adm_fit", "family_moments"]

_SCAN_POINTS = 257
_BETA_EDGE = 1e-6


class PearsonFamily(enum.Enum):
    NORMAL = "normal"
    BETA = "beta"
    GAMMA = "gamma"

    def log_adjustment(self, x):
        x = np.asarray(x, dtype=float)
        if self is PearsonFamily.NORMAL:
            return np.zeros_like(x)
        if self is PearsonFamily.GAMMA:
            return np.log(x)
        return np.log(x) + np.log1p(-x)

    def adjustment_curvature(self, x):
        """Second derivative of :meth:`log_adjustment`."""
        x = np.asarray(x, dtype=float)
        if self is PearsonFamily.NORMAL:
            return np.zeros_like(x)
        if self is PearsonFamily.GAMMA:
            return -1.0 / x**2
        return -1.0 / x**2 - 1.0 / (1.0 - x) ** 2

    @property
    def support(self) -> tuple[float, float]:
        if self is PearsonFamily.NORMAL:
            return (-np.inf, np.inf)
        if self is PearsonFamily.GAMMA:
            return (0.0, np.inf)
        return (0.0, 1.0)


@dataclass(frozen=True)
class AdmFit:
    family: PearsonFamily
    params: tuple[float, float]
    mode_adjusted: float
    curvature: float

    @property
    def mean(self) -> float:
        return family_moments(self)[0]


def _second_difference(h: Callable, x: float, lo: float, hi: float) -> float:
    step = max(1e-5 * abs(x), 1e-8)
    # keep x +/- step inside the open bracket
    step = min(step, 0.5 * (x - lo), 0.5 * (hi - x))
    f0, fp, fm = h(x), h(x + step), h(x - step)
    return -(fp - 2.0 * f0 + fm) / step**2


def adm_fit(
    log_target: Callable,
    family: PearsonFamily,
    bracket: tuple[float, float],
    vectorized: bool = False,
    log_hessian: Callable | None = None,
) -> AdmFit:
    """Fit a Pearson-family member to ``exp(log_target)`` by ADM.

    Parameters
    ----------
    log_target : callable
        Log of the target density, up to a constant. Must be finite on the
        open bracket.
    family : PearsonFamily
    bracket : (lo, hi)
        Search interval, inside the family's support. Endpoints are never
        evaluated.
    vectorized : bool
        If true, ``log_target`` accepts arrays; this speeds up the initial
        scan but does not change the result.
    log_hessian : callable, optional
        Second derivative of ``log_target``. When given, the curvature at the
        mode is exact instead of a second difference.

    Raises
    ------
    NoInteriorMax
        The adjusted target is maximized at the bracket edge (for Beta, within
        1e-6 of 0 or 1).
    NonConcaveAtMode
        The second difference at the mode is not negative.
    """
    lo, hi = map(float, bracket)
    s_lo, s_hi = family.support
    if not (s_lo <= lo < hi <= s_hi) or not (np.isfinite(lo) and np.isfinite(hi)):
        raise ValueError(f"bracket {bracket} must be finite and inside the support {family.support}")

    def h(x):
        return float(log_target(x)) + float(family.log_adjustment(x))

    if lo > 0 and hi / lo > 100:
        grid = np.geomspace(lo, hi, _SCAN_POINTS + 2)[1:-1]
    else:
        grid = np.linspace(lo, hi, _SCAN_POINTS + 2)[1:-1]
    if vectorized:
        vals = np.asarray(log_target(grid), dtype=float) + family.log_adjustment(grid)
    else:
        vals = np.array([h(x) for x in grid])
    vals = np.where(np.isfinite(vals), vals, -np.inf)
    i = int(np.argmax(vals))
    if not np.isfinite(vals[i]):
        raise NoInteriorMax("adjusted target is not finite anywhere on the bracket")
    at_edge = i == 0 or i == grid.size - 1
    a = grid[i - 1] if i > 0 else lo
    b = grid[i + 1] if i < grid.size - 1 else hi

    def slope(x):
        d = max(1e-6 * abs(x), 1e-10)
        d = min(d, 0.5 * (x - lo), 0.5 * (hi - x))
        return (h(x + d) - h(x - d)) / (2.0 * d)

    if not at_edge and slope(a) > 0 > slope(b):
        x_star = brentq(slope, a, b, xtol=1e-300, rtol=1e-12, maxiter=200)
    else:
        # best scan point touches the bracket edge; search up to the edge itself
        tol = 1e-12 * (hi - lo) if at_edge else 1e-10 * max(abs(grid[i]), 1e-300)
        res = minimize_scalar(lambda x: -h(x), bounds=(a, b), method="bounded",
                              options={"xatol": tol})
        x_star = float(res.x)
        if at_edge:
            probe = lo + 0.5 * (x_star - lo) if i == 0 else hi - 0.5 * (hi - x_star)
            if h(probe) > h(x_star):
                raise NoInteriorMax("adjusted target keeps increasing toward the bracket edge")

    width = hi - lo
    if family is PearsonFamily.BETA:
        if x_star < _BETA_EDGE or x_star > 1.0 - _BETA_EDGE:
            raise NoInteriorMax(f"Beta adjusted mode {x_star:.3g} is at the edge of (0, 1)")
    if x_star - lo <= 1e-9 * width or hi - x_star <= 1e-9 * width:
        raise NoInteriorMax(f"adjusted target maximized at the bracket edge ({x_star:.6g})")

    if log_hessian is None:
        c = _second_difference(h, x_star, lo, hi)
    else:
        c = -float(log_hessian(x_star)) - float(family.adjustment_curvature(x_star))
    if not c > 0:
        raise NonConcaveAtMode(f"curvature {c:.3g} at the mode is not positive")

    if family is PearsonFamily.NORMAL:
        params = (x_star, 1.0 / c)
    elif family is PearsonFamily.GAMMA:
        params = (c * x_star**2, c * x_star)
    else:
        params = (c * x_star**2 * (1.0 - x_star), c * x_star * (1.0 - x_star) ** 2)
    return AdmFit(family, params, x_star, c)


def family_moments(fit: AdmFit) -> tuple[float, float]:
    """Mean and variance of the fitted family member."""
    p1, p2 = fit.params
    if fit.family is PearsonFamily.NORMAL:
        return p1, p2
    if fit.family is PearsonFamily.GAMMA:
        return p1 / p2, p1 / p2**2
    n = p1 + p2
    return p1 / n, p1 * p2 / (n * n * (n + 1.0))


def beta_from_mode_curvature(x, c):
    """Vectorized Beta parameter map used by batch fits; same algebra as :func:`adm_fit`."""
    x = np.asarray(x, dtype=float)
    c = np.asarray(c, dtype=float)
    return c * x * x * (1.0 - x), c * x * (1.0 - x) ** 2


def beta_moments(a, b):
    n = a + b
    return a / n, a * b / (n * n * (n + 1.0))
