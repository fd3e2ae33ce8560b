"""Estimators of the Level-II variance and ADM-SHP inference for the random effects.

``estimate_A_mle`` maximizes the REML likelihood over ``[0, inf)`` and
truncates at zero; ``estimate_A_adm`` maximizes ``A**q * L(A)``, which is
always interior. ``adm_shp_fit`` turns the ADM estimate into per-group
points and intervals via a Beta approximation to each shrinkage factor.

The maximizer is vectorized over many data vectors sharing ``V`` and ``X``;
the scalar functions below are thin wrappers over the batch code used by
the simulation harness.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .adm import PearsonFamily, adm_fit, beta_from_mode_curvature, beta_moments, family_moments
from .exceptions import BadQ, NotApplicable, OptimizerFailure, UnequalVariances
from .likelihood import LikelihoodProfile
from .model import Dataset, validate_dataset

__all__ = [
    "VarianceEstimate",
    "GroupInference",
    "AdmShpResult",
    "estimate_A_mle",
    "estimate_A_adm",
    "james_stein_B",
    "adm_shp_fit",
    "normal_quantile",
]

_GRID = 96
_LOW = 1e-9
_EXPAND_LIMIT = 1e15


@dataclass(frozen=True)
class VarianceEstimate:
    A_hat: float
    method: str
    q: float | None
    converged: bool
    objective_at_opt: float


@dataclass(frozen=True)
class GroupInference:
    B_hat: float
    B_mean: float
    B_var: float
    theta_hat: float
    theta_var: float
    lo: float
    hi: float
    level: float

    @property
    def se(self) -> float:
        return float(np.sqrt(self.theta_var))


@dataclass(frozen=True)
class AdmShpResult:
    A: VarianceEstimate
    beta: np.ndarray
    per_group: list[GroupInference]

    def __iter__(self):
        # allows ``A, beta, groups = adm_shp_fit(d)``
        return iter((self.A, self.beta, self.per_group))


def normal_quantile(p):
    """Standard-normal inverse CDF (scipy's ``ndtri``, accurate to ~1e-15)."""
    return ndtri(p)


@dataclass
class BatchEstimate:
    A_hat: np.ndarray
    converged: np.ndarray
    objective: np.ndarray
    failed: np.ndarray


def maximize_batch(prof: LikelihoodProfile, Y: np.ndarray, q: float) -> BatchEstimate:
    """Maximize ``q ln A + l(A)`` for each row of ``Y``.

    ``q = 0`` is the truncated REML/ML case: the search covers ``[0, inf)`` and
    a boundary maximum returns exactly 0. For ``q > 0`` the maximizer is
    interior. Rows whose bracket cannot be closed below ``1e15 * max V`` are
    flagged in ``failed`` and get ``A_hat = nan``.
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    n = Y.shape[0]
    V = prof.V
    vmin, vmax = float(V.min()), float(V.max())

    def obj_and_grad(A, rows):
        t = prof.terms(A, Y[rows], score=True)
        if q > 0:
            return q * np.log(A) + t.loglik, q / A + t.score
        return t.loglik, t.score

    # upper end of the search: the gradient must be negative there
    hi = np.full(n, 1e4 * vmax)
    failed = np.zeros(n, dtype=bool)
    rows = np.arange(n)
    while rows.size:
        _, g = obj_and_grad(hi[rows], rows)
        rows = rows[g >= 0]
        hi[rows] *= 1e3
        over = hi[rows] > _EXPAND_LIMIT * vmax
        failed[rows[over]] = True
        rows = rows[~over]

    lo = _LOW * vmin
    hi_ok = np.where(failed, 1e4 * vmax, hi)
    frac = np.linspace(0.0, 1.0, _GRID)
    grid = np.exp(np.log(lo) + frac[None, :] * (np.log(hi_ok) - np.log(lo))[:, None])
    t = prof.terms(grid, Y[:, None, :])
    f = t.loglik + (q * np.log(grid) if q > 0 else 0.0)
    i = np.argmax(f, axis=1)
    idx = np.arange(n)
    a = np.where(i > 0, grid[idx, np.maximum(i - 1, 0)], 0.0)
    b = grid[idx, np.minimum(i + 1, _GRID - 1)]
    best = grid[idx, i]

    if q > 0:
        # q/A dominates near 0, so the gradient is positive at the first grid point
        a = np.where(i > 0, a, grid[:, 0] * 1e-3)
        at_zero = np.zeros(n, dtype=bool)
    else:
        t0 = prof.terms(np.zeros(n), Y, score=True)
        f0, g0 = t0.loglik, t0.score
        at_zero = (g0 <= 0) & (f0 >= f[idx, i])

    _, ga = obj_and_grad(np.where(a > 0, a, 1.0), idx)
    if q == 0:
        ga = np.where(a > 0, ga, g0)
    _, gb = obj_and_grad(b, idx)
    _, gm = obj_and_grad(best, idx)
    # repair brackets that do not straddle a downward sign change
    bad = ~((ga > 0) & (gb < 0))
    use_right = bad & (gm >= 0) & (gb < 0)
    use_left = bad & (gm < 0) & (ga > 0)
    a = np.where(use_right, best, a)
    b = np.where(use_left, best, b)
    bracketed = ~bad | use_right | use_left

    for _ in range(400):
        active = bracketed & ~at_zero & ~failed & (b - a > 4e-16 * b)
        if not active.any():
            break
        r = np.nonzero(active)[0]
        ar, br = a[r], b[r]
        mid = np.where(ar > 0, np.sqrt(ar * br), 0.5 * br)
        mid = np.where((mid <= ar) | (mid >= br), 0.5 * (ar + br), mid)
        _, gmid = obj_and_grad(mid, r)
        up = gmid > 0
        a[r] = np.where(up, mid, ar)
        b[r] = np.where(up, br, mid)

    A_hat = np.where(bracketed, 0.5 * (a + b), best)
    A_hat = np.where(at_zero, 0.0, A_hat)
    A_hat = np.where(failed, np.nan, A_hat)
    safe = np.where(np.isfinite(A_hat) & (A_hat > 0), A_hat, 1.0)
    fopt, gopt = obj_and_grad(safe, idx)
    if q == 0:
        fopt = np.where(A_hat == 0, f0, fopt)
    converged = np.where(A_hat > 0, np.abs(safe * gopt) < 1e-8, at_zero) & bracketed | at_zero
    converged &= ~failed
    fopt = np.where(failed, np.nan, fopt)
    return BatchEstimate(A_hat, converged, fopt, failed)


def _single(d: Dataset, q: float, method: str) -> VarianceEstimate:
    validate_dataset(d)
    prof = LikelihoodProfile.from_dataset(d)
    res = maximize_batch(prof, d.y[None, :], q)
    if res.failed[0]:
        raise OptimizerFailure(
            f"{method}: bracket expansion exceeded 1e15 * max V without a sign change"
        )
    return VarianceEstimate(
        float(res.A_hat[0]),
        method,
        None if method == "MLE" else q,
        bool(res.converged[0]),
        float(res.objective[0]),
    )


def estimate_A_mle(d: Dataset) -> VarianceEstimate:
    """REML estimate of ``A`` truncated at zero.

    For equal variances and an intercept-only design the answer is
    ``max(0, S/(k-1) - V)``.
    """
    return _single(d, 0.0, "MLE")


def estimate_A_adm(d: Dataset, q: float = 1.0) -> VarianceEstimate:
    """Maximize ``A**q * L(A)`` over ``A > 0``.

    With ``q = 1`` this is the ADM estimate matching a Beta approximation of
    each shrinkage factor. Smaller ``q`` gives smaller ``A_hat`` (more
    shrinkage).
    """
    q = float(q)
    if not 0 < q <= 1:
        raise BadQ(f"q must lie in (0, 1], got {q}")
    return _single(d, q, "ADM")


def james_stein_B(d: Dataset, known_mean: float | None = None) -> tuple[float, float]:
    """James-Stein shrinkage factor, raw and positive-part.

    Known mean ``mu``: ``(k-2) V / sum (y - mu)^2``. Unknown mean
    (intercept-only design): ``(k-3) V / sum (y - ybar)^2``. The raw value is
    unbiased for ``B = V/(A+V)`` and can exceed 1.
    """
    V = d.V
    if not d.equal_variances:
        raise UnequalVariances("James-Stein requires equal sampling variances")
    k = d.k
    y = d.y
    if known_mean is not None:
        if k < 3:
            raise NotApplicable(f"k={k}: James-Stein reduces to the unshrunk estimate")
        S = float(np.sum((y - known_mean) ** 2))
        num = (k - 2) * V[0]
    else:
        if d.r != 1 or not np.allclose(d.X, d.X[0, 0]) or d.X[0, 0] == 0:
            raise NotApplicable("unknown-mean James-Stein needs an intercept-only design")
        if k < 4:
            raise NotApplicable(f"k={k}: James-Stein with estimated mean needs k >= 4")
        S = float(np.sum((y - y.mean()) ** 2))
        num = (k - 3) * V[0]
    B_raw = num / S if S > 0 else np.inf
    return B_raw, min(1.0, B_raw)


def _b_space_target(prof: LikelihoodProfile, y: np.ndarray, Vj: float, q: float = 1.0):
    """Log posterior density of ``B_j = Vj/(A+Vj)`` under the prior ``A**(q-1)``.

    Returns the log density and its exact second derivative in ``B``.
    """

    def target(B):
        B = np.asarray(B, dtype=float)
        A = Vj * (1.0 - B) / B
        out = prof.loglik(A, y) + np.log(Vj) - 2.0 * np.log(B)
        if q != 1.0:
            out = out + (q - 1.0) * np.log(A)
        return out

    def hessian(B):
        return b_space_curvature(prof, y, Vj, B, q)

    return target, hessian


def b_space_curvature(prof: LikelihoodProfile, Y, V, B, q: float = 1.0):
    """Second derivative in ``B`` of the log density returned by ``_b_space_target``.

    Broadcasts ``Y`` of shape ``(..., k)`` against ``B`` and ``V``.
    """
    B = np.asarray(B, dtype=float)
    A = V * (1.0 - B) / B
    t = prof.terms(A, Y, score=True, hessian=True)
    dA = -V / B**2
    d2A = 2.0 * V / B**3
    out = t.hessian * dA**2 + t.score * d2A + 2.0 / B**2
    if q != 1.0:
        # (q - 1) ln A: A'/A = -1/(B(1-B)), A''/A = 2/(B^2 (1-B))
        out = out + (q - 1.0) * (2.0 / (B * B * (1.0 - B)) - 1.0 / (B * (1.0 - B)) ** 2)
    return out


def adm_shp_fit(d: Dataset, q: float = 1.0, level: float = 0.95) -> AdmShpResult:
    """ADM-SHP point and interval estimates for every group.

    Each group's shrinkage factor gets a Beta fit (adjustment ``B(1-B)``) to
    its flat-prior posterior. Then

        theta_hat = y - E[B] (y - x'b)
        theta_var = V (1 - E[B]) + Var[B] (y - x'b)^2 + E[B]^2 x' cov(b) x

    with ``b`` the GLS fit at ``A_hat``. Intervals are ``theta_hat +/- z sd``.
    For ``q < 1`` the Beta fit targets the posterior under the prior ``A**(q-1)``.
    """
    if not 0.5 < level < 1:
        raise ValueError(f"level must lie in (0.5, 1), got {level}")
    est = estimate_A_adm(d, q)
    prof = LikelihoodProfile.from_dataset(d)
    t = prof.terms(est.A_hat, d.y)
    beta, cov = t.beta, t.cov
    z = float(normal_quantile(0.5 * (1.0 + level)))
    out = []
    for j, g in enumerate(d.groups):
        target, hessian = _b_space_target(prof, d.y, g.V, q)
        fit = adm_fit(target, PearsonFamily.BETA, (0.0, 1.0), vectorized=True,
                      log_hessian=hessian)
        B_mean, B_var = family_moments(fit)
        x = d.X[j]
        e = g.y - x @ beta
        theta_hat = g.y - B_mean * e
        theta_var = g.V * (1.0 - B_mean) + B_var * e * e + B_mean**2 * (x @ cov @ x)
        half = z * np.sqrt(theta_var)
        out.append(GroupInference(
            B_hat=float(g.V / (est.A_hat + g.V)),
            B_mean=float(B_mean),
            B_var=float(B_var),
            theta_hat=float(theta_hat),
            theta_var=float(theta_var),
            lo=float(theta_hat - half),
            hi=float(theta_hat + half),
            level=level,
        ))
    return AdmShpResult(est, beta, out)


@dataclass
class BatchInference:
    theta_hat: np.ndarray
    theta_var: np.ndarray
    B_mean: np.ndarray
    B_var: np.ndarray
    A_hat: np.ndarray
    failed: np.ndarray


def adm_shp_batch(prof: LikelihoodProfile, Y: np.ndarray, q: float = 1.0) -> BatchInference:
    """Vectorized ADM-SHP for many data vectors sharing ``V`` and ``X``.

    Uses the closed-form Beta mode ``V_j/(A_hat + V_j)`` and the same exact
    curvature as :func:`adm_shp_fit`; the two agree to the accuracy of the
    scalar mode search.
    """
    Y = np.atleast_2d(Y)
    est = maximize_batch(prof, Y, q)
    A = np.where(est.failed, 1.0, est.A_hat)
    V = prof.V
    t = prof.terms(A, Y)
    x_star = V / (A[:, None] + V)

    # each group's curvature needs the whole likelihood at its own A = A(B_j)
    hess = b_space_curvature(prof, Y[:, None, :], V, x_star, q)
    c = -hess - PearsonFamily.BETA.adjustment_curvature(x_star)
    a, b = beta_from_mode_curvature(x_star, c)
    B_mean, B_var = beta_moments(a, b)
    e = t.resid
    lev = np.einsum("ka,...ab,kb->...k", prof.X, t.cov, prof.X) if prof.r else 0.0
    theta_hat = Y - B_mean * e
    theta_var = V * (1.0 - B_mean) + B_var * e * e + B_mean**2 * lev
    failed = est.failed | ~np.all(np.isfinite(theta_var) & (theta_var > 0) & (c > 0), axis=1)
    return BatchInference(theta_hat, theta_var, B_mean, B_var, est.A_hat, failed)
