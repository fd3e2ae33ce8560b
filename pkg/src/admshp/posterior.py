"""Exact formal-Bayes posterior under a flat prior on ``A >= 0``.

The flat prior makes the posterior of ``A`` proportional to the REML
likelihood. It is integrated on ``u = A/(A + V_ref)``, with ``V_ref`` the
harmonic mean of ``V`` (the scale of the pooled precision), with the further
substitution ``1 - u = (1 - s)**2`` and composite Boole's rule on a uniform
``s``-grid. In ``s`` the integrand behaves like ``(1-s)**(k-r-3)`` times a
smooth function at ``A = inf``, so the rule stays accurate even at
``k = r + 3``, where the ``u``-density itself is unbounded.

Given ``A``, theta_j is Normal with mean ``y_j - B_j (y_j - x_j'b(A))`` and
variance ``V_j (1 - B_j) + B_j^2 x_j' cov(b(A)) x_j``. The posterior of
theta_j is therefore a finite Normal mixture over the nodes.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, ndtr, ndtri

from .estimators import GroupInference
from .exceptions import NotProper
from .likelihood import LikelihoodProfile
from .model import Dataset

__all__ = [
    "PosteriorGrid",
    "build_posterior",
    "exact_B_moments",
    "exact_theta_inference",
    "mixture_quantile",
    "reference_scale",
]

_SQRT_2PI = np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class PosteriorGrid:
    """Quadrature nodes in ``A`` (last node is ``A = inf``) with normalized weights."""

    A: np.ndarray
    weights: np.ndarray
    V_ref: float
    n_nodes: int
    transform: str = "u = A/(A+V_ref), 1-u = (1-s)^2, Boole in s"
    refinement_error: float = float("nan")

    @property
    def nodes(self) -> list[tuple[float, float]]:
        return list(zip(self.A.tolist(), self.weights.tolist()))


def reference_scale(V) -> float:
    """Harmonic mean of the sampling variances."""
    V = np.asarray(V, dtype=float)
    return float(V.size / np.sum(1.0 / V))


def rule_weights(n: int) -> np.ndarray:
    """Composite Newton-Cotes weights on ``n + 1`` equispaced points of ``[0, 1]``.

    Boole's rule (Simpson plus one Richardson step, error O(n**-6)) when
    ``n`` is a multiple of 4, otherwise Simpson's rule.
    """
    if n < 2 or n % 2:
        raise ValueError(f"node count must be an even integer >= 2, got {n}")
    if n % 4 == 0:
        w = np.empty(n + 1)
        w[1::2] = 32.0
        w[2::4] = 12.0
        w[4::4] = 14.0
        w[0] = w[-1] = 7.0
        return w * (2.0 / (45.0 * n))
    w = np.full(n + 1, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    return w / (3.0 * n)


def node_layout(n: int, V_ref: float) -> tuple[np.ndarray, np.ndarray]:
    """Nodes in ``A`` and ``log(rule weight * dA/ds)``, excluding the likelihood.

    ``n`` is the (even) number of intervals, so there are ``n + 1`` nodes.
    """
    s = np.arange(n + 1) / n
    t = 1.0 - s
    coef = rule_weights(n)
    with np.errstate(divide="ignore"):
        A = V_ref * (1.0 - t * t) / (t * t)
        log_base = np.log(coef) + np.log(2.0 * V_ref) - 3.0 * np.log(t)
    A[-1] = np.inf
    return A, log_base


def _tail_log_base(prof: LikelihoodProfile, V_ref: float, n: int) -> float:
    # limit of l(A) + log(dA/ds) at s = 1; finite only when k - r = 3
    if prof.df != 3:
        return -np.inf
    coef = rule_weights(n)[-1]
    return np.log(coef) + prof.loglik_at_infinity_offset() - 1.5 * np.log(V_ref) + np.log(2.0 * V_ref)


@dataclass
class NodeMixture:
    """Normalized log-weights ``(M, N)`` and Normal components ``(M, N, k)``."""

    log_w: np.ndarray
    B: np.ndarray
    mean: np.ndarray
    var: np.ndarray


def node_mixture(prof: LikelihoodProfile, Y: np.ndarray, n: int, V_ref: float) -> NodeMixture:
    """Posterior mixture components at every node for each row of ``Y``."""
    if prof.df < 3:
        raise NotProper(f"k - r = {prof.df} < 3: the flat-prior posterior on A is improper")
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    A, log_base = node_layout(n, V_ref)
    Af = A[:-1, None]
    t = prof.terms(Af, Y[None, :, :])
    log_w = np.empty((n + 1, Y.shape[0]))
    log_w[:-1] = t.loglik + log_base[:-1, None]
    log_w[-1] = _tail_log_base(prof, V_ref, n)
    norm = logsumexp(log_w, axis=0)
    if not np.all(np.isfinite(norm)):
        raise NotProper("posterior mass is not finite")
    log_w -= norm

    V = prof.V
    B = np.zeros((n + 1, 1, prof.k))
    B[:-1, 0, :] = V / (Af + V)
    mean = np.empty((n + 1,) + Y.shape)
    var = np.empty((n + 1,) + Y.shape)
    Bf = B[:-1]
    mean[:-1] = Y - Bf * t.resid
    if prof.r:
        lev = np.einsum("ka,mab,kb->mk", prof.X, t.cov[:, 0], prof.X)[:, None, :]
    else:
        lev = 0.0
    var[:-1] = V * (1.0 - Bf) + Bf * Bf * lev
    mean[-1] = Y
    var[-1] = V
    return NodeMixture(log_w, B, mean, var)


def build_posterior(d: Dataset, n: int = 512, check: bool = False) -> PosteriorGrid:
    """Quadrature representation of the flat-prior posterior of ``A``.

    Parameters
    ----------
    n : int
        Number of intervals (even; Boole's rule needs a multiple of 4); the
        grid has ``n + 1`` nodes.
    check : bool
        Also build the grid with ``2n`` intervals and record the largest
        relative change in any ``E[B_j | y]`` as ``refinement_error``; a
        ``RuntimeWarning`` is issued if it exceeds 1e-8.
    """
    prof = LikelihoodProfile.from_dataset(d)
    V_ref = reference_scale(d.V)
    mix = node_mixture(prof, d.y, n, V_ref)
    A, _ = node_layout(n, V_ref)
    w = np.exp(mix.log_w[:, 0])
    w /= w.sum()
    err = float("nan")
    if check:
        fine = node_mixture(prof, d.y, 2 * n, V_ref)
        wf = np.exp(fine.log_w[:, 0])
        wf /= wf.sum()
        coarse_m = w @ mix.B[:, 0, :]
        fine_m = wf @ fine.B[:, 0, :]
        err = float(np.max(np.abs(coarse_m - fine_m) / fine_m))
        if err > 1e-8:
            warnings.warn(f"posterior quadrature refinement changed E[B] by {err:.2e}", RuntimeWarning)
    return PosteriorGrid(A, w, V_ref, n, refinement_error=err)


def _B_at_nodes(g: PosteriorGrid, Vj: float) -> np.ndarray:
    with np.errstate(invalid="ignore"):
        B = Vj / (g.A + Vj)
    B[~np.isfinite(g.A)] = 0.0
    return B


def exact_B_moments(g: PosteriorGrid, d: Dataset, j: int) -> tuple[float, float]:
    """Posterior mean and variance of ``B_j = V_j/(A + V_j)``."""
    B = _B_at_nodes(g, d.V[j])
    m = float(g.weights @ B)
    v = float(g.weights @ (B - m) ** 2)
    return m, v


def mixture_cdf(x, log_w, mean, sd):
    """CDF of a Normal mixture; node axis first, ``x`` broadcasts against ``mean[0]``."""
    w = np.exp(log_w)[(...,) + (None,) * (mean.ndim - log_w.ndim)]
    with np.errstate(divide="ignore", invalid="ignore"):
        zs = (x - mean) / sd
    zs = np.where(sd > 0, zs, np.where(x >= mean, np.inf, -np.inf))
    return np.sum(w * ndtr(zs), axis=0)


def _mixture_pdf(x, w, mean, sd):
    with np.errstate(divide="ignore", invalid="ignore"):
        zs = (x - mean) / sd
        dens = np.exp(-0.5 * zs * zs) / (sd * _SQRT_2PI)
    dens = np.where(sd > 0, dens, 0.0)
    return np.sum(w * dens, axis=0)


def mixture_quantile(p: float, log_w, mean, var, tol: float = 1e-12, max_iter: int = 200):
    """Quantile of a Normal mixture by safeguarded Newton with a bisection fallback.

    ``log_w`` has shape ``(M, ...)`` (normalized over axis 0), ``mean`` and
    ``var`` have shape ``(M, ...)`` broadcastable with it plus trailing
    axes. The result has the shape of ``mean[0]`` and satisfies
    ``|CDF - p| <= tol`` unless the bracket collapses first.
    """
    mean = np.asarray(mean, dtype=float)
    sd = np.sqrt(np.asarray(var, dtype=float))
    w = np.exp(log_w)[(...,) + (None,) * (mean.ndim - np.ndim(log_w))]
    lo = np.min(mean - 40.0 * sd, axis=0) - 1e-12
    hi = np.max(mean + 40.0 * sd, axis=0) + 1e-12
    mu = np.sum(w * mean, axis=0)
    sig = np.sqrt(np.maximum(np.sum(w * (var + mean * mean), axis=0) - mu * mu, 0.0))
    x = np.clip(mu + ndtri(p) * sig, lo, hi)
    x = np.array(x, dtype=float)
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    flat = x.reshape(-1)
    lo_f, hi_f = lo.reshape(-1), hi.reshape(-1)
    mean_f = mean.reshape(mean.shape[0], -1)
    sd_f = np.broadcast_to(sd, mean.shape).reshape(mean.shape[0], -1)
    w_f = np.broadcast_to(w, mean.shape).reshape(mean.shape[0], -1)
    active = np.arange(flat.size)
    for _ in range(max_iter):
        if active.size == 0:
            break
        xa = flat[active]
        m_a, s_a, w_a = mean_f[:, active], sd_f[:, active], w_f[:, active]
        with np.errstate(divide="ignore", invalid="ignore"):
            zs = (xa - m_a) / s_a
        zs = np.where(s_a > 0, zs, np.where(xa >= m_a, np.inf, -np.inf))
        F = np.sum(w_a * ndtr(zs), axis=0)
        diff = F - p
        done = np.abs(diff) <= tol
        below = diff < 0
        lo_f[active] = np.where(below, xa, lo_f[active])
        hi_f[active] = np.where(below, hi_f[active], xa)
        f = _mixture_pdf(xa, w_a, m_a, s_a)
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = xa - diff / f
        la, ha = lo_f[active], hi_f[active]
        ok = np.isfinite(newton) & (newton > la) & (newton < ha)
        nxt = np.where(ok, newton, 0.5 * (la + ha))
        collapsed = (ha - la) <= 4e-16 * np.maximum(np.abs(la), np.abs(ha))
        flat[active] = np.where(done, xa, nxt)
        active = active[~(done | collapsed)]
    return flat.reshape(x.shape)


def exact_theta_inference(g: PosteriorGrid, d: Dataset, j: int, level: float = 0.95) -> GroupInference:
    """Exact posterior mean, variance and equal-tailed interval for ``theta_j``."""
    if not 0.5 < level < 1:
        raise ValueError(f"level must lie in (0.5, 1), got {level}")
    prof = LikelihoodProfile.from_dataset(d)
    A = g.A
    finite = np.isfinite(A)
    t = prof.terms(A[finite], d.y)
    Vj = d.V[j]
    B = _B_at_nodes(g, Vj)
    mean = np.full(A.size, d.y[j])
    var = np.full(A.size, Vj)
    Bf = B[finite]
    mean[finite] = d.y[j] - Bf * t.resid[:, j]
    if prof.r:
        x = d.X[j]
        lev = np.einsum("a,mab,b->m", x, t.cov, x)
    else:
        lev = 0.0
    var[finite] = Vj * (1.0 - Bf) + Bf * Bf * lev
    w = g.weights
    keep = w > 0
    with np.errstate(divide="ignore"):
        log_w = np.log(w[keep])
    mu = float(w @ mean)
    tv = float(w @ (var + mean * mean) - mu * mu)
    lo = float(mixture_quantile(0.5 * (1 - level), log_w, mean[keep], var[keep]))
    hi = float(mixture_quantile(0.5 * (1 + level), log_w, mean[keep], var[keep]))
    bm = float(w @ B)
    bv = float(w @ (B - bm) ** 2)
    return GroupInference(bm, bm, bv, mu, tv, lo, hi, level)
