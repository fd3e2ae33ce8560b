"""Restricted (REML) marginal likelihood of the Level-II variance ``A``.

With Sigma(A) = diag(A + V_j) and beta removed by integration under a flat
prior, the log-likelihood (dropping the constant ``-(k - r)/2 * ln(2 pi)``) is

    l(A) = -1/2 sum_j ln(A + V_j) - 1/2 ln det(X' Sigma^-1 X)
           - 1/2 (y - X b(A))' Sigma^-1 (y - X b(A))

where b(A) is the GLS estimate. Sigma is diagonal, so everything reduces to
weighted sums over groups; no k x k matrix is formed.

The work is done by :class:`LikelihoodProfile`, which broadcasts over arrays
of ``A`` values and of data vectors. The Monte Carlo harness relies on this:
``V`` and ``X`` stay fixed while ``y`` is resampled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import BadQ, NegativeA, NonPositiveA, SingularSystem
from .model import Dataset

__all__ = [
    "ProfileTerms",
    "LikelihoodProfile",
    "gls_beta",
    "reml_loglik",
    "reml_score",
    "adjusted_loglik",
]

_COND_LIMIT = 1e12


@dataclass
class ProfileTerms:
    """Per-``A`` quantities; leading axes follow the broadcast of ``A`` and ``Y``.

    Attributes
    ----------
    loglik : REML log-likelihood.
    score : d loglik / dA (only if requested).
    hessian : d^2 loglik / dA^2 (only if requested).
    beta : GLS coefficients, shape ``(..., r)``.
    cov : ``(X' Sigma^-1 X)^-1``, shape ``(..., r, r)``; broadcast over ``A`` only.
    resid : ``y - X beta``, shape ``(..., k)``.
    weights : ``1 / (A + V_j)``, shape ``(..., k)``; broadcast over ``A`` only.
    """

    loglik: np.ndarray
    beta: np.ndarray
    cov: np.ndarray
    resid: np.ndarray
    weights: np.ndarray
    score: np.ndarray | None = None
    hessian: np.ndarray | None = None


class LikelihoodProfile:
    """REML likelihood for fixed sampling variances ``V`` and design ``X``.

    Parameters
    ----------
    V : array of shape (k,)
    X : array of shape (k, r); ``r`` may be 0 (known mean zero).
    """

    def __init__(self, V, X):
        self.V = np.asarray(V, dtype=float)
        self.X = np.asarray(X, dtype=float).reshape(self.V.size, -1)
        self.k, self.r = self.X.shape
        if self.r:
            self._logdet_xtx = np.linalg.slogdet(self.X.T @ self.X)[1]
        else:
            self._logdet_xtx = 0.0

    @classmethod
    def from_dataset(cls, d: Dataset) -> "LikelihoodProfile":
        return cls(d.V, d.X)

    @property
    def df(self) -> int:
        """Residual degrees of freedom ``k - r``."""
        return self.k - self.r

    def terms(self, A, Y, score: bool = False, hessian: bool = False) -> ProfileTerms:
        """Evaluate the likelihood and GLS pieces.

        ``A`` has shape ``S_a`` and ``Y`` has shape ``S_y + (k,)``; ``S_a`` and
        ``S_y`` must broadcast. ``A`` must be finite and nonnegative.
        """
        A = np.asarray(A, dtype=float)
        Y = np.asarray(Y, dtype=float)
        X = self.X
        w = 1.0 / (A[..., None] + self.V)
        loglik_v = -0.5 * np.sum(np.log(A[..., None] + self.V), axis=-1)
        if self.r:
            F = np.einsum("...k,ka,kb->...ab", w, X, X)
            cov = np.linalg.inv(F)
            logdet_F = np.linalg.slogdet(F)[1]
            g = np.einsum("...k,ka->...a", w * Y, X)
            beta = np.einsum("...ab,...b->...a", cov, g)
            resid = Y - beta @ X.T
        else:
            cov = np.zeros(A.shape + (0, 0))
            logdet_F = np.zeros(A.shape)
            beta = np.zeros(np.broadcast_shapes(A.shape, Y.shape[:-1]) + (0,))
            resid = np.broadcast_to(Y, beta.shape[:-1] + (self.k,))
        quad = np.sum(w * resid**2, axis=-1)
        loglik = loglik_v - 0.5 * logdet_F - 0.5 * quad
        out = ProfileTerms(loglik, beta, cov, resid, w)
        if score:
            trace_p = np.sum(w, axis=-1)
            if self.r:
                M = np.einsum("...k,ka,kb->...ab", w * w, X, X)
                trace_p = trace_p - np.sum(cov * M, axis=(-2, -1))
            out.score = -0.5 * trace_p + 0.5 * np.sum((w * resid) ** 2, axis=-1)
        if hessian:
            # dP/dA = -P^2, so l'' = 1/2 tr P^2 - y'P^3 y, with P y = w * resid
            u = w * resid
            tr_p2 = np.sum(w * w, axis=-1)
            Pu = w * u
            if self.r:
                M2 = np.einsum("...k,ka,kb->...ab", w * w, X, X)
                M3 = np.einsum("...k,ka,kb->...ab", w**3, X, X)
                CM = cov @ M2
                tr_p2 = (tr_p2 - 2.0 * np.sum(cov * M3, axis=(-2, -1))
                         + np.einsum("...ab,...ba->...", CM, CM))
                Xwu = np.einsum("...k,ka->...a", w * u, X)
                Pu = Pu - w * (np.einsum("...ab,...b->...a", cov, Xwu) @ X.T)
            out.hessian = 0.5 * tr_p2 - np.sum(u * Pu, axis=-1)
        return out

    def loglik(self, A, Y):
        return self.terms(A, Y).loglik

    def score(self, A, Y):
        return self.terms(A, Y, score=True).score

    def loglik_at_infinity_offset(self) -> float:
        """Limit of ``l(A) + (k - r)/2 * ln A`` as ``A -> inf``.

        Equals ``-1/2 ln det(X'X)``; used for the quadrature node at ``A = inf``.
        """
        return -0.5 * self._logdet_xtx


def _check_A(A: float) -> float:
    A = float(A)
    if not A >= 0:
        raise NegativeA(f"A must be nonnegative, got {A}")
    return A


def gls_beta(A: float, d: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """GLS coefficients and their covariance at Level-II variance ``A``.

    Returns
    -------
    beta : ndarray of shape (r,)
        ``(X' S^-1 X)^-1 X' S^-1 y`` with ``S = diag(A + V_j)``.
    cov : ndarray of shape (r, r)
        ``(X' S^-1 X)^-1``.

    Raises
    ------
    SingularSystem
        If ``X' S^-1 X`` has condition number above 1e12.
    """
    A = _check_A(A)
    prof = LikelihoodProfile.from_dataset(d)
    if prof.r:
        w = 1.0 / (A + prof.V)
        F = (prof.X * w[:, None]).T @ prof.X
        if np.linalg.cond(F) > _COND_LIMIT:
            raise SingularSystem("X' Sigma^-1 X is numerically singular")
    t = prof.terms(A, d.y)
    return t.beta, t.cov


def reml_loglik(A: float, d: Dataset) -> float:
    """REML log-likelihood of ``A``, without the ``2 pi`` constant.

    For equal variances and an intercept-only design this equals
    ``-(k-1)/2 ln(A+V) - S/(2(A+V)) - 1/2 ln k`` with ``S = sum (y - ybar)^2``.
    """
    A = _check_A(A)
    gls_beta(A, d)  # surfaces SingularSystem
    return float(LikelihoodProfile.from_dataset(d).terms(A, d.y).loglik)


def reml_score(A: float, d: Dataset) -> float:
    """Analytic derivative of :func:`reml_loglik` with respect to ``A``.

    ``-1/2 tr P + 1/2 y' P^2 y`` with ``P = S^-1 - S^-1 X (X'S^-1X)^-1 X' S^-1``.
    """
    A = _check_A(A)
    return float(LikelihoodProfile.from_dataset(d).terms(A, d.y, score=True).score)


def _check_q(q: float) -> float:
    q = float(q)
    if not 0 < q <= 1:
        raise BadQ(f"q must lie in (0, 1], got {q}")
    return q


def adjusted_loglik(A: float, q: float, d: Dataset) -> float:
    """``q ln A + l(A)``: the log of the likelihood multiplied by ``A**q``."""
    q = _check_q(q)
    A = float(A)
    if not A > 0:
        raise NonPositiveA(f"A must be strictly positive, got {A}")
    return q * np.log(A) + reml_loglik(A, d)
