"""Domain types for the two-level Normal (Fay-Herriot) model.

Level I:  y_j | theta_j ~ Normal(theta_j, V_j), V_j known.
Level II: theta_j ~ Normal(x_j' beta, A).

A :class:`Dataset` with ``r = 0`` is the known-mean configuration
(theta_j ~ Normal(0, A)); centre the data first if the known mean is not 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Hashable, Sequence

import numpy as np

from .exceptions import (
    DimensionMismatch,
    NegativeA,
    NonFiniteValue,
    NonPositiveVariance,
    RankDeficientDesign,
    TooFewGroups,
)

__all__ = [
    "GroupObservation",
    "Dataset",
    "Hyperparameters",
    "validate_dataset",
    "shrinkages",
]


@dataclass(frozen=True)
class GroupObservation:
    """One group's summary: estimate ``y``, sampling variance ``V``, covariates ``x``."""

    id: Hashable
    y: float
    V: float
    x: tuple[float, ...] = (1.0,)


@dataclass(frozen=True)
class Dataset:
    """An ordered collection of groups sharing one covariate dimension ``r``.

    Construction does not validate; call :func:`validate_dataset` (or use
    :meth:`from_arrays`, which validates by default).
    """

    groups: tuple[GroupObservation, ...]
    r: int = 1

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(self.groups))

    @classmethod
    def from_arrays(
        cls,
        y: Sequence[float],
        V: Sequence[float] | float,
        X: np.ndarray | None = None,
        ids: Sequence[Hashable] | None = None,
        validate: bool = True,
    ) -> "Dataset":
        """Build a dataset from parallel arrays.

        ``V`` may be a scalar (equal variances). ``X`` defaults to an
        intercept column; pass an array of shape ``(k, 0)`` for the
        known-mean model.
        """
        y = np.asarray(y, dtype=float).ravel()
        k = y.size
        V = np.broadcast_to(np.asarray(V, dtype=float), (k,))
        if X is None:
            X = np.ones((k, 1))
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.shape[0] != k:
            raise DimensionMismatch(f"X has {X.shape[0]} rows but y has {k} entries")
        if ids is None:
            ids = range(1, k + 1)
        groups = tuple(
            GroupObservation(i, float(yj), float(vj), tuple(float(t) for t in xj))
            for i, yj, vj, xj in zip(ids, y, V, X)
        )
        d = cls(groups, r=X.shape[1])
        return validate_dataset(d) if validate else d

    @property
    def k(self) -> int:
        return len(self.groups)

    @cached_property
    def y(self) -> np.ndarray:
        a = np.array([g.y for g in self.groups], dtype=float)
        a.flags.writeable = False
        return a

    @cached_property
    def V(self) -> np.ndarray:
        a = np.array([g.V for g in self.groups], dtype=float)
        a.flags.writeable = False
        return a

    @cached_property
    def X(self) -> np.ndarray:
        a = np.array([g.x for g in self.groups], dtype=float).reshape(self.k, self.r)
        a.flags.writeable = False
        return a

    @property
    def ids(self) -> list:
        return [g.id for g in self.groups]

    @property
    def equal_variances(self) -> bool:
        V = self.V
        return bool(np.all(np.abs(V - V[0]) <= 1e-12 * abs(V[0])))

    def with_y(self, y: Sequence[float]) -> "Dataset":
        """Same groups, new estimates (used for resampling and equivariance checks)."""
        groups = tuple(
            GroupObservation(g.id, float(v), g.V, g.x) for g, v in zip(self.groups, y)
        )
        return Dataset(groups, self.r)

    def permuted(self, order: Sequence[int]) -> "Dataset":
        return Dataset(tuple(self.groups[i] for i in order), self.r)


@dataclass(frozen=True)
class Hyperparameters:
    A: float
    beta: np.ndarray = field(default_factory=lambda: np.zeros(1))

    def __post_init__(self):
        if not self.A >= 0:
            raise NegativeA(f"A must be nonnegative, got {self.A}")
        object.__setattr__(self, "beta", np.atleast_1d(np.asarray(self.beta, dtype=float)))


def validate_dataset(d: Dataset) -> Dataset:
    """Check every model invariant and return ``d`` unchanged.

    Raises
    ------
    DimensionMismatch
        Some covariate row does not have ``r`` entries.
    NonFiniteValue
        Some ``y``, ``V`` or covariate is NaN or infinite.
    NonPositiveVariance
        Some ``V_j <= 0``.
    TooFewGroups
        ``k < r + 3``; the flat-prior posterior on ``A`` would be improper.
    RankDeficientDesign
        The design matrix does not have full column rank.
    """
    for i, g in enumerate(d.groups):
        if len(g.x) != d.r:
            raise DimensionMismatch(
                f"group {g.id!r} (row {i}) has {len(g.x)} covariates, expected r={d.r}"
            )
        if not (np.isfinite(g.y) and np.isfinite(g.V) and np.all(np.isfinite(g.x))):
            raise NonFiniteValue(f"group {g.id!r} (row {i}) has a non-finite value")
        if g.V <= 0:
            raise NonPositiveVariance(f"group {g.id!r} (row {i}) has V={g.V}; V must be > 0")
    if d.k < d.r + 3:
        raise TooFewGroups(f"k={d.k} groups but k >= r + 3 = {d.r + 3} is required")
    if d.r > 0 and np.linalg.matrix_rank(d.X) < d.r:
        raise RankDeficientDesign(f"design matrix does not have full column rank r={d.r}")
    return d


def shrinkages(A: float, d: Dataset) -> np.ndarray:
    """Shrinkage factors ``B_j = V_j / (A + V_j)``.

    >>> shrinkages(2.0, Dataset.from_arrays([0, 0, 0, 0], [1, 4, 1, 4], validate=False))
    array([0.33333333, 0.66666667, 0.33333333, 0.66666667])
    """
    if not A >= 0:
        raise NegativeA(f"A must be nonnegative, got {A}")
    V = d.V
    return V / (A + V)
