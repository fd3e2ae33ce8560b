"""Monte Carlo checks of frequency coverage, squared-error risk and minimaxity.

Data for replicate ``rep`` at grid point ``g`` are generated from a
counter-based stream keyed by ``(seed, g, rep)``. Replicates are processed
in fixed-size chunks, possibly on several threads, and the per-replicate
results are concatenated in replicate order before any reduction. Reports
are therefore identical for any worker count.
"""

from __future__ import annotations

import io
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .estimators import adm_shp_batch, maximize_batch, normal_quantile
from .exceptions import ShrinkageError
from .likelihood import LikelihoodProfile
from .model import Dataset, validate_dataset
from .posterior import mixture_quantile, node_mixture, reference_scale
from .rng import normals

__all__ = [
    "Procedure",
    "SimSpec",
    "CoverageRow",
    "SimReport",
    "RiskRow",
    "RiskReport",
    "BaranchikReport",
    "JamesSteinReport",
    "parse_procedure",
    "simulate_coverage",
    "simulate_risk",
    "simulate_james_stein",
    "baranchik_check",
]

CHUNK = 500

_COVERAGE_STREAM = 1
_RISK_STREAM = 2
_JS_STREAM = 3


@dataclass(frozen=True)
class Procedure:
    kind: str
    q: float = 1.0

    @property
    def name(self) -> str:
        if self.kind == "ADM_Q":
            return f"ADM_Q({self.q:g})"
        return self.kind


_KINDS = {"EXACT_SHP", "ADM_SHP", "MLE_PLUGIN", "JS_PLUS", "SAMPLE_MEAN"}


def parse_procedure(p) -> Procedure:
    """Accepts ``Procedure`` objects or names like ``adm_shp``, ``ADM_Q(0.5)``, ``adm_q:0.5``."""
    if isinstance(p, Procedure):
        return p
    s = str(p).strip().upper()
    m = re.fullmatch(r"ADM_Q\s*[(:=]\s*([0-9.eE+-]+)\s*\)?", s)
    if m:
        q = float(m.group(1))
        if not 0 < q <= 1:
            raise ValueError(f"ADM_Q needs q in (0, 1], got {q}")
        return Procedure("ADM_Q", q)
    if s not in _KINDS:
        raise ValueError(f"unknown procedure {p!r}")
    return Procedure(s)


def _workers(workers: int | None) -> int:
    if workers is None:
        workers = int(os.environ.get("SHRINK_THREADS", "1") or 1)
    return max(1, int(workers))


@dataclass
class SimSpec:
    """Simulation design.

    ``V`` is a scalar (equal variances) or a length-``k`` vector. ``X``
    defaults to an intercept column and ``beta`` to zeros. ``theta_configs``
    is only used by :func:`simulate_risk`.
    """

    k: int
    V: float | np.ndarray = 1.0
    A_grid: tuple[float, ...] = (0.0, 0.25, 1.0, 4.0, 16.0)
    reps: int = 1000
    level: float = 0.95
    seed: int = 0
    procedures: tuple = ("EXACT_SHP", "ADM_SHP", "MLE_PLUGIN")
    X: np.ndarray | None = None
    beta: np.ndarray | None = None
    theta_configs: list | None = None
    nodes: int = 256

    def __post_init__(self):
        self.V = np.broadcast_to(np.asarray(self.V, dtype=float), (self.k,)).copy()
        self.X = np.ones((self.k, 1)) if self.X is None else np.asarray(self.X, dtype=float).reshape(self.k, -1)
        self.beta = np.zeros(self.r) if self.beta is None else np.asarray(self.beta, dtype=float).reshape(self.r)
        self.A_grid = tuple(float(a) for a in self.A_grid)
        self.procedures = tuple(parse_procedure(p) for p in self.procedures)
        if int(self.reps) < 1:
            raise ValueError("reps must be >= 1")
        self.reps = int(self.reps)
        if any(not a >= 0 for a in self.A_grid):
            raise ValueError("A_grid entries must be nonnegative")
        if not 0.5 < self.level < 1:
            raise ValueError("level must lie in (0.5, 1)")
        validate_dataset(Dataset.from_arrays(np.zeros(self.k), self.V, self.X, validate=False))

    @property
    def r(self) -> int:
        return self.X.shape[1]

    def profile(self) -> LikelihoodProfile:
        return LikelihoodProfile(self.V, self.X)


@dataclass
class _Fit:
    theta_hat: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    collapse: np.ndarray
    failed: np.ndarray


def _run(proc: Procedure, prof: LikelihoodProfile, Y: np.ndarray, level: float, nodes: int) -> _Fit:
    n, k = Y.shape
    V = prof.V
    z = float(normal_quantile(0.5 * (1.0 + level)))
    none = np.zeros(n, dtype=bool)
    if proc.kind == "SAMPLE_MEAN":
        half = z * np.sqrt(V)
        return _Fit(Y, Y - half, Y + half, none, none)
    if proc.kind in ("ADM_SHP", "ADM_Q"):
        q = 1.0 if proc.kind == "ADM_SHP" else proc.q
        b = adm_shp_batch(prof, Y, q)
        half = z * np.sqrt(np.where(b.failed[:, None], 1.0, b.theta_var))
        return _Fit(b.theta_hat, b.theta_hat - half, b.theta_hat + half, b.A_hat == 0, b.failed)
    if proc.kind == "MLE_PLUGIN":
        est = maximize_batch(prof, Y, 0.0)
        A = np.where(est.failed, 1.0, est.A_hat)
        t = prof.terms(A, Y)
        B = V / (A[:, None] + V)
        theta = Y - B * t.resid
        half = z * np.sqrt(V * (1.0 - B))
        return _Fit(theta, theta - half, theta + half, est.A_hat == 0, est.failed)
    if proc.kind == "JS_PLUS":
        eq = np.all(np.abs(V - V[0]) <= 1e-12 * V[0])
        intercept = prof.r == 1 and np.all(prof.X == prof.X[0, 0]) and prof.X[0, 0] != 0
        if not (eq and intercept and k >= 4):
            raise ShrinkageError("JS_PLUS needs equal variances, an intercept-only design and k >= 4")
        dev = Y - Y.mean(axis=1, keepdims=True)
        S = np.sum(dev * dev, axis=1)
        with np.errstate(divide="ignore"):
            B = np.minimum(1.0, (k - 3) * V[0] / S)
        theta = Y - B[:, None] * dev
        half = z * np.sqrt(V * (1.0 - B[:, None]))
        return _Fit(theta, theta - half, theta + half, B >= 1.0, none)
    if proc.kind == "EXACT_SHP":
        mix = node_mixture(prof, Y, nodes, reference_scale(V))
        w = np.exp(mix.log_w)[:, :, None]
        theta = np.sum(w * mix.mean, axis=0)
        lo = mixture_quantile(0.5 * (1.0 - level), mix.log_w, mix.mean, mix.var)
        hi = mixture_quantile(0.5 * (1.0 + level), mix.log_w, mix.mean, mix.var)
        return _Fit(theta, lo, hi, none, none)
    raise ValueError(proc.kind)


def _safe_run(proc, prof, Y, level, nodes, point_only=False) -> _Fit:
    try:
        if point_only and proc.kind == "EXACT_SHP":
            mix = node_mixture(prof, Y, nodes, reference_scale(prof.V))
            theta = np.sum(np.exp(mix.log_w)[:, :, None] * mix.mean, axis=0)
            none = np.zeros(Y.shape[0], dtype=bool)
            return _Fit(theta, theta, theta, none, none)
        fit = _run(proc, prof, Y, level, nodes)
    except (ShrinkageError, FloatingPointError, np.linalg.LinAlgError):
        nan = np.full(Y.shape, np.nan)
        return _Fit(nan, nan, nan, np.zeros(Y.shape[0], dtype=bool), np.ones(Y.shape[0], dtype=bool))
    bad = fit.failed | ~np.all(np.isfinite(fit.theta_hat), axis=1)
    fit.failed = bad
    return fit


@dataclass
class CoverageRow:
    procedure: str
    A: float
    coverage: float
    coverage_mcse: float
    coverage_by_group: np.ndarray
    mean_width: float
    mse: float
    mse_mcse: float
    collapse_freq: float
    n_ok: int
    n_failed: int


@dataclass
class SimReport:
    spec: SimSpec
    rows: list[CoverageRow] = field(default_factory=list)

    def row(self, procedure, A: float) -> CoverageRow:
        name = parse_procedure(procedure).name
        for r in self.rows:
            if r.procedure == name and r.A == float(A):
                return r
        raise KeyError((name, A))

    def to_csv(self) -> str:
        """CSV with columns ``procedure,A,coverage,coverage_mcse,mean_width,collapse_freq``."""
        buf = io.StringIO()
        buf.write("procedure,A,coverage,coverage_mcse,mean_width,collapse_freq\n")
        for r in self.rows:
            vals = [r.A, r.coverage, r.coverage_mcse, r.mean_width, r.collapse_freq]
            buf.write(r.procedure + "," + ",".join(format(v, ".17g") for v in vals) + "\n")
        return buf.getvalue()


def _chunks(reps: int):
    return [np.arange(s, min(s + CHUNK, reps)) for s in range(0, reps, CHUNK)]


def _coverage_chunk(spec: SimSpec, prof, gi: int, A: float, reps: np.ndarray):
    k = spec.k
    z = normals(spec.seed, _COVERAGE_STREAM, gi, reps, 2 * k)
    theta = spec.X @ spec.beta + np.sqrt(A) * z[:, :k]
    Y = theta + np.sqrt(spec.V) * z[:, k:]
    out = []
    for proc in spec.procedures:
        fit = _safe_run(proc, prof, Y, spec.level, spec.nodes)
        covered = (fit.lo <= theta) & (theta <= fit.hi)
        width = fit.hi - fit.lo
        loss = np.sum((fit.theta_hat - theta) ** 2, axis=1)
        out.append((covered, width, loss, fit.collapse, fit.failed))
    return out


def _map_chunks(fn, chunks, workers):
    if workers == 1 or len(chunks) == 1:
        return [fn(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, chunks))


def simulate_coverage(spec: SimSpec, workers: int | None = None) -> SimReport:
    """Frequency coverage of each procedure's intervals at every ``A`` in the grid.

    For each replicate, theta_j ~ Normal(x_j'beta, A) and y_j ~ Normal(theta_j, V_j).
    Replicates where a procedure fails are counted in ``n_failed`` and left out
    of that procedure's averages.
    """
    prof = spec.profile()
    workers = _workers(workers)
    report = SimReport(spec)
    chunks = _chunks(spec.reps)
    for gi, A in enumerate(spec.A_grid):
        parts = _map_chunks(lambda c: _coverage_chunk(spec, prof, gi, A, c), chunks, workers)
        for pi, proc in enumerate(spec.procedures):
            covered = np.concatenate([p[pi][0] for p in parts])
            width = np.concatenate([p[pi][1] for p in parts])
            loss = np.concatenate([p[pi][2] for p in parts])
            collapse = np.concatenate([p[pi][3] for p in parts])
            failed = np.concatenate([p[pi][4] for p in parts])
            ok = ~failed
            n_ok = int(ok.sum())
            if n_ok:
                by_group = covered[ok].mean(axis=0)
                cov = float(by_group.mean())
                mse = float(loss[ok].mean())
                mse_se = float(loss[ok].std(ddof=1) / np.sqrt(n_ok)) if n_ok > 1 else float("nan")
                mw = float(width[ok].mean())
                cf = float(collapse[ok].mean())
            else:
                by_group = np.full(spec.k, np.nan)
                cov = mse = mse_se = mw = cf = float("nan")
            mcse = float(np.sqrt(cov * (1.0 - cov) / n_ok)) if n_ok else float("nan")
            report.rows.append(CoverageRow(proc.name, A, cov, mcse, by_group, mw, mse, mse_se,
                                           cf, n_ok, int(failed.sum())))
    return report


@dataclass
class RiskRow:
    procedure: str
    config: int
    spread: float
    risk: float
    risk_mcse: float
    n_ok: int
    n_failed: int


@dataclass
class RiskReport:
    spec: SimSpec
    rows: list[RiskRow] = field(default_factory=list)
    losses: dict = field(default_factory=dict, repr=False)

    def row(self, procedure, config: int) -> RiskRow:
        name = parse_procedure(procedure).name
        for r in self.rows:
            if r.procedure == name and r.config == config:
                return r
        raise KeyError((name, config))

    def difference(self, p1, p2, config: int) -> tuple[float, float]:
        """Paired mean of ``loss(p1) - loss(p2)`` and its Monte Carlo standard error."""
        a = self.losses[(parse_procedure(p1).name, config)]
        b = self.losses[(parse_procedure(p2).name, config)]
        d = a - b
        d = d[np.isfinite(d)]
        return float(d.mean()), float(d.std(ddof=1) / np.sqrt(d.size))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("procedure,config,spread,risk,risk_mcse\n")
        for r in self.rows:
            buf.write(f"{r.procedure},{r.config},"
                      + ",".join(format(v, ".17g") for v in (r.spread, r.risk, r.risk_mcse)) + "\n")
        return buf.getvalue()


def _risk_chunk(spec, prof, ci, theta, reps):
    z = normals(spec.seed, _RISK_STREAM, ci, reps, spec.k)
    Y = theta + np.sqrt(spec.V) * z
    out = []
    for proc in spec.procedures:
        fit = _safe_run(proc, prof, Y, spec.level, spec.nodes, point_only=True)
        loss = np.sum((fit.theta_hat - theta) ** 2, axis=1)
        out.append(np.where(fit.failed, np.nan, loss))
    return out


def simulate_risk(spec: SimSpec, workers: int | None = None) -> RiskReport:
    """Total squared-error risk ``sum_j E(theta_hat_j - theta_j)^2`` at fixed theta vectors."""
    if not spec.theta_configs:
        raise ValueError("simulate_risk needs spec.theta_configs")
    prof = spec.profile()
    workers = _workers(workers)
    report = RiskReport(spec)
    chunks = _chunks(spec.reps)
    for ci, theta in enumerate(spec.theta_configs):
        theta = np.asarray(theta, dtype=float).reshape(spec.k)
        spread = float(np.sum((theta - theta.mean()) ** 2))
        parts = _map_chunks(lambda c: _risk_chunk(spec, prof, ci, theta, c), chunks, workers)
        for pi, proc in enumerate(spec.procedures):
            loss = np.concatenate([p[pi] for p in parts])
            ok = np.isfinite(loss)
            n_ok = int(ok.sum())
            risk = float(loss[ok].mean()) if n_ok else float("nan")
            se = float(loss[ok].std(ddof=1) / np.sqrt(n_ok)) if n_ok > 1 else float("nan")
            report.losses[(proc.name, ci)] = loss
            report.rows.append(RiskRow(proc.name, ci, spread, risk, se, n_ok, spec.reps - n_ok))
    return report


@dataclass
class JamesSteinReport:
    B_true: float
    mean_B_raw: float
    mcse: float
    frac_above_one: float
    reps: int


def simulate_james_stein(k: int, V: float, A: float, reps: int, seed: int = 0,
                         mean: float = 0.0, workers: int | None = None) -> JamesSteinReport:
    """Sampling distribution of the known-mean James-Stein factor ``(k-2) V / sum (y - mean)^2``."""
    if k < 3:
        raise ValueError("known-mean James-Stein needs k >= 3")

    def chunk(reps_c):
        z = normals(seed, _JS_STREAM, 0, reps_c, 2 * k)
        theta = mean + np.sqrt(A) * z[:, :k]
        y = theta + np.sqrt(V) * z[:, k:]
        return (k - 2) * V / np.sum((y - mean) ** 2, axis=1)

    B = np.concatenate(_map_chunks(chunk, [np.arange(s, min(s + 20 * CHUNK, reps))
                                          for s in range(0, reps, 20 * CHUNK)], _workers(workers)))
    return JamesSteinReport(V / (A + V), float(B.mean()), float(B.std(ddof=1) / np.sqrt(reps)),
                            float(np.mean(B > 1.0)), reps)


@dataclass
class BaranchikReport:
    S: np.ndarray
    tau: np.ndarray
    min_adjacent_diff: float
    nondecreasing: bool
    max_tau: float
    bound: float
    bounded: bool

    @property
    def passed(self) -> bool:
        return self.nondecreasing and self.bounded


def baranchik_check(k: int, V: float, S_grid, q: float = 1.0) -> BaranchikReport:
    """Check Baranchik's sufficient conditions for the ADM rule with known mean.

    With ``S = sum y_j^2`` the rule is ``(1 - tau(S)/S) y`` where
    ``tau(S) = S * B_adm(S) / V``. It is minimax if ``tau`` is nondecreasing
    and ``0 <= tau <= 2(k - 2)``.
    """
    if k < 3:
        raise ValueError("k must be >= 3")
    S = np.asarray(S_grid, dtype=float)
    prof = LikelihoodProfile(np.full(k, float(V)), np.zeros((k, 0)))
    Y = np.sqrt(S / k)[:, None] * np.ones(k)
    est = maximize_batch(prof, Y, q)
    B = V / (est.A_hat + V)
    tau = S * B / V
    diffs = np.diff(tau)
    mind = float(diffs.min()) if diffs.size else 0.0
    bound = 2.0 * (k - 2)
    mx = float(np.max(tau))
    return BaranchikReport(S, tau, mind, mind >= -1e-10, mx, bound, mx <= bound)
