"""Command-line front end.

Subcommands: ``fit``, ``simulate``, ``risk``, ``adm-demo``, ``baranchik``.
Every output is CSV whose leading ``#`` lines record the run configuration.
Exit status is 2 for bad input or flags and 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from pathlib import Path

import numpy as np
from scipy.special import gammainc, gammaln
from scipy.stats import beta as beta_dist

from . import __version__
from .adm import PearsonFamily, adm_fit
from .estimators import (
    _b_space_target,
    adm_shp_fit,
    estimate_A_adm,
    estimate_A_mle,
    normal_quantile,
)
from .exceptions import NumericalError, ShrinkageError
from .likelihood import LikelihoodProfile
from .model import Dataset, validate_dataset
from .posterior import build_posterior, exact_theta_inference
from .simharness import SimSpec, baranchik_check, simulate_coverage, simulate_risk

RESULT_COLUMNS = ["id", "y", "V", "B_hat", "B_mean", "B_var", "theta_hat", "se", "lo", "hi"]


class InputError(Exception):
    """Raised for unreadable or invalid input; maps to exit status 2."""


def fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def _config_lines(args: argparse.Namespace) -> list[str]:
    lines = [f"# admshp {__version__}", f"# subcommand={args.command}"]
    for key, val in sorted(vars(args).items()):
        if key in ("command", "func"):
            continue
        lines.append(f"# {key}={val}")
    return lines


def _write(text: str, output: str | None) -> None:
    if output in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(output).write_text(text, encoding="utf-8", newline="\n")


def read_input_table(path: str) -> Dataset:
    """Parse ``id,y,V[,x1,...,xr]``; no x columns means intercept-only."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"{path}: cannot read: {exc.strerror}") from exc
    header = None
    rows, lines = [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        fields = next(csv.reader([raw]))
        if header is None:
            header = [f.strip() for f in fields]
            if header[:3] != ["id", "y", "V"]:
                raise InputError(f"{path}:{lineno}: header must start with id,y,V")
            continue
        if len(fields) != len(header):
            raise InputError(f"{path}:{lineno}: expected {len(header)} fields, got {len(fields)}")
        try:
            nums = [float(f) for f in fields[1:]]
        except ValueError:
            raise InputError(f"{path}:{lineno}: non-numeric value in row {fields[0]!r}") from None
        if not all(np.isfinite(nums)):
            raise InputError(f"{path}:{lineno}: non-finite value in row {fields[0]!r}")
        if nums[1] <= 0:
            raise InputError(f"{path}:{lineno}: row {fields[0]!r} has V={fields[2].strip()}; V must be > 0")
        rows.append((fields[0].strip(), nums))
        lines.append(lineno)
    if header is None:
        raise InputError(f"{path}: no header line")
    if not rows:
        raise InputError(f"{path}: no data rows")
    r = len(header) - 3
    y = [n[0] for _, n in rows]
    V = [n[1] for _, n in rows]
    X = np.array([n[2:] for _, n in rows]) if r else None
    d = Dataset.from_arrays(y, V, X, ids=[i for i, _ in rows], validate=False)
    try:
        validate_dataset(d)
    except ShrinkageError as exc:
        raise InputError(f"{path}: {exc}") from None
    return d


def read_results(text: str) -> tuple[list[str], list[dict]]:
    """Split a results file into its ``#`` lines and typed data rows."""
    comments = [ln for ln in text.splitlines() if ln.startswith("#")]
    body = "\n".join(ln for ln in text.splitlines() if ln and not ln.startswith("#"))
    out = []
    for row in csv.DictReader(io.StringIO(body)):
        out.append({k: (v if k in ("id", "procedure") else float(v)) for k, v in row.items()})
    return comments, out


def cmd_fit(args) -> int:
    d = read_input_table(args.input)
    lines = _config_lines(args)
    z = float(normal_quantile(0.5 * (1 + args.level)))
    table = []
    if args.estimator == "adm":
        res = adm_shp_fit(d, q=args.q, level=args.level)
        est, beta = res.A, res.beta
        for g, gi in zip(d.groups, res.per_group):
            table.append([g.id, g.y, g.V, gi.B_hat, gi.B_mean, gi.B_var, gi.theta_hat, gi.se, gi.lo, gi.hi])
        summary = [est.A_hat, "ADM", args.q]
    elif args.estimator == "mle":
        est = estimate_A_mle(d)
        t = LikelihoodProfile.from_dataset(d).terms(est.A_hat, d.y)
        beta = t.beta
        for j, g in enumerate(d.groups):
            B = g.V / (est.A_hat + g.V)
            theta = g.y - B * t.resid[j]
            se = float(np.sqrt(g.V * (1 - B)))
            table.append([g.id, g.y, g.V, B, B, 0.0, theta, se, theta - z * se, theta + z * se])
        summary = [est.A_hat, "MLE", ""]
    else:
        grid = build_posterior(d, n=args.nodes)
        cdf = np.cumsum(grid.weights)
        A_med = float(grid.A[np.searchsorted(cdf, 0.5)])
        prof = LikelihoodProfile.from_dataset(d)
        fin = np.isfinite(grid.A)
        betas = prof.terms(grid.A[fin], d.y).beta
        if prof.r and not fin.all():
            ols = np.linalg.lstsq(d.X, d.y, rcond=None)[0]
            betas = np.vstack([betas, ols])
        beta = grid.weights @ betas if prof.r else np.zeros(0)
        for j, g in enumerate(d.groups):
            gi = exact_theta_inference(grid, d, j, args.level)
            table.append([g.id, g.y, g.V, gi.B_hat, gi.B_mean, gi.B_var, gi.theta_hat, gi.se, gi.lo, gi.hi])
        summary = [A_med, "EXACT", ""]
        lines.append("# A_hat is the posterior median of A")
    bnames = [f"beta{i + 1}" for i in range(len(beta))]
    lines.append("# " + ",".join(["A_hat", "method", "q"] + bnames))
    lines.append("# " + ",".join(fmt(v) for v in summary + list(map(float, beta))))
    if args.estimator == "mle" and summary[0] == 0:
        lines.append("# boundary: full shrinkage")
    buf = io.StringIO()
    buf.write("\n".join(lines) + "\n")
    buf.write(",".join(RESULT_COLUMNS) + "\n")
    for row in table:
        buf.write(",".join(fmt(v) for v in row) + "\n")
    _write(buf.getvalue(), args.output)
    return 0


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None


def _procs(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def cmd_simulate(args) -> int:
    spec = SimSpec(k=args.k, V=args.V, A_grid=tuple(args.A_grid), reps=args.reps, level=args.level,
                   seed=args.seed, procedures=tuple(args.procedures), nodes=args.nodes)
    rep = simulate_coverage(spec)
    _write("\n".join(_config_lines(args)) + "\n" + rep.to_csv(), args.output)
    return 0


def theta_with_spread(k: int, spread: float) -> np.ndarray:
    """A fixed theta vector with ``sum (theta - mean)^2 == spread``."""
    u = np.arange(k, dtype=float) - (k - 1) / 2.0
    return u * np.sqrt(spread / np.sum(u * u))


def cmd_risk(args) -> int:
    configs = [theta_with_spread(args.k, s * args.k * args.V) for s in args.spreads]
    spec = SimSpec(k=args.k, V=args.V, A_grid=(0.0,), reps=args.reps, seed=args.seed,
                   procedures=tuple(args.procedures), theta_configs=configs, nodes=args.nodes)
    rep = simulate_risk(spec)
    _write("\n".join(_config_lines(args)) + "\n" + rep.to_csv(), args.output)
    return 0


def adm_demo_table(k: int, V: float, S: float, n: int = 1001):
    """Densities of an equal-variance shrinkage factor on a uniform grid over [0, 1].

    Returns ``(B, posterior, adjusted, beta_fit, B_adm, B_exact_mean)``. The
    posterior is proportional to ``B**((k-5)/2) exp(-S B / (2V))``; the adjusted
    curve multiplies it by ``B(1-B)``; the Beta curve is the ADM fit.
    """
    z = np.arange(k) - (k - 1) / 2.0
    y = z * np.sqrt(S / np.sum(z * z))
    d = Dataset.from_arrays(y, V)
    est = estimate_A_adm(d)
    prof = LikelihoodProfile.from_dataset(d)
    target, hessian = _b_space_target(prof, d.y, V)
    fit = adm_fit(target, PearsonFamily.BETA, (0.0, 1.0), vectorized=True, log_hessian=hessian)
    grid = build_posterior(d)
    B_exact = float(grid.weights @ np.where(np.isfinite(grid.A), V / (grid.A + V), 0.0))

    a, lam = (k - 3) / 2.0, S / (2.0 * V)

    def log_int(p):  # log of integral_0^1 B^(p-1) exp(-lam B) dB
        return gammaln(p) + np.log(gammainc(p, lam)) - p * np.log(lam)

    B = np.linspace(0.0, 1.0, n)
    with np.errstate(divide="ignore", invalid="ignore"):
        post = np.exp((a - 1) * np.log(B) - lam * B - log_int(a))
        adj_norm = np.exp(log_int(a + 1)) - np.exp(log_int(a + 2))
        adjusted = np.exp(a * np.log(B) + np.log1p(-B) - lam * B) / adj_norm
    adjusted = np.where(np.isnan(adjusted), 0.0, adjusted)
    bfit = beta_dist.pdf(B, *fit.params)
    return B, post, adjusted, bfit, est, B_exact


def cmd_adm_demo(args) -> int:
    if args.k < 4 or not args.V > 0 or not args.S > 0:
        raise InputError("adm-demo needs k >= 4, V > 0 and S > 0")
    B, post, adjusted, bfit, est, B_exact = adm_demo_table(args.k, args.V, args.S)
    B_adm = args.V / (est.A_hat + args.V)
    lines = _config_lines(args)
    lines += [f"# B_adm={B_adm:.6f}", f"# B_exact_mean={B_exact:.6f}", f"# A_adm={fmt(est.A_hat)}"]
    buf = io.StringIO()
    buf.write("\n".join(lines) + "\nB,posterior_density,adjusted_density,beta_fit_density\n")
    for row in zip(B, post, adjusted, bfit):
        buf.write(",".join(fmt(v) for v in row) + "\n")
    _write(buf.getvalue(), args.output)
    return 0


def cmd_baranchik(args) -> int:
    S = np.linspace(args.S_min, args.S_max, args.n)
    rep = baranchik_check(args.k, args.V, S, q=args.q)
    lines = _config_lines(args) + [
        f"# nondecreasing={rep.nondecreasing}",
        f"# min_adjacent_diff={fmt(rep.min_adjacent_diff)}",
        f"# max_tau={fmt(rep.max_tau)}",
        f"# bound={fmt(rep.bound)}",
        f"# passed={rep.passed}",
    ]
    buf = io.StringIO()
    buf.write("\n".join(lines) + "\nS,tau\n")
    for s, t in zip(rep.S, rep.tau):
        buf.write(f"{fmt(s)},{fmt(t)}\n")
    _write(buf.getvalue(), args.output)
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="admshp", description="ADM-SHP shrinkage for the two-level Normal model")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    f = sub.add_parser("fit", help="fit a dataset from CSV")
    f.add_argument("input")
    f.add_argument("--estimator", choices=["adm", "mle", "exact"], default="adm")
    f.add_argument("--q", type=float, default=1.0)
    f.add_argument("--level", type=float, default=0.95)
    f.add_argument("--nodes", type=int, default=512)
    f.add_argument("-o", "--output")
    f.set_defaults(func=cmd_fit)

    s = sub.add_parser("simulate", help="interval coverage over a grid of A")
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--V", type=float, default=1.0)
    s.add_argument("--A-grid", dest="A_grid", type=_float_list, default=[0.0, 0.25, 1.0, 4.0, 16.0])
    s.add_argument("--reps", type=_positive_int, default=1000)
    s.add_argument("--level", type=float, default=0.95)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--procedures", type=_procs, default=["exact_shp", "adm_shp", "mle_plugin"])
    s.add_argument("--nodes", type=int, default=256)
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("risk", help="total squared-error risk at fixed theta")
    r.add_argument("--k", type=int, required=True)
    r.add_argument("--V", type=float, default=1.0)
    r.add_argument("--spreads", type=_float_list, default=[0.0, 1.0, 10.0, 100.0],
                   help="sum (theta - mean)^2 in units of k*V")
    r.add_argument("--reps", type=_positive_int, default=10000)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--procedures", type=_procs, default=["exact_shp", "adm_shp", "js_plus", "sample_mean"])
    r.add_argument("--nodes", type=int, default=256)
    r.add_argument("-o", "--output")
    r.set_defaults(func=cmd_risk)

    a = sub.add_parser("adm-demo", help="posterior, adjusted and Beta-fit densities of B")
    a.add_argument("--k", type=int, required=True)
    a.add_argument("--V", type=float, required=True)
    a.add_argument("--S", type=float, required=True)
    a.add_argument("-o", "--output")
    a.set_defaults(func=cmd_adm_demo)

    b = sub.add_parser("baranchik", help="check Baranchik's minimax conditions")
    b.add_argument("--k", type=int, required=True)
    b.add_argument("--V", type=float, default=1.0)
    b.add_argument("--S-min", dest="S_min", type=float, default=0.1)
    b.add_argument("--S-max", dest="S_max", type=float, default=500.0)
    b.add_argument("--n", type=_positive_int, default=5000)
    b.add_argument("--q", type=float, default=1.0)
    b.add_argument("-o", "--output")
    b.set_defaults(func=cmd_baranchik)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"admshp: error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"admshp: numerical failure: {exc}", file=sys.stderr)
        return 3
    except (ShrinkageError, ValueError) as exc:
        print(f"admshp: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
