"""Command-line front end.

Returns, rates and limits on the command line are in percent per month
(``--mu 1.2`` is a 1.2% monthly target); spec files hold decimals.
Exit status: 0 success, 1 usage/data error, 2 infeasible target.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .fixtures import bundled
from .frontier import (
    DEFAULT_GRID,
    EXPERIMENTS,
    mu_grid,
    run_experiment,
    status_counts,
    sweep,
    write_experiment,
    write_frontier,
)
from .market_data import AdjustedMoments, DataError, load_dataset, moments_from_dataset
from .overlay import load_spreads
from .problem import ProblemSpec, StaticInfeasibility, build, build_two_stage, check_solution
from .solver import INFEASIBLE, solve_miqp

log = logging.getLogger("fxoverlay")

EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE = 0, 1, 2


class UsageError(ValueError):
    pass


def parse_grid(text: str) -> tuple[float, float, float]:
    """``LO:HI:STEP`` in percent -> decimals."""
    parts = text.split(":")
    if len(parts) != 3:
        raise UsageError(f"--mu: expected LO:HI:STEP, got {text!r}")
    try:
        lo, hi, step = (float(p) / 100.0 for p in parts)
    except ValueError:
        raise UsageError(f"--mu: non-numeric grid {text!r}") from None
    try:
        mu_grid(lo, hi, step)
    except ValueError as exc:
        raise UsageError(f"--mu: {exc}") from None
    return lo, hi, step


def _percent(name: str, text: str | None) -> float | None:
    if text is None:
        return None
    try:
        return float(text) / 100.0
    except ValueError:
        raise UsageError(f"{name}: expected a number in percent, got {text!r}") from None


# inputs ----------------------------------------------------------------------

def load_moments(args) -> AdjustedMoments:
    if getattr(args, "moments", None):
        with open(args.moments) as fh:
            return AdjustedMoments.from_dict(json.load(fh))
    if args.data is None:
        log.info("no --data given; using the bundled synthetic fixture")
        data, config = bundled("fixture.csv"), bundled("fixture.json")
    else:
        data = Path(args.data)
        config = Path(args.data_config) if args.data_config else data.with_suffix(".json")
        if not config.exists():
            raise UsageError(f"--data-config: dataset config not found: {config}")
    return moments_from_dataset(load_dataset(data, config))


def load_beta(args, moments: AdjustedMoments) -> np.ndarray | None:
    if args.spreads is not None:
        return load_spreads(args.spreads, moments.currencies)
    if args.data is None and not getattr(args, "moments", None):
        return load_spreads(bundled("spreads.csv"), moments.currencies)
    log.warning("no --spreads given; forward spreads set to zero")
    return None


def effective_spec(args, moments: AdjustedMoments) -> ProblemSpec:
    """Defaults, overlaid by the spec file, overlaid by flags."""
    fields: dict = {}
    if args.spec:
        try:
            with open(args.spec) as fh:
                fields.update(json.load(fh))
        except FileNotFoundError:
            raise UsageError(f"--spec: file not found: {args.spec}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"--spec: invalid JSON ({exc})") from None
    beta = load_beta(args, moments)
    if args.spreads is not None or (beta is not None and "beta" not in fields):
        fields["beta"] = beta
    flags = {
        "V_u": _percent("--Vu", args.Vu),
        "M": _percent("--M", args.M),
        "G": args.G,
        "policy": args.policy,
        "mode": args.mode,
    }
    fields.update({k: v for k, v in flags.items() if v is not None})
    if args.no_wash_trades:
        fields["no_wash_trades"] = True
    fields.pop("n_countries", None)
    try:
        return ProblemSpec.from_dict(fields, n_countries=moments.n_countries)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid problem spec: {exc}") from None


# commands --------------------------------------------------------------------

def cmd_ingest(args) -> int:
    m = load_moments(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "moments.json"
    path.write_text(json.dumps(m.to_dict(), indent=2) + "\n")
    vol = np.sqrt(np.diag(m.omega))
    print(f"{'series':24s} {'mean %':>9s} {'vol %':>9s}")
    for label, r, s in zip(m.labels, m.r, vol):
        print(f"{label:24s} {100 * r:9.4f} {100 * s:9.4f}")
    rates = ", ".join(f"{c} {100 * v:.4f}%" for c, v in zip(m.countries, m.expected_rates))
    print(f"expected rates: {rates}")
    if m.repair.changed:
        print(f"covariance repaired to PSD (Frobenius change {m.repair.frobenius_change:.3g})")
    print(f"wrote {path}")
    return EXIT_OK


def _solve(moments, spec, trace):
    if spec.mode == "two_stage":
        stage1, stage2 = build_two_stage(moments, spec)
        first = solve_miqp(stage1, trace=trace)
        if not first.ok:
            return stage1, first
        qp = stage2(first.x)
        return qp, solve_miqp(qp, trace=trace)
    qp = build(moments, spec)
    return qp, solve_miqp(qp, trace=trace)


def _pct(v: float, width: int = 8, digits: int = 3) -> str:
    v = 100.0 * v
    if abs(v) < 0.5 * 10.0 ** -digits:
        v = 0.0
    return f"{v:{width}.{digits}f}"


def summary_text(spec: ProblemSpec, res, sol) -> str:
    lines = [f"target return   {100 * spec.mu:.4f}% per month", f"status          {res.status}"]
    if sol is None:
        if res.message:
            lines.append(f"reason          {res.message}")
        return "\n".join(lines) + "\n"
    lines += [
        f"volatility      {100 * sol.volatility:.4f}% per month",
        f"total overlay   {100 * sol.total_overlay:.4f}%",
        f"cash (margin)   {100 * sol.cash:.4f}%",
        f"cost paid       {100 * sol.cost_paid:.6f}%",
        f"nodes           {res.nodes_explored}",
        "",
        "asset weights %  " + "  ".join(f"{c:>8s}" for c in sol.countries),
    ]
    for i, cls in enumerate(sol.asset_classes):
        lines.append(f"  {cls:15s}" + "  ".join(_pct(v) for v in sol.a[i]))
    lines.append(f"  {'overlay':15s}" + "  ".join(_pct(v) for v in sol.overlay))
    lines.append(f"  {'currency':15s}" + "  ".join(_pct(v) for v in sol.currency_exposure))
    held = [(p, q) for p, q, on in zip(sol.pairs, sol.q, sol.active) if on]
    lines.append("")
    lines.append("forwards        " + (", ".join(f"{p} {100 * q:+.3f}%" for p, q in held) or "none"))
    return "\n".join(lines) + "\n"


def cmd_solve(args) -> int:
    m = load_moments(args)
    spec = effective_spec(args, m)
    mu = _percent("--mu", args.mu)
    if mu is None:
        raise UsageError("--mu: a single target return (percent) is required")
    spec = spec.replace(mu=mu)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    trace = open(args.trace, "w") if args.trace else None
    try:
        try:
            qp, res = _solve(m, spec, trace)
        except StaticInfeasibility as exc:
            qp, res = None, None
            reason = str(exc)
    finally:
        if trace is not None:
            trace.close()
    payload: dict = {"version": __version__, "spec": spec.to_dict()}
    if res is None:
        payload.update(status=INFEASIBLE, message=reason)
        text = f"target return   {100 * mu:.4f}% per month\nstatus          infeasible\nreason          {reason}\n"
    else:
        sol = res.decoded if res.ok else None
        payload.update(
            status=res.status,
            message=res.message,
            objective=res.objective if res.ok else None,
            nodes_explored=res.nodes_explored,
            wall_time=res.wall_time,
            gap=res.gap if np.isfinite(res.gap) else None,
            z=res.x.tolist() if res.ok else None,
            variables=list(qp.names),
            solution=sol.to_dict() if sol is not None else None,
            issues=check_solution(qp, res.x) if res.ok else None,
        )
        text = summary_text(spec, res, sol)
    (out / "solution.json").write_text(json.dumps(payload, indent=2) + "\n")
    (out / "summary.txt").write_text(text)
    sys.stdout.write(text)
    if payload["status"] == INFEASIBLE:
        return EXIT_INFEASIBLE
    return EXIT_OK if payload["status"] == "optimal" else EXIT_ERROR


def cmd_frontier(args) -> int:
    m = load_moments(args)
    spec = effective_spec(args, m)
    grid = parse_grid(args.mu) if args.mu else DEFAULT_GRID
    t0 = time.perf_counter()
    points = sweep(m, spec, *grid, jobs=args.jobs)
    path = write_frontier(args.out, points, m, spec, grid, time.perf_counter() - t0)
    counts = ", ".join(f"{k} {v}" for k, v in status_counts(points).items())
    print(f"{len(points)} targets ({counts}); wrote {path}")
    return EXIT_OK


def cmd_experiment(args) -> int:
    if args.name not in EXPERIMENTS:
        raise UsageError(f"unknown experiment {args.name!r}; choose from {', '.join(EXPERIMENTS)}")
    m = load_moments(args)
    spec = effective_spec(args, m)
    grid = parse_grid(args.mu) if args.mu else DEFAULT_GRID
    result = run_experiment(args.name, m, spec, *grid, jobs=args.jobs)
    out = write_experiment(args.out, result, m, grid)
    print(f"{args.name}: {len(result.values)} frontiers x {len(result.mu)} targets -> {out}")
    return EXIT_OK


# parser ----------------------------------------------------------------------

def _common(p: argparse.ArgumentParser, problem: bool = True) -> None:
    p.add_argument("--data", help="monthly return CSV (default: bundled synthetic fixture)")
    p.add_argument("--data-config", help="dataset config JSON (default: CSV path with .json)")
    p.add_argument("--moments", help="moments.json written by 'ingest' (instead of --data)")
    p.add_argument("--out", default="results", help="output directory")
    p.add_argument("-v", "--verbose", action="count", default=0)
    if not problem:
        return
    p.add_argument("--spreads", help="forward spread table CSV (pair,beta)")
    p.add_argument("--spec", help="problem spec JSON in decimals")
    p.add_argument("--Vu", help="total overlay cap, percent")
    p.add_argument("--G", type=int, help="maximum number of forward contracts")
    p.add_argument("--M", help="margin requirement, percent of forward size")
    p.add_argument("--policy", choices=["unrestricted", "fully_hedged", "foreign_only"])
    p.add_argument("--mode", choices=["unified", "two_stage"])
    p.add_argument("--no-wash-trades", action="store_true",
                   help="forbid forward cycles and pass-through legs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fxoverlay",
        description="Mean-variance portfolios with an FX-forward currency overlay.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load a dataset and write adjusted moments")
    _common(p, problem=False)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("solve", help="optimal portfolio for one target return")
    _common(p)
    p.add_argument("--mu", required=True, help="target monthly return, percent")
    p.add_argument("--trace", help="write the branch-and-bound trace (JSON lines) here")
    p.set_defaults(func=cmd_solve)

    for name, func, helptext in (
        ("frontier", cmd_frontier, "efficient frontier over a return grid"),
        ("experiment", cmd_experiment, "preset parameter study"),
    ):
        p = sub.add_parser(name, help=helptext)
        if name == "experiment":
            p.add_argument("name", help=f"one of: {', '.join(EXPERIMENTS)}")
        _common(p)
        p.add_argument("--mu", help="LO:HI:STEP in percent (default 0.5:1.8:0.01)")
        p.add_argument("--jobs", type=int, default=None, help="worker processes (default: all cores)")
        p.set_defaults(func=func)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, DataError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
