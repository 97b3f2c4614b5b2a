"""Efficient-frontier sweeps and the preset parameter experiments."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .market_data import AdjustedMoments
from .problem import ProblemSpec, Solution, StaticInfeasibility, build, build_two_stage
from .solver import TOLERANCES, Tolerances, solve_miqp
from .solver.qp import INFEASIBLE, OPTIMAL

DEFAULT_GRID = (0.005, 0.018, 0.0001)

# parameter name, values, base value of each preset
EXPERIMENTS: dict[str, tuple[str, tuple, Any]] = {
    "approach": ("mode", ("unified", "two_stage"), "unified"),
    "hedging": ("policy", ("fully_hedged", "foreign_only", "unrestricted"), "unrestricted"),
    "margin": ("M", (0.0, 0.03, 0.05, 0.07, 0.10, 0.30, 0.50), 0.0),
    "overlay_limit": ("V_u", (0.0, 0.1, 0.3, 0.5, 1.0), 1.0),
    "cardinality": ("G", (0, 1, 2, 3, 4, 5, 6), 6),
}


@dataclass(frozen=True)
class FrontierPoint:
    mu: float
    volatility: float
    status: str
    V: float
    overlay_by_country: np.ndarray
    class_totals: dict[str, float]
    cash: float
    active_forwards: tuple[str, ...]
    cost_paid: float
    nodes: int = 0
    wall_time: float = 0.0
    message: str = ""
    solution: Solution | None = field(default=None, repr=False, compare=False)

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL

    @property
    def n_active(self) -> int:
        return len(self.active_forwards)

    @property
    def bond_total(self) -> float:
        return self.class_totals.get("bond", float("nan"))

    @property
    def equity_total(self) -> float:
        return self.class_totals.get("equity", float("nan"))


@dataclass(frozen=True)
class ExperimentResult:
    label: str
    parameter: str
    values: tuple
    base: Any
    mu: np.ndarray
    frontiers: dict[Any, list[FrontierPoint]]
    relative: dict[Any, list[float | None]]
    base_spec: ProblemSpec
    runtime: float = 0.0

    def volatilities(self, value) -> np.ndarray:
        return np.array([p.volatility for p in self.frontiers[value]])


def mu_grid(lo: float, hi: float, step: float) -> np.ndarray:
    """Inclusive grid lo, lo+step, ... <= hi (rounded to kill float drift)."""
    if not step > 0:
        raise ValueError("grid step must be positive")
    if lo > hi:
        raise ValueError("grid lower end exceeds upper end")
    n = int(np.floor((hi - lo) / step + 1e-9)) + 1
    return np.round(lo + step * np.arange(n), 12)


def _failed(mu: float, status: str, message: str, n_countries: int, nodes=0, wall=0.0):
    return FrontierPoint(
        mu=mu, volatility=float("nan"), status=status, V=float("nan"),
        overlay_by_country=np.full(n_countries, np.nan), class_totals={},
        cash=float("nan"), active_forwards=(), cost_paid=float("nan"),
        nodes=nodes, wall_time=wall, message=message,
    )


def _point(mu: float, sol: Solution, nodes: int, wall: float) -> FrontierPoint:
    return FrontierPoint(
        mu=mu,
        volatility=sol.volatility,
        status=OPTIMAL,
        V=sol.total_overlay,
        overlay_by_country=sol.overlay,
        class_totals=sol.class_totals,
        cash=sol.cash,
        active_forwards=tuple(p for p, on in zip(sol.pairs, sol.active) if on),
        cost_paid=sol.cost_paid,
        nodes=nodes,
        wall_time=wall,
        solution=sol,
    )


def solve_point(moments: AdjustedMoments, spec: ProblemSpec, tol: Tolerances = TOLERANCES) -> FrontierPoint:
    """Optimal portfolio for ``spec.mu`` in the spec's mode."""
    C = moments.n_countries
    try:
        if spec.mode == "two_stage":
            stage1, stage2 = build_two_stage(moments, spec)
            first = solve_miqp(stage1, tol=tol)
            if not first.ok:
                return _failed(spec.mu, first.status, "stage one: " + first.message, C,
                               first.nodes_explored, first.wall_time)
            res = solve_miqp(stage2(first.x), tol=tol)
            nodes = first.nodes_explored + res.nodes_explored
            wall = first.wall_time + res.wall_time
        else:
            res = solve_miqp(build(moments, spec), tol=tol)
            nodes, wall = res.nodes_explored, res.wall_time
    except StaticInfeasibility as exc:
        return _failed(spec.mu, INFEASIBLE, str(exc), C)
    if not res.ok:
        return _failed(spec.mu, res.status, res.message, C, nodes, wall)
    return _point(spec.mu, res.decoded, nodes, wall)


_WORKER_MOMENTS: AdjustedMoments | None = None


def _init_worker(moments: AdjustedMoments) -> None:
    global _WORKER_MOMENTS
    _WORKER_MOMENTS = moments


def _work(args) -> FrontierPoint:
    spec, tol = args
    return solve_point(_WORKER_MOMENTS, spec, tol)


def default_jobs() -> int:
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:
        return os.cpu_count() or 1


def solve_many(
    moments: AdjustedMoments,
    specs: Sequence[ProblemSpec],
    jobs: int | None = None,
    tol: Tolerances = TOLERANCES,
) -> list[FrontierPoint]:
    """Solve independent specs, in parallel when ``jobs`` > 1; order is kept."""
    jobs = default_jobs() if jobs is None else max(1, int(jobs))
    if jobs == 1 or len(specs) <= 1:
        return [solve_point(moments, s, tol) for s in specs]
    chunk = max(1, len(specs) // (4 * jobs))
    with ProcessPoolExecutor(jobs, initializer=_init_worker, initargs=(moments,)) as pool:
        return list(pool.map(_work, [(s, tol) for s in specs], chunksize=chunk))


def sweep(
    moments: AdjustedMoments,
    spec: ProblemSpec,
    mu_lo: float = DEFAULT_GRID[0],
    mu_hi: float = DEFAULT_GRID[1],
    step: float = DEFAULT_GRID[2],
    jobs: int | None = 1,
    tol: Tolerances = TOLERANCES,
) -> list[FrontierPoint]:
    """Frontier over the inclusive grid; failed targets stay in as status rows."""
    grid = mu_grid(mu_lo, mu_hi, step)
    return solve_many(moments, [spec.replace(mu=float(m)) for m in grid], jobs, tol)


def relative_volatility_increase(
    base: Sequence[FrontierPoint], other: Sequence[FrontierPoint]
) -> list[float | None]:
    """Percent change of ``other`` over ``base`` volatility; None where either failed."""
    if len(base) != len(other) or any(
        abs(b.mu - o.mu) > 1e-12 for b, o in zip(base, other)
    ):
        raise ValueError("frontiers are on different return grids")
    out: list[float | None] = []
    for b, o in zip(base, other):
        if b.ok and o.ok and b.volatility > 0:
            out.append(100.0 * (o.volatility / b.volatility - 1.0))
        else:
            out.append(None)
    return out


def run_experiment(
    name: str,
    moments: AdjustedMoments,
    base_spec: ProblemSpec,
    mu_lo: float = DEFAULT_GRID[0],
    mu_hi: float = DEFAULT_GRID[1],
    step: float = DEFAULT_GRID[2],
    jobs: int | None = 1,
    tol: Tolerances = TOLERANCES,
) -> ExperimentResult:
    """Sweep one frontier per value of the preset's parameter."""
    if name not in EXPERIMENTS:
        raise ValueError(f"unknown experiment {name!r}; expected one of {sorted(EXPERIMENTS)}")
    param, values, base = EXPERIMENTS[name]
    t0 = time.perf_counter()
    grid = mu_grid(mu_lo, mu_hi, step)
    specs = [base_spec.replace(**{param: v}, mu=float(m)) for v in values for m in grid]
    points = solve_many(moments, specs, jobs, tol)
    n = grid.size
    frontiers = {v: points[i * n:(i + 1) * n] for i, v in enumerate(values)}
    relative = {v: relative_volatility_increase(frontiers[base], f) for v, f in frontiers.items()}
    return ExperimentResult(
        label=name, parameter=param, values=values, base=base, mu=grid,
        frontiers=frontiers, relative=relative, base_spec=base_spec,
        runtime=time.perf_counter() - t0,
    )


# output --------------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    v = float(v)
    if not np.isfinite(v):
        return ""
    return format(v + 0.0, ".10g")


def frontier_csv(points: Sequence[FrontierPoint], countries: Sequence[str],
                 asset_classes: Sequence[str]) -> str:
    """CSV text; rows sorted by target return."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["mu", "volatility", "status", "V", *(f"overlay_{c}" for c in countries),
                *(f"{cls}_total" for cls in asset_classes), "cash", "active_forwards",
                "cost_paid", "forwards"])
    for p in sorted(points, key=lambda p: p.mu):
        w.writerow([
            _fmt(p.mu), _fmt(p.volatility), p.status, _fmt(p.V),
            *(_fmt(v) for v in p.overlay_by_country),
            *(_fmt(p.class_totals.get(cls)) for cls in asset_classes),
            _fmt(p.cash), p.n_active if p.ok else "", _fmt(p.cost_paid),
            ";".join(p.active_forwards),
        ])
    return buf.getvalue()


def read_frontier_csv(path: str | Path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def relative_csv(result: ExperimentResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["mu", *(cell_name(result.parameter, v) for v in result.values)])
    for k, mu in enumerate(result.mu):
        w.writerow([_fmt(mu), *(_fmt(result.relative[v][k]) for v in result.values)])
    return buf.getvalue()


def cell_name(param: str, value) -> str:
    if isinstance(value, float):
        return f"{param}_{value:g}"
    return f"{param}_{value}"


def spec_hash(spec: ProblemSpec) -> str:
    d = spec.to_dict()
    d.pop("mu", None)
    return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


def manifest(
    *,
    kind: str,
    spec: ProblemSpec,
    grid: tuple[float, float, float],
    points: int,
    runtime: float,
    tol: Tolerances = TOLERANCES,
    extra: dict | None = None,
) -> dict:
    d = spec.to_dict()
    d.pop("mu", None)
    out = {
        "kind": kind,
        "version": __version__,
        "grid": {"mu_lo": grid[0], "mu_hi": grid[1], "step": grid[2], "points": points},
        "spec_hash": spec_hash(spec),
        "effective_spec": d,
        "tolerances": asdict(tol),
        "runtime_seconds": round(runtime, 3),
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    if extra:
        out.update(extra)
    return out


def status_counts(points: Sequence[FrontierPoint]) -> dict[str, int]:
    counts: dict[str, int] = {}
    for p in points:
        counts[p.status] = counts.get(p.status, 0) + 1
    return dict(sorted(counts.items()))


def write_frontier(out_dir: str | Path, points: Sequence[FrontierPoint], moments: AdjustedMoments,
                   spec: ProblemSpec, grid, runtime: float, name: str = "frontier") -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{name}.csv"
    path.write_text(frontier_csv(points, moments.countries, moments.asset_classes))
    meta = manifest(kind="frontier", spec=spec, grid=grid, points=len(points), runtime=runtime,
                    extra={"status_counts": status_counts(points)})
    (out / "manifest.json").write_text(json.dumps(meta, indent=2) + "\n")
    return path


def write_experiment(out_dir: str | Path, result: ExperimentResult, moments: AdjustedMoments,
                     grid) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cells = {}
    for v in result.values:
        sub = out / cell_name(result.parameter, v)
        sub.mkdir(exist_ok=True)
        pts = result.frontiers[v]
        (sub / "frontier.csv").write_text(
            frontier_csv(pts, moments.countries, moments.asset_classes))
        cells[sub.name] = status_counts(pts)
    rel = out / f"relative_vs_{cell_name(result.parameter, result.base)}.csv"
    rel.write_text(relative_csv(result))
    meta = manifest(
        kind=f"experiment:{result.label}", spec=result.base_spec, grid=grid,
        points=len(result.mu), runtime=result.runtime,
        extra={"parameter": result.parameter, "values": list(result.values),
               "base": result.base, "cells": cells, "relative": rel.name},
    )
    (out / "manifest.json").write_text(json.dumps(meta, indent=2) + "\n")
    return out
