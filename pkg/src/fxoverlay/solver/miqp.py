"""Best-first branch-and-bound over binaries, and an enumeration oracle."""
from __future__ import annotations

import heapq
import json
import itertools
import time
from dataclasses import dataclass, replace
from typing import Any, TextIO

import numpy as np

from .qp import (
    INFEASIBLE,
    NUMERICAL_FAILURE,
    OPTIMAL,
    TOLERANCES,
    QPSolution,
    Tolerances,
    presolve,
    solve_reduced,
)

NODE_LIMIT = 10**6
BRUTE_FORCE_MAX_BIN = 16
BNB_MAX_BIN = 24


@dataclass(frozen=True)
class MIQPSolution:
    best: QPSolution
    binaries: np.ndarray | None
    status: str
    gap: float
    nodes_explored: int
    wall_time: float
    root_bound: float = float("nan")
    decoded: Any = None
    message: str = ""

    @property
    def objective(self) -> float:
        return self.best.objective

    @property
    def x(self) -> np.ndarray | None:
        return self.best.x

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


class _Relaxation:
    """Solves the problem with binaries restricted to given [lo, hi] boxes."""

    def __init__(self, qp, tol: Tolerances):
        self.qp = qp
        self.tol = tol
        self.Q = np.asarray(qp.Q, dtype=float)
        self.c = np.asarray(qp.c, dtype=float)
        self.A_eq = np.asarray(qp.A_eq, dtype=float)
        self.b_eq = np.asarray(qp.b_eq, dtype=float)
        self.A_in = np.asarray(qp.A_ineq, dtype=float)
        self.b_in = np.asarray(qp.b_ineq, dtype=float)
        self.lb = np.asarray(qp.lb, dtype=float)
        self.ub = np.asarray(qp.ub, dtype=float)
        self.bin = np.asarray(qp.binary_index, dtype=int)
        self.cache: dict[str, QPSolution] = {}
        self.solves = 0

    def bounds(self, blo, bhi):
        lo, hi = self.lb.copy(), self.ub.copy()
        lo[self.bin] = blo
        hi[self.bin] = bhi
        return lo, hi

    def solve(self, blo, bhi) -> QPSolution:
        lo, hi = self.bounds(blo, bhi)
        red = presolve(self.Q, self.c, self.A_eq, self.b_eq, self.A_in, self.b_in, lo, hi, self.tol)
        key = red.key()
        hit = self.cache.get(key)
        if hit is not None:
            if hit.x is None:
                return hit
            # same reduced QP; only variables pinned by presolve may differ
            x = hit.x.copy()
            x[~red.free] = red.x_fixed[~red.free]
            return replace(hit, x=x)
        self.solves += 1
        sol = solve_reduced(red, self.Q, self.c, self.A_eq, self.b_eq, self.A_in, self.b_in,
                            lo, hi, tol=self.tol)
        self.cache[key] = sol
        return sol

    def leaf(self, values) -> QPSolution:
        values = np.asarray(values, dtype=float)
        return self.solve(values, values)


def _round(qp, x):
    if hasattr(qp, "round_binaries"):
        return np.asarray(qp.round_binaries(x), dtype=float)
    return np.round(x[np.asarray(qp.binary_index)])


def _finish(qp, best: QPSolution | None, binaries, nodes, t0, gap, root, status=None, msg=""):
    wall = time.perf_counter() - t0
    if best is None:
        empty = QPSolution(None, float("inf"), status or INFEASIBLE, message=msg)
        return MIQPSolution(empty, None, status or INFEASIBLE, float("inf"), nodes, wall, root,
                            message=msg)
    decoded = qp.decode(best.x) if hasattr(qp, "decode") else None
    return MIQPSolution(best, binaries, status or OPTIMAL, gap, nodes, wall, root, decoded, msg)


def solve_miqp(
    qp,
    *,
    tol: Tolerances = TOLERANCES,
    node_limit: int = NODE_LIMIT,
    trace: TextIO | None = None,
) -> MIQPSolution:
    """Global optimum of a mixed-binary convex QP by best-first branch and bound.

    Relaxations drop integrality to [0, 1]; the most fractional binary is
    branched on (lowest index on ties) and nodes with bound at or above the
    incumbent minus ``tol.prune`` are pruned.  A rounding heuristic supplies
    incumbents and closes nodes whose rounded solution meets the node bound.
    """
    t0 = time.perf_counter()
    n_bin = int(np.asarray(qp.binary_index).size)
    if n_bin > BNB_MAX_BIN:
        raise ValueError(f"at most {BNB_MAX_BIN} binaries are supported, got {n_bin}")
    relax = _Relaxation(qp, tol)
    bin_idx = relax.bin

    incumbent: QPSolution | None = None
    inc_bin = None
    inc_obj = np.inf
    nodes = 0
    counter = itertools.count()
    heap: list = []

    def log(node_id, bound, event):
        if trace is not None:
            inc = float(inc_obj) if np.isfinite(inc_obj) else None
            trace.write(json.dumps({"node": node_id, "bound": bound,
                                    "incumbent": inc, "event": event}) + "\n")

    def try_leaf(values) -> None:
        nonlocal incumbent, inc_bin, inc_obj
        sol = relax.leaf(values)
        if sol.status == OPTIMAL and sol.objective < inc_obj:
            incumbent, inc_bin, inc_obj = sol, np.asarray(values, dtype=float), sol.objective

    def process(blo, bhi, node_id):
        """Solve a node; returns (bound, x) when it must be branched, else None."""
        nonlocal nodes
        nodes += 1
        sol = relax.solve(blo, bhi)
        if sol.status == NUMERICAL_FAILURE:
            raise _NodeFailure(sol.message)
        if sol.status != OPTIMAL:
            log(node_id, None, "infeasible")
            return None
        bound = sol.objective
        if bound >= inc_obj - tol.prune:
            log(node_id, bound, "pruned")
            return None
        vals = sol.x[bin_idx]
        frac = np.abs(vals - np.round(vals))
        if np.all(frac <= tol.integrality):
            try_leaf(np.round(vals))
            log(node_id, bound, "integral")
            return None
        rounded = _round(qp, sol.x)
        rounded = np.clip(rounded, blo, bhi)
        before = inc_obj
        try_leaf(rounded)
        if inc_obj < before and inc_obj <= bound + tol.prune:
            log(node_id, bound, "closed by rounding")
            return None
        log(node_id, bound, "branch")
        return bound, vals

    root_lo = np.zeros(n_bin)
    root_hi = np.ones(n_bin)
    try:
        root = process(root_lo, root_hi, 0)
    except _NodeFailure as exc:
        return _finish(qp, None, None, nodes, t0, np.inf, np.nan, NUMERICAL_FAILURE, str(exc))
    root_sol = relax.solve(root_lo, root_hi)
    root_bound = root_sol.objective if root_sol.status == OPTIMAL else np.inf
    if root is not None:
        heapq.heappush(heap, (root[0], next(counter), root_lo, root_hi, root[1]))

    while heap:
        bound, node_id, blo, bhi, vals = heapq.heappop(heap)
        if bound >= inc_obj - tol.prune:
            continue
        if nodes >= node_limit:
            heapq.heappush(heap, (bound, node_id, blo, bhi, vals))
            gap = inc_obj - heap[0][0] if np.isfinite(inc_obj) else np.inf
            return _finish(qp, incumbent, inc_bin, nodes, t0, gap, root_bound, NUMERICAL_FAILURE,
                           f"node limit {node_limit} reached")
        free = (bhi - blo) > 0.5
        score = np.where(free, np.abs(vals - 0.5), np.inf)
        j = int(np.argmin(score))  # lowest index among the most fractional
        for v in (0.0, 1.0):
            clo, chi = blo.copy(), bhi.copy()
            clo[j] = chi[j] = v
            cid = next(counter)
            try:
                child = process(clo, chi, cid)
            except _NodeFailure as exc:
                return _finish(qp, incumbent, inc_bin, nodes, t0, np.inf, root_bound,
                               NUMERICAL_FAILURE, str(exc))
            if child is not None:
                heapq.heappush(heap, (child[0], cid, clo, chi, child[1]))

    if incumbent is None:
        return _finish(qp, None, None, nodes, t0, np.inf, root_bound, INFEASIBLE,
                       "no binary assignment is feasible")
    return _finish(qp, incumbent, inc_bin, nodes, t0, 0.0, root_bound)


class _NodeFailure(RuntimeError):
    pass


def brute_force(qp, *, tol: Tolerances = TOLERANCES) -> MIQPSolution:
    """Enumerate every binary assignment and keep the best leaf QP.

    Assignments that reduce to the same QP after presolve are solved once.
    """
    t0 = time.perf_counter()
    n_bin = int(np.asarray(qp.binary_index).size)
    if n_bin > BRUTE_FORCE_MAX_BIN:
        raise ValueError(f"brute force supports at most {BRUTE_FORCE_MAX_BIN} binaries")
    relax = _Relaxation(qp, tol)
    best, best_bin, best_obj = None, None, np.inf
    leaves = 0
    failures = 0
    for bits in itertools.product((0.0, 1.0), repeat=n_bin):
        leaves += 1
        sol = relax.leaf(bits)
        if sol.status == NUMERICAL_FAILURE:
            failures += 1
        elif sol.status == OPTIMAL and sol.objective < best_obj:
            best, best_bin, best_obj = sol, np.array(bits), sol.objective
    msg = f"{leaves} leaves, {relax.solves} distinct QPs, {failures} failed"
    if best is None:
        return _finish(qp, None, None, leaves, t0, np.inf, np.nan, INFEASIBLE, msg)
    return _finish(qp, best, best_bin, leaves, t0, 0.0, np.nan, OPTIMAL, msg)
