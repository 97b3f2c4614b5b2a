"""Dense convex QP by a primal active-set method.

Solves

    minimise    x'Qx + c'x
    subject to  A_eq x = b_eq,  A_ineq x <= b_ineq,  lo <= x <= hi

with Q symmetric positive semidefinite.  A presolve fixes variables pinned
by their bounds or by singleton rows, a phase-1 LP (HiGHS) finds a feasible
start, and the active-set iteration works in the null space of the working
constraints.  Singular reduced Hessians are handled by stepping along
zero-curvature descent directions until a constraint blocks.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.optimize
from scipy.optimize import linprog


@dataclass(frozen=True)
class Tolerances:
    feasibility: float = 1e-8
    optimality: float = 1e-7
    integrality: float = 1e-6
    dual: float = 1e-9
    psd: float = 1e-10
    pivot: float = 1e-12
    prune: float = 1e-12


TOLERANCES = Tolerances()

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
NUMERICAL_FAILURE = "numerical_failure"


@dataclass(frozen=True)
class QPSolution:
    x: np.ndarray | None
    objective: float
    status: str
    active_set: tuple[int, ...] = ()
    kkt_residual: float = float("nan")
    primal_residual: float = float("nan")
    eq_multipliers: np.ndarray | None = None
    ineq_multipliers: np.ndarray | None = None
    lower_multipliers: np.ndarray | None = None
    upper_multipliers: np.ndarray | None = None
    iterations: int = 0
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


def _as_rows(A, b, n):
    if A is None:
        return np.zeros((0, n)), np.zeros(0)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if A.size == 0:
        return np.zeros((0, n)), np.zeros(0)
    if A.shape[1] != n or A.shape[0] != b.shape[0]:
        raise ValueError("constraint matrix and right-hand side do not match")
    return A, b


def _as_bounds(bounds, n):
    if bounds is None:
        return np.full(n, -np.inf), np.full(n, np.inf)
    arr = np.array(bounds, dtype=float).reshape(n, 2)
    lo = np.where(np.isnan(arr[:, 0]), -np.inf, arr[:, 0])
    hi = np.where(np.isnan(arr[:, 1]), np.inf, arr[:, 1])
    return lo, hi


@dataclass
class Reduced:
    """Problem restricted to variables not pinned by presolve."""

    n: int
    free: np.ndarray  # bool mask
    x_fixed: np.ndarray  # full-length, valid where ~free
    lo: np.ndarray
    hi: np.ndarray
    H: np.ndarray  # gradient of objective is H y + g
    g: np.ndarray
    const: float
    E: np.ndarray
    d: np.ndarray
    G: np.ndarray
    h: np.ndarray
    eq_rows: np.ndarray  # original indices of the kept rows
    ineq_rows: np.ndarray
    infeasible: bool = False
    reason: str = ""
    _key: str | None = field(default=None, repr=False)

    def key(self) -> str:
        """Digest identifying the reduced problem; equal keys mean equal QPs."""
        if self._key is None:
            hsh = hashlib.blake2b(digest_size=16)
            for arr in (self.free, self.lo, self.hi, self.g, self.d, self.h,
                        self.eq_rows, self.ineq_rows):
                hsh.update(np.ascontiguousarray(arr).tobytes())
                hsh.update(b"|")
            hsh.update(repr(self.const).encode())
            hsh.update(repr(self.infeasible).encode())
            self._key = hsh.hexdigest()
        return self._key


def presolve(Q, c, A_eq, b_eq, A_in, b_in, lo, hi, tol: Tolerances = TOLERANCES) -> Reduced:
    """Fix variables via bounds and singleton rows; drop empty rows."""
    n = Q.shape[0]
    lo, hi = lo.copy(), hi.copy()
    ftol = tol.feasibility
    eq_keep = np.ones(A_eq.shape[0], dtype=bool)
    in_keep = np.ones(A_in.shape[0], dtype=bool)

    def fail(reason):
        return Reduced(n, np.zeros(n, bool), lo, lo, hi, np.zeros((0, 0)), np.zeros(0), 0.0,
                       np.zeros((0, 0)), np.zeros(0), np.zeros((0, 0)), np.zeros(0),
                       np.zeros(0, int), np.zeros(0, int), True, reason)

    for _ in range(20):
        if np.any(lo > hi + ftol):
            j = int(np.flatnonzero(lo > hi + ftol)[0])
            return fail(f"bounds of variable {j} cross")
        fixed = hi - lo <= 0.0
        hi = np.where(lo > hi, lo, hi)
        changed = False
        x_fix = np.where(fixed, lo, 0.0)
        free = ~fixed
        for A, b, keep, is_eq in ((A_eq, b_eq, eq_keep, True), (A_in, b_in, in_keep, False)):
            if A.shape[0] == 0:
                continue
            Af = A[:, free]
            rhs = b - A[:, fixed] @ x_fix[fixed]
            nnz = (Af != 0).sum(axis=1)
            for r in np.flatnonzero(keep & (nnz <= 1)):
                if nnz[r] == 0:
                    bad = abs(rhs[r]) > ftol if is_eq else rhs[r] < -ftol
                    if bad:
                        return fail(f"{'equality' if is_eq else 'inequality'} row {r} violated")
                    keep[r] = False
                    continue
                jf = int(np.flatnonzero(Af[r])[0])
                j = int(np.flatnonzero(free)[jf])
                coef = Af[r, jf]
                val = rhs[r] / coef
                if is_eq:
                    if val < lo[j] - ftol or val > hi[j] + ftol:
                        return fail(f"equality row {r} conflicts with bounds of variable {j}")
                    lo[j] = hi[j] = min(max(val, lo[j]), hi[j])
                elif coef > 0:
                    hi[j] = min(hi[j], val)
                else:
                    lo[j] = max(lo[j], val)
                keep[r] = False
                changed = True
        if not changed:
            break

    if np.any(lo > hi + ftol):
        j = int(np.flatnonzero(lo > hi + ftol)[0])
        return fail(f"bounds of variable {j} cross")
    hi = np.maximum(hi, lo)
    fixed = hi - lo <= 0.0
    free = ~fixed
    x_fix = np.where(fixed, lo, 0.0)
    xf = x_fix[fixed]
    H = 2.0 * Q[np.ix_(free, free)]
    g = c[free] + 2.0 * Q[np.ix_(free, fixed)] @ xf
    const = float(xf @ Q[np.ix_(fixed, fixed)] @ xf + c[fixed] @ xf)
    eq_rows = np.flatnonzero(eq_keep)
    in_rows = np.flatnonzero(in_keep)
    E = A_eq[np.ix_(eq_rows, free)]
    d = b_eq[eq_rows] - A_eq[np.ix_(eq_rows, fixed)] @ xf
    G = A_in[np.ix_(in_rows, free)]
    h = b_in[in_rows] - A_in[np.ix_(in_rows, fixed)] @ xf
    return Reduced(n, free, x_fix, lo[free], hi[free], H, g, const, E, d, G, h, eq_rows, in_rows)


def _independent_rows(E: np.ndarray, pivot_tol: float) -> np.ndarray:
    if E.shape[0] == 0:
        return np.zeros(0, dtype=int)
    _, R, piv = scipy.linalg.qr(E.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.size == 0:
        return np.zeros(0, dtype=int)
    rank = int(np.sum(diag > pivot_tol * max(1.0, diag[0]) * max(E.shape)))
    return np.sort(piv[:rank])


def _phase_one(red: Reduced):
    """Feasible point of the reduced constraint set, or None if infeasible."""
    m = red.lo.size
    bounds = list(zip(np.where(np.isfinite(red.lo), red.lo, None),
                      np.where(np.isfinite(red.hi), red.hi, None)))
    kw = dict(
        A_ub=red.G if red.G.shape[0] else None,
        b_ub=red.h if red.G.shape[0] else None,
        A_eq=red.E if red.E.shape[0] else None,
        b_eq=red.d if red.E.shape[0] else None,
        bounds=bounds,
        method="highs",
    )
    res = linprog(np.zeros(m), options=dict(primal_feasibility_tolerance=1e-10,
                                            dual_feasibility_tolerance=1e-10), **kw)
    if res.status not in (0, 2):
        res = linprog(np.zeros(m), **kw)
    if res.status == 2:
        return None, "infeasible"
    if res.status != 0 or res.x is None:
        return None, f"phase one failed: {res.message}"
    return np.clip(res.x, red.lo, red.hi), ""


def solve_qp(
    Q,
    A_eq=None,
    b_eq=None,
    A_ineq=None,
    b_ineq=None,
    bounds=None,
    c=None,
    *,
    tol: Tolerances = TOLERANCES,
    max_iter: int | None = None,
) -> QPSolution:
    """Minimise ``x'Qx + c'x`` over a polyhedron.

    ``bounds`` is an ``(n, 2)`` array-like of (lower, upper), ``None`` or
    ``inf`` meaning unbounded.  Multipliers follow the Lagrangian
    ``f + y'(A_eq x - b_eq) + z'(A_ineq x - b_ineq) + ...`` with ``z >= 0``.
    Deterministic for identical inputs.
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    n = Q.shape[0]
    if Q.shape != (n, n):
        raise ValueError("Q must be square")
    if np.abs(Q - Q.T).max(initial=0.0) > 1e-12 * max(1.0, np.abs(Q).max(initial=0.0)):
        raise ValueError("Q must be symmetric")
    c = np.zeros(n) if c is None else np.asarray(c, dtype=float)
    A_eq, b_eq = _as_rows(A_eq, b_eq, n)
    A_in, b_in = _as_rows(A_ineq, b_ineq, n)
    lo, hi = _as_bounds(bounds, n)
    red = presolve(Q, c, A_eq, b_eq, A_in, b_in, lo, hi, tol)
    return solve_reduced(red, Q, c, A_eq, b_eq, A_in, b_in, lo, hi, tol=tol, max_iter=max_iter)


def solve_reduced(red: Reduced, Q, c, A_eq, b_eq, A_in, b_in, lo, hi, *,
                  tol: Tolerances = TOLERANCES, max_iter: int | None = None) -> QPSolution:
    n = Q.shape[0]
    if red.infeasible:
        return QPSolution(None, float("inf"), INFEASIBLE, message=red.reason)

    m = int(red.free.sum())
    if m == 0:
        y = np.zeros(0)
        it = 0
    else:
        y0, why = _phase_one(red)
        if y0 is None:
            status = INFEASIBLE if why == "infeasible" else NUMERICAL_FAILURE
            return QPSolution(None, float("inf"), status, message=why)
        y, it, status, why = _active_set(red, y0, tol, max_iter or 50 * max(n, 1))
        if status != OPTIMAL:
            return QPSolution(None, float("inf"), status, iterations=it, message=why)

    x = red.x_fixed.copy()
    x[red.free] = y
    return _certify(x, Q, c, A_eq, b_eq, A_in, b_in, lo, hi, tol, it)


def _active_set(red: Reduced, y, tol: Tolerances, max_iter: int):
    m = y.size
    hscale = max(np.abs(red.H).max(initial=0.0), np.abs(red.g).max(initial=0.0), 1e-300)
    H = red.H / hscale
    g = red.g / hscale

    eye = np.eye(m)
    fin_lo = np.flatnonzero(np.isfinite(red.lo))
    fin_hi = np.flatnonzero(np.isfinite(red.hi))
    rows = np.vstack([red.E, red.G, -eye[fin_lo], eye[fin_hi]])
    rhs = np.concatenate([red.d, red.h, -red.lo[fin_lo], red.hi[fin_hi]])
    norms = np.abs(rows).max(axis=1)
    norms[norms == 0] = 1.0
    rows = rows / norms[:, None]
    rhs = rhs / norms
    n_eq = red.E.shape[0]

    W = [int(i) for i in _independent_rows(rows[:n_eq], tol.pivot)]
    in_W = np.zeros(rows.shape[0], dtype=bool)
    in_W[W] = True
    in_W[:n_eq] = True  # dependent equalities are implied, never blocking

    curv_tol = 1e-11
    stalled = 0
    subspace_min = False
    for it in range(1, max_iter + 1):
        grad = H @ y + g
        A_W = rows[W]
        if W:
            Qf, R = np.linalg.qr(A_W.T, mode="complete")
            Z = Qf[:, len(W):]
        else:
            Qf = R = None
            Z = eye
        p = None
        zero_curv = False
        if Z.shape[1] and not subspace_min:
            gz = Z.T @ grad
            Hz = Z.T @ H @ Z
            w, V = np.linalg.eigh(Hz)
            pos = w > curv_tol * max(1.0, w.max(initial=0.0))
            Vn = V[:, ~pos]
            gn = Vn @ (Vn.T @ gz)
            if np.abs(gn).max(initial=0.0) > 1e-12 * max(1.0, np.abs(grad).max()):
                p = -(Z @ gn)
                zero_curv = True
            else:
                Vp = V[:, pos]
                p = -(Z @ (Vp @ ((Vp.T @ gz) / w[pos])))
            if np.abs(p).max(initial=0.0) <= 1e-13 * max(1.0, np.abs(y).max(initial=0.0)):
                p = None

        if p is None:
            # stationary on the working subspace: inspect multipliers
            lam = _multipliers(Qf, R, len(W), grad)
            ineq_pos = [t for t, r in enumerate(W) if r >= n_eq]
            if not ineq_pos:
                return y, it, OPTIMAL, ""
            lam_in = lam[ineq_pos]
            if lam_in.min() >= -tol.dual * 1e-2:
                return y, it, OPTIMAL, ""
            neg = [t for t in ineq_pos if lam[t] < -tol.dual * 1e-2]
            if stalled > 2 * m:
                drop = min(neg, key=lambda t: W[t])  # Bland: lowest row index
            else:
                drop = min(neg, key=lambda t: (lam[t], W[t]))
            in_W[W[drop]] = False
            del W[drop]
            subspace_min = False
            continue

        Ap = rows @ p
        cand = np.flatnonzero(~in_W & (Ap > 1e-12 * np.abs(p).max()))
        step_cap = np.inf if zero_curv else 1.0
        alpha = step_cap
        block = -1
        if cand.size:
            slack = rhs[cand] - rows[cand] @ y
            ratios = np.maximum(slack, 0.0) / Ap[cand]
            k = int(np.argmin(ratios))  # argmin returns lowest index on ties
            if ratios[k] < alpha:
                alpha = float(ratios[k])
                block = int(cand[k])
        if not np.isfinite(alpha):
            return y, it, NUMERICAL_FAILURE, "unbounded zero-curvature direction"
        y = y + alpha * p
        if block >= 0:
            W.append(block)
            in_W[block] = True
            stalled = stalled + 1 if alpha == 0.0 else 0
            subspace_min = False
        else:
            subspace_min = True
    return y, max_iter, NUMERICAL_FAILURE, f"iteration cap {max_iter} reached"


def _multipliers(Qf, R, w, grad):
    if w == 0:
        return np.zeros(0)
    rhs = -(Qf[:, :w].T @ grad)
    return scipy.linalg.solve_triangular(R[:w, :w], rhs)


def _certify(x, Q, c, A_eq, b_eq, A_in, b_in, lo, hi, tol: Tolerances, it: int) -> QPSolution:
    """Recover multipliers in the original space and measure KKT residuals."""
    n = x.size
    grad = 2.0 * Q @ x + c
    r_eq = A_eq @ x - b_eq
    r_in = A_in @ x - b_in
    primal = max(
        np.abs(r_eq).max(initial=0.0),
        r_in.max(initial=0.0),
        (lo - x).max(initial=0.0),
        (x - hi).max(initial=0.0),
    )
    scale = max(1.0, np.abs(x).max(initial=0.0))
    act_tol = 1e-9 * scale
    act_in = np.flatnonzero(r_in >= -act_tol)
    act_lo = np.flatnonzero(x - lo <= act_tol)
    act_hi = np.flatnonzero(hi - x <= act_tol)
    # columns: eq rows (free sign), active ineq rows, -e_j lower, +e_j upper
    cols = [A_eq.T, A_in[act_in].T, -np.eye(n)[:, act_lo], np.eye(n)[:, act_hi]]
    B = np.hstack(cols)
    n_eq, n_ai, n_lo = A_eq.shape[0], act_in.size, act_lo.size
    sign = np.zeros(B.shape[1], dtype=bool)
    sign[n_eq:] = True
    mult = _nnls_kkt(B, -grad, sign)
    resid = grad + B @ mult
    y = mult[:n_eq]
    z = np.zeros(A_in.shape[0])
    z[act_in] = mult[n_eq:n_eq + n_ai]
    zl = np.zeros(n)
    zl[act_lo] = mult[n_eq + n_ai:n_eq + n_ai + n_lo]
    zu = np.zeros(n)
    zu[act_hi] = mult[n_eq + n_ai + n_lo:]
    obj = float(x @ Q @ x + c @ x)
    kkt = float(np.abs(resid).max(initial=0.0))
    status = OPTIMAL
    msg = ""
    if primal > tol.feasibility:
        status, msg = NUMERICAL_FAILURE, f"primal residual {primal:.3g}"
    return QPSolution(
        x=x,
        objective=obj,
        status=status,
        active_set=tuple(int(i) for i in act_in),
        kkt_residual=kkt,
        primal_residual=float(primal),
        eq_multipliers=y,
        ineq_multipliers=z,
        lower_multipliers=zl,
        upper_multipliers=zu,
        iterations=it,
        message=msg,
    )


def _nnls_kkt(B, target, sign):
    """Least squares ``B m = target`` with ``m >= 0`` on signed columns.

    Small dense problem; free columns are eliminated by projection, the rest
    solved by scipy's NNLS.
    """
    if B.shape[1] == 0:
        return np.zeros(0)
    free = ~sign
    if not free.any():
        return scipy.optimize.nnls(B, target)[0]
    Bf = B[:, free]
    if not sign.any():
        return np.linalg.lstsq(Bf, target, rcond=None)[0]
    # project out the free columns' span, solve the signed part, back-substitute
    Uf, sf, _ = np.linalg.svd(Bf, full_matrices=False)
    Uf = Uf[:, sf > 1e-12 * max(1.0, sf.max(initial=0.0))]
    P = np.eye(B.shape[0]) - Uf @ Uf.T
    ms = scipy.optimize.nnls(P @ B[:, sign], P @ target)[0]
    mf = np.linalg.lstsq(Bf, target - B[:, sign] @ ms, rcond=None)[0]
    out = np.zeros(B.shape[1])
    out[free] = mf
    out[sign] = ms
    return out
