"""Mixed-binary QP assembly for the overlay-constrained mean-variance problem.

Variable vector, continuous block first::

    a[i,j]  asset weights (A*C, class-major)
    cash    margin cash held in the base currency
    q+[k]   long part of forward k
    q-[k]   short part of forward k  (q_k = q+_k - q-_k)
    t[j]    |overlay_j| auxiliaries
    b[k]    contract activation (binary)
    s[k]    contract direction   (binary, 1 = long)
    d[j]    net direction of country j (binary, 1 = receives overlay);
            present only when wash trades are excluded

Currency exposures are affine in (a, cash, q) and are substituted into the
objective rather than carried as variables.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Mapping

import numpy as np

from .market_data import AdjustedMoments, asset_index, currency_index
from .overlay import CostModel, build_combinatorics, pair_names

POLICIES = ("unrestricted", "fully_hedged", "foreign_only")
MODES = ("unified", "two_stage")

DEFAULT_ALPHA = 1e-6  # 0.0001% of portfolio value per contract


class StaticInfeasibility(ValueError):
    """Raised when the constraint parameters alone admit no portfolio."""


def _vec(value, size: int, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = np.full(size, float(arr))
    if arr.shape != (size,):
        raise ValueError(f"{name} must be a scalar or have length {size}")
    return arr


@dataclass(frozen=True)
class ProblemSpec:
    """Target return and overlay-constraint parameters (decimal fractions).

    Defaults follow the usual desk settings: V_u = 100%, currency exposure in
    [0, 1], forward sizes in [-1, 1], every contract allowed, 10% margin.
    """

    n_countries: int
    mu: float = 0.01
    V_u: float = 1.0
    E_l: np.ndarray | float = 0.0
    E_u: np.ndarray | float = 1.0
    l: np.ndarray | float = -1.0
    u: np.ndarray | float = 1.0
    G: int | None = None
    M: float = 0.10
    alpha: float = DEFAULT_ALPHA
    beta: np.ndarray | float = 0.0
    policy: str = "unrestricted"
    mode: str = "unified"
    no_short_assets: bool = True
    base_country: int = 0
    no_wash_trades: bool = False

    def __post_init__(self):
        C = int(self.n_countries)
        if C < 1:
            raise ValueError("n_countries must be positive")
        K = C * (C - 1) // 2
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        for name, size in (("E_l", C), ("E_u", C), ("l", K), ("u", K), ("beta", K)):
            arr = _vec(getattr(self, name), size, name)
            arr.setflags(write=False)
            set_(name, arr)
        set_("G", K if self.G is None else int(self.G))
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}; expected one of {POLICIES}")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if not 0 <= self.G <= K:
            raise ValueError(f"G must lie in 0..{K}")
        if not 0.0 <= self.V_u <= 1.0:
            raise ValueError("V_u must lie in [0, 1]")
        if np.any(self.E_l > self.E_u):
            raise ValueError("E_l must not exceed E_u")
        if np.any(self.l > 0) or np.any(self.u < 0):
            raise ValueError("forward bounds need l <= 0 <= u")
        if not 0 <= self.base_country < C:
            raise ValueError("base_country out of range")
        CostModel(self.alpha, self.beta, self.M)  # validates alpha, beta, M

    @property
    def n_contracts(self) -> int:
        return self.n_countries * (self.n_countries - 1) // 2

    @property
    def cost(self) -> CostModel:
        return CostModel(self.alpha, self.beta, self.M)

    def replace(self, **changes) -> "ProblemSpec":
        return replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, np.ndarray):
                d[k] = v.tolist()
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any], n_countries: int | None = None) -> "ProblemSpec":
        d = dict(d)
        C = d.pop("n_countries", None) if n_countries is None else n_countries
        d.pop("n_countries", None)
        if C is None:
            raise ValueError("n_countries is required")
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ValueError(f"unknown spec keys: {sorted(unknown)}")
        return cls(n_countries=int(C), **d)

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text

    @classmethod
    def from_json(cls, path: str | Path, n_countries: int | None = None) -> "ProblemSpec":
        with open(path) as fh:
            return cls.from_dict(json.load(fh), n_countries)


@dataclass(frozen=True)
class Layout:
    n_countries: int
    n_classes: int
    n_contracts: int
    n_directions: int = 0

    @property
    def n_assets(self) -> int:
        return self.n_classes * self.n_countries

    @property
    def a(self) -> slice:
        return slice(0, self.n_assets)

    @property
    def cash(self) -> int:
        return self.n_assets

    @property
    def qp(self) -> slice:
        s = self.n_assets + 1
        return slice(s, s + self.n_contracts)

    @property
    def qm(self) -> slice:
        s = self.n_assets + 1 + self.n_contracts
        return slice(s, s + self.n_contracts)

    @property
    def t(self) -> slice:
        s = self.n_assets + 1 + 2 * self.n_contracts
        return slice(s, s + self.n_countries)

    @property
    def n_cont(self) -> int:
        return self.n_assets + 1 + 2 * self.n_contracts + self.n_countries

    @property
    def b(self) -> slice:
        return slice(self.n_cont, self.n_cont + self.n_contracts)

    @property
    def s(self) -> slice:
        s = self.n_cont + self.n_contracts
        return slice(s, s + self.n_contracts)

    @property
    def d(self) -> slice:
        s = self.n_cont + 2 * self.n_contracts
        return slice(s, s + self.n_directions)

    @property
    def n_bin(self) -> int:
        return 2 * self.n_contracts + self.n_directions

    @property
    def n_vars(self) -> int:
        return self.n_cont + self.n_bin

    @property
    def n_modeled(self) -> int:
        """Decision quantities before linearisation: asset weights plus forwards."""
        return self.n_assets + self.n_contracts


@dataclass(frozen=True)
class Solution:
    """Decoded portfolio with exposures, costs and diagnostics."""

    a: np.ndarray  # (A, C)
    cash: float
    q_plus: np.ndarray
    q_minus: np.ndarray
    t: np.ndarray
    b: np.ndarray
    s: np.ndarray
    asset_exposure: np.ndarray
    overlay: np.ndarray
    currency_exposure: np.ndarray
    total_overlay: float
    variance: float
    expected_return: float
    fixed_cost: float
    spread_cost: float
    carry: float
    margin_required: float
    countries: tuple[str, ...]
    asset_classes: tuple[str, ...]
    pairs: tuple[str, ...]

    @property
    def q(self) -> np.ndarray:
        return self.q_plus - self.q_minus

    @property
    def volatility(self) -> float:
        return float(np.sqrt(max(self.variance, 0.0)))

    @property
    def cost_paid(self) -> float:
        return self.fixed_cost + self.spread_cost

    @property
    def achieved_return(self) -> float:
        return self.expected_return - self.cost_paid

    @property
    def active(self) -> np.ndarray:
        return self.b > 0.5

    @property
    def class_totals(self) -> dict[str, float]:
        return {cls: float(self.a[i].sum()) for i, cls in enumerate(self.asset_classes)}

    def to_dict(self) -> dict[str, Any]:
        return {
            "countries": list(self.countries),
            "asset_classes": list(self.asset_classes),
            "pairs": list(self.pairs),
            "a": self.a.tolist(),
            "cash": self.cash,
            "q": self.q.tolist(),
            "q_plus": self.q_plus.tolist(),
            "q_minus": self.q_minus.tolist(),
            "t": self.t.tolist(),
            "b": self.b.tolist(),
            "s": self.s.tolist(),
            "active": [bool(v) for v in self.active],
            "asset_exposure": self.asset_exposure.tolist(),
            "overlay": self.overlay.tolist(),
            "currency_exposure": self.currency_exposure.tolist(),
            "total_overlay": self.total_overlay,
            "variance": self.variance,
            "volatility": self.volatility,
            "expected_return": self.expected_return,
            "fixed_cost": self.fixed_cost,
            "spread_cost": self.spread_cost,
            "cost_paid": self.cost_paid,
            "achieved_return": self.achieved_return,
            "carry": self.carry,
            "margin_required": self.margin_required,
            "class_totals": self.class_totals,
        }


@dataclass(frozen=True)
class MixedBinaryQP:
    """``min z'Qz`` subject to linear rows, bounds and binaries.

    Immutable; every row carries a label for diagnostics.
    """

    Q: np.ndarray
    c: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray
    A_ineq: np.ndarray
    b_ineq: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    binary_index: np.ndarray
    names: tuple[str, ...]
    eq_labels: tuple[str, ...]
    ineq_labels: tuple[str, ...]
    layout: Layout
    moments: AdjustedMoments
    spec: ProblemSpec
    P: np.ndarray = field(repr=False)  # maps z to exposure vector x = [a; c]

    def __post_init__(self):
        for name in ("Q", "c", "A_eq", "b_eq", "A_ineq", "b_ineq", "lb", "ub", "binary_index", "P"):
            arr = np.array(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_cont(self) -> int:
        return self.layout.n_cont

    @property
    def n_bin(self) -> int:
        return int(self.binary_index.size)

    @property
    def var_map(self) -> dict[str, int]:
        return {name: k for k, name in enumerate(self.names)}

    @property
    def bounds(self) -> np.ndarray:
        return np.column_stack([self.lb, self.ub])

    def with_rows(self, A_eq=None, b_eq=None, eq_labels=(), spec=None) -> "MixedBinaryQP":
        out = self
        if A_eq is not None and len(A_eq):
            out = replace(
                out,
                A_eq=np.vstack([self.A_eq, A_eq]),
                b_eq=np.concatenate([self.b_eq, b_eq]),
                eq_labels=self.eq_labels + tuple(eq_labels),
            )
        if spec is not None:
            out = replace(out, spec=spec)
        return out

    def currency_row(self, j: int) -> np.ndarray:
        L = self.layout
        return self.P[currency_index(j, L.n_countries, L.n_classes)].copy()

    def decode(self, z: np.ndarray) -> Solution:
        return decode(self, z)

    def encode(self, sol: Solution) -> np.ndarray:
        L = self.layout
        z = np.zeros(L.n_vars)
        z[L.a] = np.asarray(sol.a).reshape(-1)
        z[L.cash] = sol.cash
        z[L.qp] = sol.q_plus
        z[L.qm] = sol.q_minus
        z[L.t] = sol.t
        z[L.b] = sol.b
        z[L.s] = sol.s
        if L.n_directions:
            z[L.d] = (sol.overlay > 0).astype(float)
        return z

    def round_binaries(self, z: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        """Integral binaries consistent with the continuous part of ``z``.

        A contract is switched on when it carries a position; its direction
        follows the larger leg.
        """
        L = self.layout
        qp, qm = z[L.qp], z[L.qm]
        held = (qp + qm) > tol
        b = np.where(held, 1.0, np.where(z[L.b] > 1.0 - tol, 1.0, 0.0))
        s = np.where(qp > qm + tol, 1.0, np.where(qm > qp + tol, 0.0, np.round(z[L.s])))
        if not L.n_directions:
            return np.concatenate([b, s])
        v = self.P[L.n_assets:, L.qp] @ qp + self.P[L.n_assets:, L.qm] @ qm
        d = np.where(v > tol, 1.0, np.where(v < -tol, 0.0, np.round(z[L.d])))
        return np.concatenate([b, s, d])


def _exposure_map(moments: AdjustedMoments, L: Layout, T: np.ndarray, base: int) -> np.ndarray:
    """Matrix P with x = P z, x = [asset weights; currency exposures]."""
    C, A = L.n_countries, L.n_classes
    P = np.zeros((C * (A + 1), L.n_vars))
    for i in range(A):
        for j in range(C):
            P[asset_index(i, j, C), L.a.start + asset_index(i, j, C)] = 1.0
    for j in range(C):
        row = currency_index(j, C, A)
        for i in range(A):
            P[row, L.a.start + asset_index(i, j, C)] = 1.0
        if j == base:
            P[row, L.cash] = 1.0
        P[row, L.qp] = T[:, j]
        P[row, L.qm] = -T[:, j]
    return P


def assemble(moments: AdjustedMoments, spec: ProblemSpec) -> MixedBinaryQP:
    """Linearised mixed-binary QP of the overlay problem (policy not applied).

    Fixed costs ride on the activation binaries, |q| is split into long and
    short legs kept exclusive by direction binaries, and total overlay uses
    one auxiliary per country.
    """
    C, A = moments.n_countries, moments.n_classes
    if spec.n_countries != C:
        raise ValueError(f"spec is for {spec.n_countries} countries, moments have {C}")
    if C < 2:
        raise ValueError("an overlay problem needs at least two countries")
    if spec.E_l.sum() > 1.0 + 1e-12 or spec.E_u.sum() < 1.0 - 1e-12:
        raise StaticInfeasibility(
            "currency exposure bounds cannot sum to one "
            f"(sum E_l = {spec.E_l.sum():.6g}, sum E_u = {spec.E_u.sum():.6g})"
        )
    struct = build_combinatorics(C)
    K = struct.n_contracts
    L = Layout(C, A, K, C if spec.no_wash_trades else 0)
    T = struct.T
    base = spec.base_country
    P = _exposure_map(moments, L, T, base)
    n = L.n_vars

    names = [f"a[{cls},{c}]" for cls in moments.asset_classes for c in moments.countries]
    pairs = pair_names(moments.currencies, struct)
    names += ["cash"]
    names += [f"q+[{p}]" for p in pairs] + [f"q-[{p}]" for p in pairs]
    names += [f"t[{c}]" for c in moments.countries]
    names += [f"b[{p}]" for p in pairs] + [f"s[{p}]" for p in pairs]
    names += [f"d[{c}]" for c in moments.countries[:L.n_directions]]

    Q = P.T @ moments.omega @ P
    Q = 0.5 * (Q + Q.T)

    eq, eq_rhs, eq_lab = [], [], []
    ineq, ineq_rhs, ineq_lab = [], [], []

    def row():
        return np.zeros(n)

    # return target net of forward costs
    r = P.T @ moments.r
    r[L.b] -= spec.alpha
    r[L.qp] -= spec.beta
    r[L.qm] -= spec.beta
    eq.append(r), eq_rhs.append(spec.mu), eq_lab.append("return")

    rr = row()
    rr[L.a] = 1.0
    rr[L.cash] = 1.0
    eq.append(rr), eq_rhs.append(1.0), eq_lab.append("asset_budget")

    ccy_rows = P[A * C:]
    eq.append(ccy_rows.sum(axis=0)), eq_rhs.append(1.0), eq_lab.append("currency_budget")

    rr = row()
    rr[L.cash] = 1.0
    rr[L.qp] = -spec.M
    rr[L.qm] = -spec.M
    eq.append(rr), eq_rhs.append(0.0), eq_lab.append("margin")

    for j in range(C):
        ov = row()
        ov[L.qp] = T[:, j]
        ov[L.qm] = -T[:, j]
        tj = row()
        tj[L.t.start + j] = 1.0
        ineq.append(ov - tj), ineq_rhs.append(0.0), ineq_lab.append(f"overlay_abs+[{moments.countries[j]}]")
        ineq.append(-ov - tj), ineq_rhs.append(0.0), ineq_lab.append(f"overlay_abs-[{moments.countries[j]}]")
    rr = row()
    rr[L.t] = 0.5
    ineq.append(rr), ineq_rhs.append(spec.V_u), ineq_lab.append("total_overlay")

    for j in range(C):
        cj = ccy_rows[j]
        ineq.append(cj.copy()), ineq_rhs.append(spec.E_u[j]), ineq_lab.append(f"ccy_upper[{moments.countries[j]}]")
        ineq.append(-cj), ineq_rhs.append(-spec.E_l[j]), ineq_lab.append(f"ccy_lower[{moments.countries[j]}]")

    for k in range(K):
        qp, qm = L.qp.start + k, L.qm.start + k
        bk, sk = L.b.start + k, L.s.start + k
        uk, lk = spec.u[k], spec.l[k]
        rr = row(); rr[qp], rr[qm], rr[bk] = 1.0, -1.0, -uk
        ineq.append(rr), ineq_rhs.append(0.0), ineq_lab.append(f"size_upper[{pairs[k]}]")
        rr = row(); rr[qp], rr[qm], rr[bk] = -1.0, 1.0, lk
        ineq.append(rr), ineq_rhs.append(0.0), ineq_lab.append(f"size_lower[{pairs[k]}]")
        # per-leg activation rows; implied at integer points, tighter when relaxed
        rr = row(); rr[qp], rr[bk] = 1.0, -uk
        ineq.append(rr), ineq_rhs.append(0.0), ineq_lab.append(f"leg_upper[{pairs[k]}]")
        rr = row(); rr[qm], rr[bk] = 1.0, lk
        ineq.append(rr), ineq_rhs.append(0.0), ineq_lab.append(f"leg_lower[{pairs[k]}]")
        rr = row(); rr[qp], rr[sk] = 1.0, -uk
        ineq.append(rr), ineq_rhs.append(0.0), ineq_lab.append(f"sign+[{pairs[k]}]")
        rr = row(); rr[qm], rr[sk] = 1.0, -lk
        ineq.append(rr), ineq_rhs.append(-lk), ineq_lab.append(f"sign-[{pairs[k]}]")

    if spec.no_wash_trades:
        # every country either only receives or only gives: flows form a
        # bipartite graph, so no cycles or pass-through legs
        for k, (i, j) in enumerate(struct.pairs):
            qp, qm = L.qp.start + k, L.qm.start + k
            di, dj = L.d.start + i, L.d.start + j
            uk, lk = spec.u[k], spec.l[k]
            rr = row(); rr[qp], rr[di] = 1.0, -uk
            ineq.append(rr), ineq_rhs.append(0.0), ineq_lab.append(f"wash+buy[{pairs[k]}]")
            rr = row(); rr[qp], rr[dj] = 1.0, uk
            ineq.append(rr), ineq_rhs.append(uk), ineq_lab.append(f"wash+sell[{pairs[k]}]")
            rr = row(); rr[qm], rr[dj] = 1.0, lk
            ineq.append(rr), ineq_rhs.append(0.0), ineq_lab.append(f"wash-buy[{pairs[k]}]")
            rr = row(); rr[qm], rr[di] = 1.0, -lk
            ineq.append(rr), ineq_rhs.append(-lk), ineq_lab.append(f"wash-sell[{pairs[k]}]")

    rr = row()
    rr[L.b] = 1.0
    ineq.append(rr), ineq_rhs.append(float(spec.G)), ineq_lab.append("cardinality")

    lb = np.zeros(n)
    ub = np.ones(n)
    if not spec.no_short_assets:
        lb[L.a] = -1.0
    ub[L.qp] = spec.u
    ub[L.qm] = -spec.l
    ub[L.t] = 2.0

    binary_index = np.arange(L.n_cont, L.n_vars)
    return MixedBinaryQP(
        Q=Q,
        c=np.zeros(n),
        A_eq=np.array(eq),
        b_eq=np.array(eq_rhs),
        A_ineq=np.array(ineq),
        b_ineq=np.array(ineq_rhs),
        lb=lb,
        ub=ub,
        binary_index=binary_index,
        names=tuple(names),
        eq_labels=tuple(eq_lab),
        ineq_labels=tuple(ineq_lab),
        layout=L,
        moments=moments,
        spec=spec,
        P=P,
    )


def apply_policy(qp: MixedBinaryQP, policy: str, base_country: int = 0) -> MixedBinaryQP:
    """Pin base-currency exposure: 1 for fully_hedged, 0 for foreign_only.

    Cash counts toward base exposure since it is held in the base currency.
    """
    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}; expected one of {POLICIES}")
    if policy == "unrestricted":
        return qp
    target = 1.0 if policy == "fully_hedged" else 0.0
    return qp.with_rows(
        A_eq=qp.currency_row(base_country)[None, :],
        b_eq=np.array([target]),
        eq_labels=(f"policy:{policy}",),
    )


def build(moments: AdjustedMoments, spec: ProblemSpec) -> MixedBinaryQP:
    """Assembled problem with the hedging policy applied (unified mode)."""
    return apply_policy(assemble(moments, spec), spec.policy, spec.base_country)


def build_two_stage(
    moments: AdjustedMoments, spec: ProblemSpec
) -> tuple[MixedBinaryQP, Callable[[np.ndarray], MixedBinaryQP]]:
    """Stage one without forwards, plus a builder for the overlay stage.

    Stage two keeps the stage-one asset mix and scales it by ``1 - cash`` so
    that margin cash can be funded; only forwards and cash move.
    """
    stage1 = assemble(moments, spec.replace(G=0, policy="unrestricted"))

    def stage2(z1: np.ndarray) -> MixedBinaryQP:
        L = stage1.layout
        a_star = np.asarray(z1, dtype=float)[L.a]
        qp = build(moments, spec)
        rows = np.zeros((L.n_assets, L.n_vars))
        for k in range(L.n_assets):
            rows[k, L.a.start + k] = 1.0
            rows[k, L.cash] = a_star[k]
        labels = tuple(f"two_stage[{qp.names[L.a.start + k]}]" for k in range(L.n_assets))
        return qp.with_rows(A_eq=rows, b_eq=a_star.copy(), eq_labels=labels)

    return stage1, stage2


def decode(qp: MixedBinaryQP, z: np.ndarray) -> Solution:
    z = np.asarray(z, dtype=float)
    L, m, spec = qp.layout, qp.moments, qp.spec
    struct = build_combinatorics(L.n_countries)
    a = z[L.a].reshape(L.n_classes, L.n_countries)
    qp_, qm_ = z[L.qp].copy(), z[L.qm].copy()
    q = qp_ - qm_
    x = qp.P @ z
    overlay = struct.T.T @ q
    asset_exp = a.sum(axis=0)
    b = z[L.b] + 0.0  # drops negative zeros
    fixed = float(spec.alpha * b.sum())
    spread = float(spec.beta @ (qp_ + qm_))
    return Solution(
        a=a.copy(),
        cash=float(z[L.cash]),
        q_plus=qp_,
        q_minus=qm_,
        t=z[L.t].copy(),
        b=b,
        s=z[L.s] + 0.0,
        asset_exposure=asset_exp,
        overlay=overlay,
        currency_exposure=x[L.n_assets:].copy(),
        total_overlay=0.5 * float(np.abs(overlay).sum()),
        variance=float(x @ m.omega @ x),
        expected_return=float(x @ m.r),
        fixed_cost=fixed,
        spread_cost=spread,
        carry=float(overlay @ m.expected_rates),
        margin_required=float(spec.M * np.abs(q).sum()),
        countries=m.countries,
        asset_classes=m.asset_classes,
        pairs=tuple(pair_names(m.currencies, struct)),
    )


def check_solution(qp: MixedBinaryQP, z: np.ndarray, tol: float = 1e-8) -> list[str]:
    """Model-level invariants violated by ``z`` (empty list when clean)."""
    sol = decode(qp, z)
    spec = qp.spec
    issues = []
    if abs(sol.a.sum() + sol.cash - 1.0) > tol:
        issues.append(f"asset budget off by {sol.a.sum() + sol.cash - 1.0:.3g}")
    if abs(sol.currency_exposure.sum() - 1.0) > tol:
        issues.append(f"currency budget off by {sol.currency_exposure.sum() - 1.0:.3g}")
    if abs(sol.overlay.sum()) > tol:
        issues.append("overlay does not net to zero")
    if np.any(sol.q_plus * sol.q_minus > tol):
        issues.append("a contract holds both legs")
    if abs(sol.achieved_return - spec.mu) > tol:
        issues.append(f"return misses target by {sol.achieved_return - spec.mu:.3g}")
    if abs(sol.cash - spec.M * np.abs(sol.q).sum()) > tol:
        issues.append("margin cash does not match forward exposure")
    if sol.total_overlay > spec.V_u + tol:
        issues.append("total overlay above its cap")
    if np.any(sol.currency_exposure < spec.E_l - tol) or np.any(sol.currency_exposure > spec.E_u + tol):
        issues.append("currency exposure outside bounds")
    active = sol.b > 0.5
    if np.any(~active & (np.abs(sol.q) > tol)):
        issues.append("inactive contract holds a position")
    if active.sum() > spec.G:
        issues.append("too many active contracts")
    if np.any(sol.q > spec.u + tol) or np.any(sol.q < spec.l - tol):
        issues.append("forward size outside bounds")
    if spec.no_short_assets and np.any(sol.a < -tol):
        issues.append("short asset position")
    if spec.no_wash_trades and np.abs(sol.q).sum() > sol.total_overlay + tol:
        issues.append("forwards trade more than the net overlay")
    return issues
