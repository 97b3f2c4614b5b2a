"""FX forward combinatorics, exposures, carry and forward-contract costs.

Sign convention: ``q[k] > 0`` buys the first currency of ``pairs[k]`` and
sells the second, so contract k adds ``+q[k]`` exposure to the first country
and ``-q[k]`` to the second.

Carry is a diagnostic here.  Adjusted moments already fold the short rates
into expected returns, so adding carry to portfolio return again would count
it twice.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from itertools import combinations
from pathlib import Path
from typing import Sequence

import numpy as np

MAX_COUNTRIES = 12


@dataclass(frozen=True)
class OverlayStructure:
    n_countries: int
    pairs: tuple[tuple[int, int], ...]
    T: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        T = np.array(self.T, dtype=float)
        q = np.array(self.q, dtype=float)
        T.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, "T", T)
        object.__setattr__(self, "q", q)
        K = len(self.pairs)
        if T.shape != (K, self.n_countries) or q.shape != (K,):
            raise ValueError("T must be K x C and q length K")
        if np.any(np.abs(q) > 1.0 + 1e-12):
            raise ValueError("forward sizes must satisfy |q_k| <= 1")

    @property
    def n_contracts(self) -> int:
        return len(self.pairs)

    def with_sizes(self, q: Sequence[float]) -> "OverlayStructure":
        return replace(self, q=np.asarray(q, dtype=float))


def build_combinatorics(n_countries: int) -> OverlayStructure:
    """All C(C-1)/2 forward contracts in lexicographic pair order, q = 0."""
    C = int(n_countries)
    if C < 2:
        raise ValueError("an overlay needs at least two countries")
    if C > MAX_COUNTRIES:
        raise ValueError(f"at most {MAX_COUNTRIES} countries are supported")
    pairs = tuple(combinations(range(C), 2))
    T = np.zeros((len(pairs), C))
    for k, (buy, sell) in enumerate(pairs):
        T[k, buy] = 1.0
        T[k, sell] = -1.0
    return OverlayStructure(C, pairs, T, np.zeros(len(pairs)))


def forward_exposure_matrix(s: OverlayStructure) -> np.ndarray:
    """F = T o (1^T kron q): row k is contract k's exposure per country."""
    return s.T * s.q[:, None]


@dataclass(frozen=True)
class ExposureReport:
    asset_exposure: np.ndarray
    overlay: np.ndarray
    currency_exposure: np.ndarray
    total_overlay: float


def exposure_report(a: np.ndarray, s: OverlayStructure) -> ExposureReport:
    """Asset, overlay and currency exposure per country for A x C weights."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.shape[1] != s.n_countries:
        raise ValueError(f"asset weights must have {s.n_countries} columns")
    asset = a.sum(axis=0)
    overlay = forward_exposure_matrix(s).sum(axis=0)
    return ExposureReport(
        asset_exposure=asset,
        overlay=overlay,
        currency_exposure=asset + overlay,
        total_overlay=0.5 * float(np.abs(overlay).sum()),
    )


@dataclass(frozen=True)
class CarryReport:
    per_contract: np.ndarray
    total: float


def cost_of_carry(s: OverlayStructure, rates: Sequence[float]) -> CarryReport:
    """Carry earned per contract: size times (rate bought - rate sold).

    The total is cross-checked against overlay-weighted rates, which must
    agree to rounding.
    """
    rates = np.asarray(rates, dtype=float)
    if rates.shape != (s.n_countries,):
        raise ValueError(f"need {s.n_countries} rates")
    buy = np.array([p[0] for p in s.pairs], dtype=int)
    sell = np.array([p[1] for p in s.pairs], dtype=int)
    per = s.q * (rates[buy] - rates[sell])
    total = float(per.sum())
    via_overlay = float(forward_exposure_matrix(s).sum(axis=0) @ rates)
    if abs(total - via_overlay) > 1e-12 * max(1.0, abs(total)):
        raise ArithmeticError("carry identity failed")
    return CarryReport(per, total)


def forward_rate(spot: float, i_base: float, i_foreign: float) -> float:
    """Covered-interest-parity forward, quoted in base units per foreign unit.

    Over one period the foreign deposit earns ``i_foreign`` and the base
    deposit ``i_base``; no-arbitrage prices one unit of foreign currency
    forward at ``spot * (1 + i_base) / (1 + i_foreign)``.
    """
    if spot <= 0:
        raise ValueError("spot must be positive")
    if i_base <= -1 or i_foreign <= -1:
        raise ValueError("rates must exceed -100%")
    return spot * (1.0 + i_base) / (1.0 + i_foreign)


@dataclass(frozen=True)
class CostModel:
    alpha: float
    beta: np.ndarray
    M: float

    def __post_init__(self):
        beta = np.array(self.beta, dtype=float)
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if np.any(beta < 0):
            raise ValueError("spreads must be non-negative")
        if not 0.0 <= self.M <= 1.0:
            raise ValueError("margin rate must lie in [0, 1]")


@dataclass(frozen=True)
class TransactionCost:
    fixed: np.ndarray
    spread: np.ndarray
    total: float


def transaction_cost(
    s: OverlayStructure, active: Sequence[bool], cm: CostModel
) -> TransactionCost:
    """Fixed fee per active contract plus proportional spread on |q|."""
    active = np.asarray(active, dtype=bool)
    if active.shape != s.q.shape or cm.beta.shape != s.q.shape:
        raise ValueError("activation flags and spreads need one entry per contract")
    if np.any((s.q != 0) & ~active):
        bad = np.flatnonzero((s.q != 0) & ~active).tolist()
        raise ValueError(f"contracts {bad} hold a position but are not active")
    fixed = np.where(active, cm.alpha, 0.0)
    spread = cm.beta * np.abs(s.q)
    return TransactionCost(fixed, spread, float(fixed.sum() + spread.sum()))


def margin_cash(s: OverlayStructure, M: float) -> float:
    return float(M * np.abs(s.q).sum())


def represent_overlay(v: Sequence[float], s: OverlayStructure | None = None) -> np.ndarray:
    """Forward sizes reproducing overlay ``v`` with at most C-1 contracts.

    Uses the star tree centred on country 0: contract (0, j) carries ``-v_j``.
    """
    v = np.asarray(v, dtype=float)
    if s is None:
        s = build_combinatorics(v.size)
    if abs(v.sum()) > 1e-12 * max(1.0, np.abs(v).sum()):
        raise ValueError("an overlay must sum to zero across countries")
    q = np.zeros(s.n_contracts)
    for k, (first, second) in enumerate(s.pairs):
        if first == 0:
            q[k] = -v[second]
    return q


def pair_names(currencies: Sequence[str], s: OverlayStructure) -> list[str]:
    return [f"{currencies[a]}{currencies[b]}" for a, b in s.pairs]


def load_spreads(path: str | Path, currencies: Sequence[str]) -> np.ndarray:
    """Read a ``pair,beta`` CSV into a spread vector in contract order."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"spread table not found: {path}")
    s = build_combinatorics(len(currencies))
    names = pair_names(currencies, s)
    found: dict[str, float] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or {"pair", "beta"} - set(reader.fieldnames):
            raise ValueError(f"{path}: spread table needs 'pair' and 'beta' columns")
        for row in reader:
            pair = row["pair"].strip().upper()
            try:
                found[pair] = float(row["beta"])
            except ValueError:
                raise ValueError(f"{path}: bad spread {row['beta']!r} for {pair}") from None
    missing = [n for n in names if n not in found]
    if missing:
        raise ValueError(f"{path}: no spread for {', '.join(missing)}")
    return np.array([found[n] for n in names])


def total_return_explicit(
    a: np.ndarray,
    overlay: Sequence[float],
    asset_returns: np.ndarray,
    currency_returns: Sequence[float],
    rates: Sequence[float],
    cash: float = 0.0,
    base: int = 0,
) -> float:
    """Return from assets, currencies and carry on the overlay, term by term.

    ``a`` and ``asset_returns`` are A x C; cash sits in the base country and
    earns the base short rate.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    v = np.asarray(overlay, dtype=float)
    rates = np.asarray(rates, dtype=float)
    c = a.sum(axis=0) + v
    c[base] += cash
    return float(
        (a * np.asarray(asset_returns, dtype=float)).sum()
        + c @ np.asarray(currency_returns, dtype=float)
        + v @ rates
        + cash * rates[base]
    )


def total_return_adjusted(
    a: np.ndarray,
    currency_exposure: Sequence[float],
    asset_returns: np.ndarray,
    currency_returns: Sequence[float],
    rates: Sequence[float],
) -> float:
    """Same return through rate-adjusted returns; no overlay term needed."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    rates = np.asarray(rates, dtype=float)
    adj_a = np.asarray(asset_returns, dtype=float) - rates
    adj_c = np.asarray(currency_returns, dtype=float) + rates
    return float((a * adj_a).sum() + np.asarray(currency_exposure, dtype=float) @ adj_c)
