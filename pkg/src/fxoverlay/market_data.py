"""Return/yield time series ingestion and adjusted moment estimation.

All returns are decimal fractions per month (0.01 == 1%).  The adjusted
return of an asset is its local return minus the local short rate; the
adjusted return of a currency is its return against the base currency plus
the local short rate.  Folding the short rates into the moments this way is
what carries the forward contracts' cost of carry into portfolio return and
risk, so the optimizer never adds carry explicitly.
"""
from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

SYMMETRY_TOL = 1e-12
PSD_TOL = 1e-10
MIN_OBSERVATIONS = 3

_MONTH_RE = re.compile(r"^\d{4}-(0[1-9]|1[0-2])$")


class DataError(ValueError):
    """Base class for dataset problems."""


class SchemaError(DataError):
    pass


class AlignmentError(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        super().__init__(message)
        self.row = row
        self.column = column


class InsufficientDataError(DataError):
    pass


def _frozen(a: Any) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ReturnSeries:
    label: str
    kind: str  # "asset", "currency" or "rate"
    country: int
    values: np.ndarray
    period_start: str
    period_end: str
    asset_class: int | None = None

    def __post_init__(self):
        if self.kind not in ("asset", "currency", "rate"):
            raise ValueError(f"unknown series kind {self.kind!r}")
        object.__setattr__(self, "values", _frozen(self.values))
        if self.values.ndim != 1 or self.values.size == 0:
            raise DataError(f"series {self.label} is empty")
        if self.kind == "asset" and self.asset_class is None:
            raise ValueError(f"asset series {self.label} needs an asset class")


@dataclass(frozen=True)
class MarketDataSet:
    """Aligned monthly series for C countries and A risky asset classes.

    Country 0 is the base country.  ``expected_rates`` are monthly decimal
    short rates, usually estimated over a shorter, more recent window than the
    return moments.
    """

    countries: tuple[str, ...]
    currencies: tuple[str, ...]
    asset_classes: tuple[str, ...]
    months: tuple[str, ...]
    series: tuple[ReturnSeries, ...]
    expected_rates: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "expected_rates", _frozen(self.expected_rates))
        C, A = len(self.countries), len(self.asset_classes)
        if C < 1:
            raise SchemaError("dataset needs at least one country")
        if len(self.currencies) != C:
            raise SchemaError("one currency code per country is required")
        if self.expected_rates.shape != (C,) or not np.all(np.isfinite(self.expected_rates)):
            raise SchemaError("expected_rates must be finite, one per country")
        n = len(self.months)
        for s in self.series:
            if s.values.size != n:
                raise AlignmentError(
                    f"series {s.label} has {s.values.size} observations, expected {n}"
                )
        for j in range(C):
            for i in range(A):
                self.asset(i, j)
            self.currency(j)
            self.rate(j)

    @property
    def n_countries(self) -> int:
        return len(self.countries)

    @property
    def n_classes(self) -> int:
        return len(self.asset_classes)

    @property
    def n_obs(self) -> int:
        return len(self.months)

    @property
    def base_country(self) -> str:
        return self.countries[0]

    def _find(self, kind: str, j: int, i: int | None = None) -> ReturnSeries:
        for s in self.series:
            if s.kind == kind and s.country == j and s.asset_class == i:
                return s
        what = {"asset": "asset", "currency": "currency", "rate": "rate"}[kind]
        where = self.countries[j] if kind != "currency" else self.currencies[j]
        if i is not None:
            raise SchemaError(f"missing {what} series ({self.asset_classes[i]}, {where})")
        raise SchemaError(f"missing {what} series ({where})")

    def asset(self, i: int, j: int) -> ReturnSeries:
        return self._find("asset", j, i)

    def currency(self, j: int) -> ReturnSeries:
        return self._find("currency", j)

    def rate(self, j: int) -> ReturnSeries:
        return self._find("rate", j)


def asset_index(i: int, j: int, n_countries: int) -> int:
    """Position of (class i, country j) in the moment vector, 0-based."""
    return i * n_countries + j


def currency_index(j: int, n_countries: int, n_classes: int) -> int:
    return n_classes * n_countries + j


def moment_labels(
    countries: Sequence[str], currencies: Sequence[str], asset_classes: Sequence[str]
) -> tuple[str, ...]:
    labels = [f"asset:{cls}:{c}" for cls in asset_classes for c in countries]
    labels += [f"ccy:{ccy}" for ccy in currencies]
    return tuple(labels)


# -- loading -----------------------------------------------------------------


def load_schema(schema: str | Path | Mapping[str, Any]) -> dict[str, Any]:
    """Read and normalise a dataset column-mapping config.

    Recognised keys: ``countries`` (list of ``{"code", "currency"}`` or plain
    codes), ``asset_classes``, ``base_country``, ``rate_window`` (months,
    default 12) and optional ``expected_rates`` overrides in monthly decimals.
    """
    if not isinstance(schema, Mapping):
        with open(schema) as fh:
            schema = json.load(fh)
    try:
        raw_countries = list(schema["countries"])
        classes = [str(c) for c in schema.get("asset_classes", [])]
    except KeyError as exc:
        raise SchemaError(f"schema is missing key {exc.args[0]!r}") from None
    codes, currencies = [], []
    for entry in raw_countries:
        if isinstance(entry, Mapping):
            codes.append(str(entry["code"]))
            currencies.append(str(entry.get("currency", entry["code"])))
        else:
            codes.append(str(entry))
            currencies.append(str(entry))
    if not codes:
        raise SchemaError("schema lists no countries")
    if len(set(codes)) != len(codes):
        raise SchemaError("duplicate country codes in schema")
    base = str(schema.get("base_country", codes[0]))
    if base not in codes:
        raise SchemaError(f"base country {base!r} is not among the countries")
    # base country always takes index 0
    order = [codes.index(base)] + [k for k in range(len(codes)) if codes[k] != base]
    window = int(schema.get("rate_window", 12))
    if window < 1:
        raise SchemaError("rate_window must be a positive number of months")
    return {
        "countries": tuple(codes[k] for k in order),
        "currencies": tuple(currencies[k] for k in order),
        "asset_classes": tuple(classes),
        "rate_window": window,
        "expected_rates": dict(schema.get("expected_rates", {}) or {}),
    }


def _parse_float(text: str, row: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(
            f"non-numeric value {text!r} at row {row}, column {column!r}", row, column
        ) from None
    if not np.isfinite(value):
        raise ParseError(f"non-finite value at row {row}, column {column!r}", row, column)
    return value


def load_dataset(path: str | Path, schema: str | Path | Mapping[str, Any]) -> MarketDataSet:
    """Load a wide monthly CSV into a :class:`MarketDataSet`.

    The first column is ``month`` (``YYYY-MM``); the others are named
    ``asset:<class>:<country>``, ``ccy:<currency>`` or ``rate:<country>``.
    Unknown columns are ignored.  The base currency column may be omitted, in
    which case it is the zero series.
    """
    cfg = load_schema(schema)
    countries, currencies, classes = cfg["countries"], cfg["currencies"], cfg["asset_classes"]
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset not found: {path}")

    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path} is empty") from None
        if not header or header[0] != "month":
            raise SchemaError("first column must be 'month'")
        months: list[str] = []
        columns: dict[str, list[float]] = {h: [] for h in header[1:]}
        for row_no, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise AlignmentError(
                    f"row {row_no} has {len(row)} fields, header has {len(header)}"
                )
            month = row[0].strip()
            if not _MONTH_RE.match(month):
                raise ParseError(f"bad month stamp {month!r} at row {row_no}", row_no, "month")
            months.append(month)
            for name, cell in zip(header[1:], row[1:]):
                cell = cell.strip()
                if cell == "":
                    raise AlignmentError(f"missing value at row {row_no}, column {name!r}")
                columns[name].append(_parse_float(cell, row_no, name))
    if not months:
        raise InsufficientDataError(f"{path} contains no observations")
    if list(months) != sorted(months) or len(set(months)) != len(months):
        raise AlignmentError("month column must be strictly increasing")

    start, end = months[0], months[-1]
    series: list[ReturnSeries] = []
    for j, country in enumerate(countries):
        for i, cls in enumerate(classes):
            name = f"asset:{cls}:{country}"
            if name not in columns:
                raise SchemaError(f"missing asset series ({cls}, {country})")
            series.append(ReturnSeries(name, "asset", j, columns[name], start, end, i))
        name = f"ccy:{currencies[j]}"
        if name in columns:
            values = columns[name]
        elif j == 0:
            values = [0.0] * len(months)
        else:
            raise SchemaError(f"missing currency series ({currencies[j]})")
        series.append(ReturnSeries(name, "currency", j, values, start, end))
        name = f"rate:{country}"
        if name not in columns:
            raise SchemaError(f"missing rate series ({country})")
        series.append(ReturnSeries(name, "rate", j, columns[name], start, end))

    window = min(cfg["rate_window"], len(months))
    expected = []
    for j, country in enumerate(countries):
        override = cfg["expected_rates"].get(country)
        if override is not None:
            expected.append(float(override))
        else:
            rate = np.asarray(columns[f"rate:{country}"])
            expected.append(float(rate[-window:].mean()))

    return MarketDataSet(
        countries=countries,
        currencies=currencies,
        asset_classes=classes,
        months=tuple(months),
        series=tuple(series),
        expected_rates=np.array(expected),
    )


# -- adjustment and moments --------------------------------------------------


@dataclass(frozen=True)
class AdjustedSeries:
    """Raw and rate-adjusted series side by side, in moment-vector order."""

    labels: tuple[str, ...]
    raw: np.ndarray  # (T, C(A+1))
    adjusted: np.ndarray
    countries: tuple[str, ...]
    currencies: tuple[str, ...]
    asset_classes: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "raw", _frozen(self.raw))
        object.__setattr__(self, "adjusted", _frozen(self.adjusted))


def adjust_series(data: MarketDataSet) -> AdjustedSeries:
    C, A = data.n_countries, data.n_classes
    T = data.n_obs
    raw = np.empty((T, C * (A + 1)))
    adj = np.empty_like(raw)
    for j in range(C):
        z = data.rate(j).values
        for i in range(A):
            k = asset_index(i, j, C)
            raw[:, k] = data.asset(i, j).values
            adj[:, k] = raw[:, k] - z
        k = currency_index(j, C, A)
        raw[:, k] = data.currency(j).values
        adj[:, k] = raw[:, k] + z
    return AdjustedSeries(
        labels=moment_labels(data.countries, data.currencies, data.asset_classes),
        raw=raw,
        adjusted=adj,
        countries=data.countries,
        currencies=data.currencies,
        asset_classes=data.asset_classes,
    )


@dataclass(frozen=True)
class PSDRepair:
    changed: bool
    frobenius_change: float
    min_eigenvalue: float


def psd_repair(omega: np.ndarray) -> tuple[np.ndarray, PSDRepair]:
    """Clip negative eigenvalues of a symmetric matrix to zero.

    Matrices whose smallest eigenvalue is above ``-1e-10`` come back
    untouched.  Raises ``ValueError`` on a non-symmetric input.
    """
    omega = np.asarray(omega, dtype=float)
    if omega.ndim != 2 or omega.shape[0] != omega.shape[1]:
        raise ValueError("omega must be a square matrix")
    scale = max(1.0, float(np.abs(omega).max(initial=0.0)))
    if np.abs(omega - omega.T).max(initial=0.0) > SYMMETRY_TOL * scale:
        raise ValueError("omega is not symmetric")
    w, V = np.linalg.eigh(omega)
    lam_min = float(w.min()) if w.size else 0.0
    if lam_min >= -PSD_TOL:
        return omega.copy(), PSDRepair(False, 0.0, lam_min)
    repaired = (V * np.clip(w, 0.0, None)) @ V.T
    repaired = 0.5 * (repaired + repaired.T)
    change = float(np.linalg.norm(repaired - omega, "fro"))
    return repaired, PSDRepair(True, change, lam_min)


@dataclass(frozen=True)
class AdjustedMoments:
    """Adjusted expected returns ``r`` and covariance ``omega``.

    Ordering: assets class-major (class i, country j at ``i*C + j``), then one
    currency per country at ``A*C + j``.
    """

    r: np.ndarray
    omega: np.ndarray
    labels: tuple[str, ...]
    countries: tuple[str, ...]
    currencies: tuple[str, ...]
    asset_classes: tuple[str, ...]
    expected_rates: np.ndarray
    repair: PSDRepair = field(default_factory=lambda: PSDRepair(False, 0.0, 0.0))

    def __post_init__(self):
        r = _frozen(self.r)
        om = _frozen(self.omega)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "omega", om)
        object.__setattr__(self, "expected_rates", _frozen(self.expected_rates))
        C, A = len(self.countries), len(self.asset_classes)
        n = C * (A + 1)
        if r.shape != (n,) or om.shape != (n, n):
            raise ValueError(f"moments must have dimension C(A+1) = {n}")
        if len(self.labels) != n:
            raise ValueError("one label per moment entry is required")
        if np.abs(om - om.T).max(initial=0.0) >= SYMMETRY_TOL * max(1.0, np.abs(om).max()):
            raise ValueError("omega is not symmetric")

    @property
    def n_countries(self) -> int:
        return len(self.countries)

    @property
    def n_classes(self) -> int:
        return len(self.asset_classes)

    def index(self, label: str) -> int:
        return self.labels.index(label)

    def to_dict(self) -> dict[str, Any]:
        return {
            "labels": list(self.labels),
            "countries": list(self.countries),
            "currencies": list(self.currencies),
            "asset_classes": list(self.asset_classes),
            "expected_rates": self.expected_rates.tolist(),
            "r": self.r.tolist(),
            "omega": self.omega.tolist(),
            "psd_repair": {
                "changed": self.repair.changed,
                "frobenius_change": self.repair.frobenius_change,
                "min_eigenvalue": self.repair.min_eigenvalue,
            },
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "AdjustedMoments":
        rep = d.get("psd_repair") or {}
        return cls(
            r=np.asarray(d["r"], dtype=float),
            omega=np.asarray(d["omega"], dtype=float),
            labels=tuple(d["labels"]),
            countries=tuple(d["countries"]),
            currencies=tuple(d["currencies"]),
            asset_classes=tuple(d["asset_classes"]),
            expected_rates=np.asarray(d["expected_rates"], dtype=float),
            repair=PSDRepair(
                bool(rep.get("changed", False)),
                float(rep.get("frobenius_change", 0.0)),
                float(rep.get("min_eigenvalue", 0.0)),
            ),
        )


def estimate_moments(adjusted: AdjustedSeries, expected_rates: Sequence[float]) -> AdjustedMoments:
    """Historical-mean returns shifted by expected rates; sample covariance.

    Asset entries are ``mean(raw asset) - i_j`` and currency entries
    ``mean(raw currency) + i_j``.  The covariance (n-1 divisor) is taken over
    the adjusted series, then PSD-repaired.
    """
    rates = np.asarray(expected_rates, dtype=float)
    C, A = len(adjusted.countries), len(adjusted.asset_classes)
    if rates.shape != (C,):
        raise ValueError(f"expected {C} rates, got {rates.shape}")
    T = adjusted.adjusted.shape[0]
    if T < MIN_OBSERVATIONS:
        raise InsufficientDataError(
            f"need at least {MIN_OBSERVATIONS} observations, have {T}"
        )
    shift = np.concatenate([-np.tile(rates, A), rates])
    r = adjusted.raw.mean(axis=0) + shift
    dev = adjusted.adjusted - adjusted.adjusted.mean(axis=0)
    omega = dev.T @ dev / (T - 1)
    omega = 0.5 * (omega + omega.T)
    omega, repair = psd_repair(omega)
    return AdjustedMoments(
        r=r,
        omega=omega,
        labels=adjusted.labels,
        countries=adjusted.countries,
        currencies=adjusted.currencies,
        asset_classes=adjusted.asset_classes,
        expected_rates=rates,
        repair=repair,
    )


def moments_from_dataset(data: MarketDataSet) -> AdjustedMoments:
    return estimate_moments(adjust_series(data), data.expected_rates)
