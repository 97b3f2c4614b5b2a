"""Synthetic four-country dataset for tests and examples.

The real inputs (government bond, equity index, FX and T-bill series for
US, Germany, UK and Japan, Jan-2000 to Jun-2012) are vendor data and are not
redistributable.  This module synthesises a stand-in with the same shape:

* 150 monthly observations, Jan-2000 to Jun-2012;
* rate-adjusted bond, equity and currency series whose *sample* means and
  volatilities equal the target statistics in ADJ_MEAN_PCT and ADJ_VOL_PCT exactly (the draw is
  whitened and re-coloured to a fixed correlation matrix);
* monthly short-rate series whose final-12-month averages equal the
  target Jun-11 to Jun-12 yields (0.004%, 0.012%, 0.053%, 0.008%).

Raw series are then recovered as ``asset = adjusted + rate`` and
``currency = adjusted - rate``.  Everything is driven by one seed, so the
bundled CSV is reproducible with ``python -m fxoverlay.fixtures <dir>``.
"""
from __future__ import annotations

import csv
import json
import sys
from importlib import resources
from pathlib import Path

import numpy as np

SEED = 20120630
N_MONTHS = 150
START = (2000, 1)

COUNTRIES = [
    {"code": "US", "currency": "USD"},
    {"code": "DE", "currency": "EUR"},
    {"code": "UK", "currency": "GBP"},
    {"code": "JP", "currency": "JPY"},
]
CLASSES = ["bond", "equity"]

# adjusted monthly means / vols in percent, rows bond, equity, currency
ADJ_MEAN_PCT = np.array([
    [0.446, 0.408, 0.457, 0.132],
    [1.426, 0.948, 1.007, 0.752],
    [0.004, 0.902, 0.593, 0.018],
])
ADJ_VOL_PCT = np.array([
    [1.003, 0.833, 0.893, 0.478],
    [4.692, 6.714, 4.297, 5.828],
    [0.017, 3.203, 2.870, 2.567],
])
# Jun-11..Jun-12 average 1-month T-bill yields, percent per month
RATE_PCT = np.array([0.004, 0.012, 0.053, 0.008])

# 1-month forward percent spreads, percent of ask, lexicographic pair order
SPREAD_PCT = {
    "USDEUR": 0.0036,
    "USDGBP": 0.0051,
    "USDJPY": 0.0050,
    "EURGBP": 0.0042,
    "EURJPY": 0.0068,
    "GBPJPY": 0.0122,
}

# order: bond US DE UK JP, equity US DE UK JP, ccy EUR GBP JPY
_CORR = np.array([
    [1.00, 0.60, 0.60, 0.30, -0.20, -0.10, -0.10, -0.10, 0.05, 0.05, 0.10],
    [0.60, 1.00, 0.65, 0.30, -0.10, -0.20, -0.10, -0.10, 0.15, 0.05, 0.05],
    [0.60, 0.65, 1.00, 0.25, -0.10, -0.10, -0.20, -0.10, 0.05, 0.15, 0.05],
    [0.30, 0.30, 0.25, 1.00, -0.10, -0.10, -0.10, -0.20, 0.05, 0.05, 0.10],
    [-0.20, -0.10, -0.10, -0.10, 1.00, 0.80, 0.85, 0.60, 0.20, 0.20, -0.30],
    [-0.10, -0.20, -0.10, -0.10, 0.80, 1.00, 0.80, 0.55, 0.10, 0.15, -0.30],
    [-0.10, -0.10, -0.20, -0.10, 0.85, 0.80, 1.00, 0.55, 0.15, 0.10, -0.30],
    [-0.10, -0.10, -0.10, -0.20, 0.60, 0.55, 0.55, 1.00, 0.05, 0.05, -0.20],
    [0.05, 0.15, 0.05, 0.05, 0.20, 0.10, 0.15, 0.05, 1.00, 0.65, 0.30],
    [0.05, 0.05, 0.15, 0.05, 0.20, 0.15, 0.10, 0.05, 0.65, 1.00, 0.20],
    [0.10, 0.05, 0.05, 0.10, -0.30, -0.30, -0.30, -0.20, 0.30, 0.20, 1.00],
])


def months(n: int = N_MONTHS, start: tuple[int, int] = START) -> list[str]:
    y, m = start
    out = []
    for _ in range(n):
        out.append(f"{y:04d}-{m:02d}")
        m += 1
        if m > 12:
            y, m = y + 1, 1
    return out


def _exact_moments(z: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    """Affine map of ``z`` whose sample mean/covariance equal the targets."""
    z = z - z.mean(axis=0)
    S = z.T @ z / (z.shape[0] - 1)
    white = np.linalg.solve(np.linalg.cholesky(S), z.T).T
    return white @ np.linalg.cholesky(cov).T + mean


def _rate_paths(rng: np.random.Generator, n: int) -> np.ndarray:
    t = np.arange(n)
    decay = 1.0 / (1.0 + np.exp((t - 96.0) / 6.0))
    target = RATE_PCT / 100.0
    level = np.array([0.00040, 0.00030, 0.00045, 0.00005])
    paths = np.empty((n, target.size))
    for j in range(target.size):
        noise = np.zeros(n)
        e = rng.normal(scale=0.15 * level[j], size=n)
        for k in range(1, n):
            noise[k] = 0.8 * noise[k - 1] + e[k]
        p = target[j] + level[j] * decay + noise
        p += target[j] - p[-12:].mean()
        paths[:, j] = p
    return paths


def generate(seed: int = SEED, n: int = N_MONTHS) -> tuple[list[str], dict[str, np.ndarray]]:
    """Columns of the synthetic dataset keyed by CSV header name."""
    rng = np.random.default_rng(seed)
    codes = [c["code"] for c in COUNTRIES]
    ccys = [c["currency"] for c in COUNTRIES]
    mean = np.concatenate([ADJ_MEAN_PCT[0], ADJ_MEAN_PCT[1], ADJ_MEAN_PCT[2, 1:]]) / 100.0
    vol = np.concatenate([ADJ_VOL_PCT[0], ADJ_VOL_PCT[1], ADJ_VOL_PCT[2, 1:]]) / 100.0
    cov = _CORR * np.outer(vol, vol)
    adj = _exact_moments(rng.standard_normal((n, mean.size)), mean, cov)
    rates = _rate_paths(rng, n)

    cols: dict[str, np.ndarray] = {}
    for i, cls in enumerate(CLASSES):
        for j, code in enumerate(codes):
            cols[f"asset:{cls}:{code}"] = adj[:, i * 4 + j] + rates[:, j]
    cols[f"ccy:{ccys[0]}"] = np.zeros(n)
    for j in range(1, 4):
        cols[f"ccy:{ccys[j]}"] = adj[:, 8 + j - 1] - rates[:, j]
    for j, code in enumerate(codes):
        cols[f"rate:{code}"] = rates[:, j]
    return months(n), cols


def schema() -> dict:
    return {
        "countries": COUNTRIES,
        "asset_classes": CLASSES,
        "base_country": "US",
        "rate_window": 12,
    }


def write(out_dir: str | Path, seed: int = SEED) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stamps, cols = generate(seed)
    data_path = out / "fixture.csv"
    with open(data_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["month", *cols])
        for k, month in enumerate(stamps):
            w.writerow([month, *(repr(float(v[k])) for v in cols.values())])
    schema_path = out / "fixture.json"
    schema_path.write_text(json.dumps(schema(), indent=2) + "\n")
    spread_path = out / "spreads.csv"
    with open(spread_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["pair", "beta"])
        for pair, pct in SPREAD_PCT.items():
            w.writerow([pair, repr(pct / 100.0)])
    return {"data": data_path, "schema": schema_path, "spreads": spread_path}


def bundled(name: str) -> Path:
    """Path of a bundled file: ``fixture.csv``, ``fixture.json`` or ``spreads.csv``."""
    return Path(str(resources.files("fxoverlay") / "data" / name))


def load_fixture_moments():
    from .market_data import load_dataset, moments_from_dataset

    return moments_from_dataset(load_dataset(bundled("fixture.csv"), bundled("fixture.json")))


def load_fixture_spreads(currencies=("USD", "EUR", "GBP", "JPY")) -> np.ndarray:
    from .overlay import load_spreads

    return load_spreads(bundled("spreads.csv"), currencies)


if __name__ == "__main__":
    target = sys.argv[1] if len(sys.argv) > 1 else str(bundled("."))
    for kind, path in write(target).items():
        print(f"{kind}: {path}")
