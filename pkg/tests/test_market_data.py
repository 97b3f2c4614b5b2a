import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fxoverlay.fixtures import ADJ_MEAN_PCT, ADJ_VOL_PCT, RATE_PCT, bundled, generate, load_fixture_moments
from fxoverlay.market_data import (
    AdjustedMoments,
    AlignmentError,
    InsufficientDataError,
    ParseError,
    SchemaError,
    adjust_series,
    asset_index,
    currency_index,
    estimate_moments,
    load_dataset,
    load_schema,
    moments_from_dataset,
    psd_repair,
)

SCHEMA = {
    "countries": [{"code": "US", "currency": "USD"}, {"code": "UK", "currency": "GBP"}],
    "asset_classes": ["equity"],
    "base_country": "US",
    "rate_window": 2,
}

ROWS = [
    # month, eq US, eq UK, ccy GBP, rate US, rate UK
    ("2001-01", 0.010, 0.020, 0.005, 0.001, 0.003),
    ("2001-02", -0.020, 0.010, -0.010, 0.002, 0.002),
    ("2001-03", 0.030, -0.010, 0.015, 0.001, 0.004),
    ("2001-04", 0.000, 0.040, 0.000, 0.003, 0.002),
]
HEADER = "month,asset:equity:US,asset:equity:UK,ccy:GBP,rate:US,rate:UK"


def write_csv(path, header=HEADER, rows=ROWS):
    lines = [header] + [",".join(str(v) for v in r) for r in rows]
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture
def small(tmp_path):
    return load_dataset(write_csv(tmp_path / "d.csv"), SCHEMA)


def test_index_layout():
    assert asset_index(1, 2, 4) == 6
    assert currency_index(0, 4, 2) == 8
    assert currency_index(3, 4, 2) == 11


def test_load_small_dataset(small):
    assert small.countries == ("US", "UK")
    assert small.currencies == ("USD", "GBP")
    assert small.n_obs == 4
    # base currency column omitted -> zero series
    assert np.all(small.currency(0).values == 0.0)
    # expected rates: mean of the last rate_window=2 months
    assert small.expected_rates == pytest.approx([0.002, 0.003])


def test_base_country_moves_to_front(tmp_path):
    schema = dict(SCHEMA, countries=[{"code": "UK", "currency": "GBP"}, {"code": "US", "currency": "USD"}])
    data = load_dataset(write_csv(tmp_path / "d.csv"), schema)
    assert data.countries == ("US", "UK")


def test_adjusted_series_signs(small):
    adj = adjust_series(small)
    raw = np.array([r[1:] for r in ROWS])
    z_us, z_uk = raw[:, 3], raw[:, 4]
    np.testing.assert_allclose(adj.adjusted[:, 0], raw[:, 0] - z_us)
    np.testing.assert_allclose(adj.adjusted[:, 1], raw[:, 1] - z_uk)
    # base currency adjusted series is the base rate itself
    np.testing.assert_allclose(adj.adjusted[:, 2], z_us)
    np.testing.assert_allclose(adj.adjusted[:, 3], raw[:, 2] + z_uk)
    assert adj.labels == ("asset:equity:US", "asset:equity:UK", "ccy:USD", "ccy:GBP")


def test_moments_against_numpy(small):
    m = moments_from_dataset(small)
    raw = np.array([r[1:] for r in ROWS])
    i_exp = np.array([0.002, 0.003])
    expect_r = np.array([
        raw[:, 0].mean() - i_exp[0],
        raw[:, 1].mean() - i_exp[1],
        0.0 + i_exp[0],
        raw[:, 2].mean() + i_exp[1],
    ])
    np.testing.assert_allclose(m.r, expect_r, atol=1e-15)
    adj = np.column_stack([raw[:, 0] - raw[:, 3], raw[:, 1] - raw[:, 4], raw[:, 3], raw[:, 2] + raw[:, 4]])
    np.testing.assert_allclose(m.omega, np.cov(adj, rowvar=False, ddof=1), atol=1e-15)


def test_rate_override(tmp_path):
    schema = dict(SCHEMA, expected_rates={"UK": 0.01})
    data = load_dataset(write_csv(tmp_path / "d.csv"), schema)
    assert data.expected_rates == pytest.approx([0.002, 0.01])


def test_missing_column_is_named(tmp_path):
    header = "month,asset:equity:US,ccy:GBP,rate:US,rate:UK"
    rows = [(r[0], r[1], r[3], r[4], r[5]) for r in ROWS]
    with pytest.raises(SchemaError, match=r"missing asset series \(equity, UK\)"):
        load_dataset(write_csv(tmp_path / "d.csv", header, rows), SCHEMA)


def test_ragged_row(tmp_path):
    path = write_csv(tmp_path / "d.csv")
    path.write_text(path.read_text() + "2001-05,0.1,0.2\n")
    with pytest.raises(AlignmentError):
        load_dataset(path, SCHEMA)


def test_bad_number_reports_row_and_column(tmp_path):
    rows = list(ROWS)
    rows[2] = ("2001-03", 0.03, "abc", 0.015, 0.001, 0.004)
    with pytest.raises(ParseError) as exc:
        load_dataset(write_csv(tmp_path / "d.csv", rows=rows), SCHEMA)
    assert exc.value.row == 4
    assert exc.value.column == "asset:equity:UK"


def test_months_must_increase(tmp_path):
    rows = [ROWS[1], ROWS[0], ROWS[2]]
    with pytest.raises(AlignmentError):
        load_dataset(write_csv(tmp_path / "d.csv", rows=rows), SCHEMA)


def test_too_few_observations(tmp_path):
    data = load_dataset(write_csv(tmp_path / "d.csv", rows=ROWS[:2]), SCHEMA)
    with pytest.raises(InsufficientDataError):
        moments_from_dataset(data)


def test_schema_errors():
    with pytest.raises(SchemaError):
        load_schema({"asset_classes": ["bond"]})
    with pytest.raises(SchemaError):
        load_schema({"countries": ["US", "US"]})
    with pytest.raises(SchemaError):
        load_schema({"countries": ["US"], "base_country": "JP"})


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        load_dataset("/nonexistent/data.csv", SCHEMA)


def test_moments_round_trip():
    m = load_fixture_moments()
    back = AdjustedMoments.from_dict(json.loads(json.dumps(m.to_dict())))
    np.testing.assert_array_equal(back.r, m.r)
    np.testing.assert_array_equal(back.omega, m.omega)
    assert back.labels == m.labels


# fixture contract ------------------------------------------------------------

def test_fixture_matches_target_adjusted_statistics():
    data = load_dataset(bundled("fixture.csv"), bundled("fixture.json"))
    adj = adjust_series(data).adjusted
    assert adj.shape == (150, 12)
    assert data.months[0] == "2000-01" and data.months[-1] == "2012-06"
    mean = adj.mean(axis=0) * 100
    vol = adj.std(axis=0, ddof=1) * 100
    # 8 assets and the three foreign currencies hit the target values exactly
    np.testing.assert_allclose(mean[:8], ADJ_MEAN_PCT[:2].ravel(), atol=1e-9)
    np.testing.assert_allclose(vol[:8], ADJ_VOL_PCT[:2].ravel(), atol=1e-9)
    np.testing.assert_allclose(mean[9:], ADJ_MEAN_PCT[2, 1:], atol=1e-9)
    np.testing.assert_allclose(vol[9:], ADJ_VOL_PCT[2, 1:], atol=1e-9)
    # expected rates: Jun-11..Jun-12 average
    np.testing.assert_allclose(data.expected_rates * 100, RATE_PCT, atol=1e-12)


def test_fixture_is_reproducible():
    months, cols = generate()
    data = load_dataset(bundled("fixture.csv"), bundled("fixture.json"))
    np.testing.assert_array_equal(data.asset(1, 2).values, cols["asset:equity:UK"])
    assert tuple(months) == data.months


def test_fixture_moments_are_psd():
    m = load_fixture_moments()
    assert not m.repair.changed
    assert np.linalg.eigvalsh(m.omega).min() > -1e-12


# PSD repair ------------------------------------------------------------------

def test_psd_repair_leaves_psd_alone():
    A = np.array([[2.0, 0.5], [0.5, 1.0]])
    out, rep = psd_repair(A)
    np.testing.assert_array_equal(out, A)
    assert not rep.changed


def test_psd_repair_clips_negative_eigenvalue():
    A = np.array([[1.0, 2.0], [2.0, 1.0]])  # eigenvalues 3, -1
    out, rep = psd_repair(A)
    assert rep.changed
    assert rep.min_eigenvalue == pytest.approx(-1.0)
    np.testing.assert_allclose(out, 1.5 * np.ones((2, 2)), atol=1e-12)
    assert rep.frobenius_change == pytest.approx(1.0)


def test_psd_repair_rejects_asymmetric():
    with pytest.raises(ValueError, match="symmetric"):
        psd_repair(np.array([[1.0, 0.0], [1.0, 1.0]]))


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (5, 5), elements=st.floats(-1, 1, allow_nan=False)))
def test_psd_repair_output_is_psd(B):
    S = 0.5 * (B + B.T)
    out, rep = psd_repair(S)
    np.testing.assert_allclose(out, out.T, atol=1e-14)
    assert np.linalg.eigvalsh(out).min() >= -1e-10
    # nearest PSD in Frobenius norm never moves further than the matrix itself
    assert rep.frobenius_change <= np.linalg.norm(S, "fro") + 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_estimate_moments_covariance_is_psd(seed):
    rng = np.random.default_rng(seed)
    data_rows = [
        (f"2001-{k + 1:02d}", *rng.normal(0, 0.02, 3), *np.abs(rng.normal(0.002, 0.001, 2)))
        for k in range(5)
    ]
    from fxoverlay.market_data import MarketDataSet, ReturnSeries

    arr = np.array([r[1:] for r in data_rows])
    months = tuple(r[0] for r in data_rows)
    series = (
        ReturnSeries("asset:equity:US", "asset", 0, arr[:, 0], months[0], months[-1], 0),
        ReturnSeries("asset:equity:UK", "asset", 1, arr[:, 1], months[0], months[-1], 0),
        ReturnSeries("ccy:USD", "currency", 0, np.zeros(5), months[0], months[-1]),
        ReturnSeries("ccy:GBP", "currency", 1, arr[:, 2], months[0], months[-1]),
        ReturnSeries("rate:US", "rate", 0, arr[:, 3], months[0], months[-1]),
        ReturnSeries("rate:UK", "rate", 1, arr[:, 4], months[0], months[-1]),
    )
    data = MarketDataSet(("US", "UK"), ("USD", "GBP"), ("equity",), months, series, arr[-2:, 3:].mean(axis=0))
    m = estimate_moments(adjust_series(data), data.expected_rates)
    assert np.linalg.eigvalsh(m.omega).min() >= -1e-10
