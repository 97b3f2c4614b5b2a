import json

import numpy as np
import pytest

from fxoverlay.fixtures import load_fixture_moments, load_fixture_spreads
from fxoverlay.frontier import (
    EXPERIMENTS,
    FrontierPoint,
    frontier_csv,
    mu_grid,
    read_frontier_csv,
    relative_volatility_increase,
    run_experiment,
    solve_point,
    sweep,
    write_experiment,
    write_frontier,
)
from fxoverlay.problem import ProblemSpec

MOM = load_fixture_moments()
BASE = ProblemSpec(4, beta=load_fixture_spreads())
COARSE = (0.005, 0.018, 0.002)


@pytest.fixture(scope="module")
def frontier():
    return sweep(MOM, BASE, *COARSE)


def point(mu, vol, status="optimal"):
    return FrontierPoint(mu, vol, status, 0.0, np.zeros(4), {}, 0.0, (), 0.0)


def test_default_grid_has_131_points():
    g = mu_grid(0.005, 0.018, 0.0001)
    assert g.size == 131
    assert g[0] == 0.005 and g[-1] == 0.018


def test_single_point_grid():
    assert mu_grid(0.012, 0.012, 0.0001).tolist() == [0.012]
    pts = sweep(MOM, BASE, 0.012, 0.012, 0.0001)
    assert len(pts) == 1 and pts[0].ok


@pytest.mark.parametrize("lo,hi,step", [(0.02, 0.01, 0.001), (0.01, 0.02, 0.0), (0.01, 0.02, -1)])
def test_bad_grids(lo, hi, step):
    with pytest.raises(ValueError):
        mu_grid(lo, hi, step)


def test_sweep_points(frontier):
    assert [p.mu for p in frontier] == mu_grid(*COARSE).tolist()
    for p in frontier:
        assert p.ok
        assert p.volatility >= 0
        total = p.bond_total + p.equity_total + p.cash
        assert total == pytest.approx(1.0, abs=1e-9)
        assert p.n_active <= 6


def test_volatility_rises_above_minimum_variance(frontier):
    vol = np.array([p.volatility for p in frontier])
    k = int(np.argmin(vol))
    assert np.all(np.diff(vol[k:]) >= -1e-12)


def test_infeasible_points_are_kept():
    pts = sweep(MOM, BASE.replace(policy="fully_hedged"), 0.016, 0.019, 0.001)
    assert [p.status for p in pts][-1] == "infeasible"
    assert len(pts) == 4
    assert np.isnan(pts[-1].volatility)


def test_two_stage_point_not_better_than_unified():
    for mu in (0.008, 0.014):
        uni = solve_point(MOM, BASE.replace(mu=mu))
        two = solve_point(MOM, BASE.replace(mu=mu, mode="two_stage"))
        assert two.volatility >= uni.volatility - 1e-10


def test_relative_increase_arithmetic():
    base = [point(0.01, 0.02), point(0.011, 0.03), point(0.012, 0.04, "infeasible")]
    other = [point(0.01, 0.023), point(0.011, 0.03), point(0.012, 0.05)]
    rel = relative_volatility_increase(base, other)
    assert rel[0] == pytest.approx(15.0)
    assert rel[1] == 0.0
    assert rel[2] is None
    assert relative_volatility_increase(base, base)[:2] == [0.0, 0.0]


def test_relative_increase_grid_mismatch():
    with pytest.raises(ValueError):
        relative_volatility_increase([point(0.01, 0.02)], [point(0.02, 0.02)])


def test_unknown_experiment():
    with pytest.raises(ValueError, match="unknown experiment"):
        run_experiment("liquidity", MOM, BASE)


def test_experiment_grids():
    assert EXPERIMENTS["margin"][1] == (0.0, 0.03, 0.05, 0.07, 0.10, 0.30, 0.50)
    assert EXPERIMENTS["overlay_limit"][1] == (0.0, 0.1, 0.3, 0.5, 1.0)
    assert EXPERIMENTS["cardinality"][1] == tuple(range(7))
    assert EXPERIMENTS["hedging"][2] == "unrestricted"


def test_csv_layout_and_determinism(frontier, tmp_path):
    text = frontier_csv(frontier, MOM.countries, MOM.asset_classes)
    header = text.splitlines()[0].split(",")
    assert header[:8] == ["mu", "volatility", "status", "V", "overlay_US", "overlay_DE",
                          "overlay_UK", "overlay_JP"]
    assert header[8:13] == ["bond_total", "equity_total", "cash", "active_forwards", "cost_paid"]
    # parallel sweep writes the same bytes
    again = sweep(MOM, BASE, *COARSE, jobs=2)
    assert frontier_csv(again, MOM.countries, MOM.asset_classes) == text
    path = write_frontier(tmp_path, frontier, MOM, BASE, COARSE, 1.0)
    rows = read_frontier_csv(path)
    assert len(rows) == len(frontier)
    meta = json.loads((tmp_path / "manifest.json").read_text())
    assert meta["grid"]["points"] == len(frontier)
    assert {"spec_hash", "tolerances", "runtime_seconds", "timestamp", "effective_spec"} <= set(meta)


def test_experiment_tree(tmp_path):
    res = run_experiment("overlay_limit", MOM, BASE, 0.008, 0.012, 0.002)
    assert set(res.frontiers) == {0.0, 0.1, 0.3, 0.5, 1.0}
    assert all(len(f) == 3 for f in res.frontiers.values())
    assert res.relative[1.0] == [0.0, 0.0, 0.0]
    out = write_experiment(tmp_path, res, MOM, (0.008, 0.012, 0.002))
    names = sorted(p.name for p in out.iterdir())
    assert names == ["V_u_0", "V_u_0.1", "V_u_0.3", "V_u_0.5", "V_u_1",
                     "manifest.json", "relative_vs_V_u_1.csv"]
    rel = (out / "relative_vs_V_u_1.csv").read_text().splitlines()
    assert rel[0] == "mu,V_u_0,V_u_0.1,V_u_0.3,V_u_0.5,V_u_1"
    assert len(rel) == 4
