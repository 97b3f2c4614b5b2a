import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fxoverlay.fixtures import load_fixture_moments, load_fixture_spreads
from fxoverlay.overlay import build_combinatorics, represent_overlay
from fxoverlay.problem import (
    ProblemSpec,
    StaticInfeasibility,
    apply_policy,
    assemble,
    build,
    build_two_stage,
    check_solution,
    decode,
)
from fxoverlay.solver import solve_miqp

MOM = load_fixture_moments()
BETA = load_fixture_spreads()


def spec(**kw):
    kw.setdefault("beta", BETA)
    return ProblemSpec(4, **kw)


def feasible_point(qp, rng):
    """Portfolio built from economics, encoded into the solver's vector."""
    L, s = qp.layout, qp.spec
    struct = build_combinatorics(L.n_countries)
    v = rng.uniform(-0.2, 0.2, L.n_countries)
    v -= v.mean()
    w = rng.dirichlet(np.ones(L.n_assets))
    while True:
        q = represent_overlay(v, struct)
        cash = s.M * np.abs(q).sum()
        a = w * (1 - cash)
        c = a.reshape(L.n_classes, -1).sum(axis=0) + v
        c[0] += cash
        if c.min() >= 0:
            break
        v = 0.5 * v  # keep currency exposures non-negative
    z = np.zeros(L.n_vars)
    z[L.a] = a
    z[L.cash] = cash
    z[L.qp] = np.maximum(q, 0)
    z[L.qm] = np.maximum(-q, 0)
    z[L.t] = np.abs(v)
    z[L.b] = (q != 0).astype(float)
    z[L.s] = (q > 0).astype(float)
    if L.n_directions:
        z[L.d] = (v > 0).astype(float)
    return z


def test_layout_sizes():
    qp = build(MOM, spec())
    L = qp.layout
    assert L.n_modeled == 14  # 8 asset weights + 6 forwards
    assert L.n_bin == 12
    assert L.n_vars == 8 + 1 + 6 + 6 + 4 + 12
    assert qp.binary_index.tolist() == list(range(L.n_cont, L.n_vars))
    assert qp.names[L.cash] == "cash"
    assert qp.names[L.qp.start] == "q+[USDEUR]"


def test_objective_is_exposure_variance():
    qp = build(MOM, spec())
    rng = np.random.default_rng(0)
    z = feasible_point(qp, rng)
    x = qp.P @ z
    assert z @ qp.Q @ z == pytest.approx(x @ MOM.omega @ x, rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([0.0, 0.05, 0.1, 0.5]))
def test_economic_portfolio_satisfies_all_rows(seed, M):
    rng = np.random.default_rng(seed)
    base = assemble(MOM, spec(M=M))
    z = feasible_point(base, rng)
    sol = decode(base, z)
    qp = assemble(MOM, spec(M=M, mu=sol.achieved_return))
    np.testing.assert_allclose(qp.A_eq @ z, qp.b_eq, atol=1e-12)
    assert np.all(qp.A_ineq @ z <= qp.b_ineq + 1e-12)
    assert np.all(z >= qp.lb - 1e-15) and np.all(z <= qp.ub + 1e-15)
    assert check_solution(qp, z) == []
    # decode/encode round trip
    np.testing.assert_allclose(qp.encode(qp.decode(z)), z, atol=1e-15)


def test_decoded_exposures_are_consistent():
    qp = build(MOM, spec())
    z = feasible_point(qp, np.random.default_rng(5))
    sol = qp.decode(z)
    np.testing.assert_allclose(
        sol.currency_exposure,
        sol.asset_exposure + sol.overlay + sol.cash * np.eye(4)[0],
        atol=1e-15,
    )
    assert sol.currency_exposure.sum() == pytest.approx(1.0)
    assert sol.total_overlay == pytest.approx(0.5 * np.abs(sol.overlay).sum())


def test_round_binaries_follow_positions():
    qp = build(MOM, spec())
    z = feasible_point(qp, np.random.default_rng(9))
    z_frac = z.copy()
    z_frac[qp.binary_index] = 0.5
    np.testing.assert_array_equal(qp.round_binaries(z_frac)[:6], z[qp.layout.b])
    held = z[qp.layout.b] > 0.5
    np.testing.assert_array_equal(qp.round_binaries(z_frac)[6:][held], z[qp.layout.s][held])


def test_static_infeasibility():
    with pytest.raises(StaticInfeasibility):
        assemble(MOM, spec(E_u=0.2))
    with pytest.raises(StaticInfeasibility):
        assemble(MOM, spec(E_l=0.3))


@pytest.mark.parametrize("bad", [
    dict(V_u=1.5), dict(G=7), dict(G=-1), dict(M=2.0), dict(policy="half"),
    dict(mode="three_stage"), dict(l=0.5), dict(E_l=0.8, E_u=0.5), dict(beta=-1.0),
])
def test_spec_validation(bad):
    with pytest.raises(ValueError):
        spec(**bad)


def test_spec_defaults_and_json(tmp_path):
    s = spec(mu=0.012, V_u=0.5, G=3)
    assert s.M == 0.10 and s.alpha == 1e-6 and s.policy == "unrestricted"
    assert ProblemSpec(4).G == 6
    path = tmp_path / "spec.json"
    s.to_json(path)
    back = ProblemSpec.from_json(path)
    assert back.to_dict() == s.to_dict()
    with pytest.raises(ValueError, match="unknown spec keys"):
        ProblemSpec.from_dict({"n_countries": 4, "Vu": 0.5})


def test_moments_dimension_mismatch():
    with pytest.raises(ValueError):
        assemble(MOM, ProblemSpec(3))


@pytest.mark.parametrize("policy,target", [("fully_hedged", 1.0), ("foreign_only", 0.0)])
def test_policy_pins_base_exposure(policy, target):
    qp = build(MOM, spec(mu=0.01, policy=policy))
    res = solve_miqp(qp)
    assert res.ok
    assert res.decoded.currency_exposure[0] == pytest.approx(target, abs=1e-9)
    assert check_solution(qp, res.x) == []


def test_apply_policy_unrestricted_is_identity():
    qp = assemble(MOM, spec())
    assert apply_policy(qp, "unrestricted") is qp
    with pytest.raises(ValueError):
        apply_policy(qp, "partial")


def test_sign_exclusivity_at_optimum():
    res = solve_miqp(build(MOM, spec(mu=0.014)))
    sol = res.decoded
    assert np.all(sol.q_plus * sol.q_minus == 0)
    assert sol.cash == pytest.approx(0.1 * np.abs(sol.q).sum(), abs=1e-10)


def test_two_stage_keeps_asset_direction():
    s = spec(mu=0.012)
    stage1, stage2 = build_two_stage(MOM, s)
    first = solve_miqp(stage1)
    assert first.ok
    assert first.decoded.cash == pytest.approx(0.0, abs=1e-12)
    assert np.all(first.decoded.q == 0)
    second = solve_miqp(stage2(first.x))
    assert second.ok
    a1, a2 = first.decoded.a, second.decoded.a
    np.testing.assert_allclose(a2, a1 * (1 - second.decoded.cash), atol=1e-9)
    unified = solve_miqp(build(MOM, s))
    assert second.objective >= unified.objective - 1e-12


def test_no_wash_trades_equates_traded_and_net_overlay():
    for mu in (0.005, 0.01, 0.016):
        qp = build(MOM, spec(mu=mu, no_wash_trades=True))
        assert qp.layout.n_bin == 16
        res = solve_miqp(qp)
        assert res.ok
        sol = res.decoded
        assert np.abs(sol.q).sum() == pytest.approx(sol.total_overlay, abs=1e-9)
        assert check_solution(qp, res.x) == []


def test_wash_cycle_is_feasible_without_the_flag():
    # a USD->EUR->GBP->USD loop nets to zero overlay but still draws margin cash
    qp = assemble(MOM, spec(V_u=0.0))
    L = qp.layout
    z = np.zeros(L.n_vars)
    q = np.array([0.1, -0.1, 0, 0.1, 0, 0])  # USDEUR +, USDGBP -, EURGBP +
    assert np.allclose(build_combinatorics(4).T.T @ q, 0)
    z[L.qp] = np.maximum(q, 0)
    z[L.qm] = np.maximum(-q, 0)
    z[L.b] = q != 0
    z[L.s] = q > 0
    z[L.cash] = 0.1 * 0.3
    z[L.a] = (1 - z[L.cash]) / 8
    mu = decode(qp, z).achieved_return
    qp = assemble(MOM, spec(V_u=0.0, mu=mu))
    assert check_solution(qp, z) == []
    assert np.all(qp.A_ineq @ z <= qp.b_ineq + 1e-12)
    strict = assemble(MOM, spec(V_u=0.0, mu=mu, no_wash_trades=True))
    zz = np.concatenate([z, np.zeros(4)])
    # no direction assignment admits the loop
    for bits in range(16):
        zz[strict.layout.d] = [(bits >> j) & 1 for j in range(4)]
        assert np.any(strict.A_ineq @ zz > strict.b_ineq + 1e-12)
