import numpy as np
import pytest

from asos.errors import ContractError, LoadError
from asos.icofm import data
from asos.icofm.agents import (AgentConfig, RewardWeights, decode_enterprise_action,
                               enterprise_obs, expert_enterprise, recompute_reward,
                               region_reward)
from asos.icofm.book import OrderType, Side
from asos.icofm.interventionist import OWNER as IV
from asos.icofm.scenario import IcofmConfig, build_scenario, shock_fixture
from asos.icofm.simulation import (MarketSimulation, close_market_ops, factor_mask_op,
                                   interventionist_ops, read_days, restrict_order_type_ops,
                                   simulate)


# -- data files ---------------------------------------------------------------------

def test_factor_round_trip(tmp_path):
    frame = data.synthetic_factors(64, per_category=3, seed=4)
    data.write_factors(tmp_path / "f.csv", frame)
    back = data.load_factors(tmp_path / "f.csv")
    assert len(back) == 64 and back.names == frame.names and back.categories == frame.categories
    np.testing.assert_array_equal(back.values, frame.values)


def test_factor_gap_names_the_row(tmp_path):
    frame = data.synthetic_factors(20, per_category=1, seed=0)
    data.write_factors(tmp_path / "f.csv", frame)
    lines = (tmp_path / "f.csv").read_text().splitlines()
    # drop quarter 12 (5 factors per quarter, header on line 1)
    kept = [l for l in lines if not l.startswith("12,")]
    (tmp_path / "g.csv").write_text("\n".join(kept) + "\n")
    with pytest.raises(LoadError) as exc:
        data.load_factors(tmp_path / "g.csv")
    assert exc.value.row == 2 + 12 * 5


@pytest.mark.parametrize("body,row", [
    ("quarter,category,name,value\n0,supply,a,x\n", 2),
    ("quarter,category,name,value\n0,supply,a,1\n0,supply,a,2\n", 3),
    ("quarter,category,name,value\n0,supply,a,1\n1,supply,b,2\n", 2),
    ("quarter,category,name,value\n0,supply,a,1,9\n", 2),
    ("q,category,name,value\n", 1),
])
def test_factor_load_errors(tmp_path, body, row):
    (tmp_path / "f.csv").write_text(body)
    with pytest.raises(LoadError) as exc:
        data.load_factors(tmp_path / "f.csv")
    assert exc.value.row == row


def test_price_round_trip_and_errors(tmp_path):
    data.write_prices(tmp_path / "p.csv", [3, 4, 5], [60.5, 61.25, 59.0])
    q, p = data.load_prices(tmp_path / "p.csv")
    assert q == [3, 4, 5] and p.tolist() == [60.5, 61.25, 59.0]
    (tmp_path / "bad.csv").write_text("quarter,price\n0,1.0\n2,1.0\n")
    with pytest.raises(LoadError):
        data.load_prices(tmp_path / "bad.csv")
    (tmp_path / "neg.csv").write_text("quarter,price\n0,-1.0\n")
    with pytest.raises(LoadError):
        data.load_prices(tmp_path / "neg.csv")


# -- agents ---------------------------------------------------------------------------

def consumer_obs(task=8.0, signal=0.0):
    return enterprise_obs("consumer", 0, 0, task, 6000, 6000, 6000, 5990, 6010, 0.0, 0.5, 1.0,
                          signal, 20)


def test_consumer_with_demand_bids():
    u = expert_enterprise(consumer_obs())
    o = decode_enterprise_action(u, "c0", 6000, False, 0)
    assert o.side == Side.BID and o.order_type == OrderType.LMT and o.quantity == 8
    assert o.price >= 6000


def test_idle_actions_emit_nothing():
    assert decode_enterprise_action([0.0, 0, 1, 0], "x", 6000, False, 0) is None
    assert decode_enterprise_action([1.0, 0, 0.0, 0], "x", 6000, False, 0) is None
    assert expert_enterprise(consumer_obs(task=0.0)).tolist() == [0.0] * 4


def test_market_orders_only_outside_the_auction():
    u = [1.0, 0.0, 0.5, 1.0]
    assert decode_enterprise_action(u, "x", 6000, False, 0).order_type == OrderType.MKT
    assert decode_enterprise_action(u, "x", 6000, True, 0).order_type == OrderType.LMT


def test_region_reward_falls_with_fluctuation():
    a, _ = region_reward(0.3, 0.01, 0.01, 100.0, 80.0, 1000.0)
    b, _ = region_reward(0.3, 0.01, -0.05, 100.0, 80.0, 1000.0)
    assert b < a


def test_reward_recomputes_from_parts():
    w = RewardWeights(share=0.7, fluctuation=3.0)
    total, parts = region_reward(0.2, -0.01, 0.02, 50.0, 70.0, 900.0, w)
    assert abs(recompute_reward(parts, w) - total) <= 1e-12


# -- scenario and simulation ------------------------------------------------------------

def small_cfg(**kw):
    base = dict(producers=2, consumers=2, speculators=1, n_regions=2, factors_per_category=2)
    base.update(kw)
    return IcofmConfig.from_dict(base)


def test_config_contracts():
    with pytest.raises(ContractError):
        IcofmConfig.from_dict({"nope": 1})
    with pytest.raises(ContractError):
        IcofmConfig(lower_ratio=1.2)
    assert IcofmConfig.from_dict(IcofmConfig().to_dict()) == IcofmConfig()


def test_simulation_is_deterministic():
    sc = build_scenario(small_cfg())
    a = simulate(sc, 8, seed=3)
    b = simulate(sc, 8, seed=3)
    assert a.days == b.days and a.trade_log == b.trade_log
    assert a.reward_log == b.reward_log
    c = simulate(sc, 8, seed=4)
    assert c.trade_log != a.trade_log


def test_market_trades_and_rewards_audit():
    res = simulate(build_scenario(small_cfg()), 10, seed=0)
    assert sum(d.trades for d in res.days) > 0
    assert res.faults == []
    w = RewardWeights()
    for *_, total, parts in res.reward_log:
        assert abs(recompute_reward(parts, w) - total) <= 1e-9


def test_round_audits_hold():
    failures = []

    def audit(sim, day, r):
        ex = sim.env.exchange
        if ex.net_position() != 0:
            failures.append((day, r, "net"))
        if ex.book.crossed() and ex.market.phase != 0:
            failures.append((day, r, "crossed"))
        if any(a.inventory < 0 for a in ex.accounts.values()):
            failures.append((day, r, "inventory"))

    sim = MarketSimulation(build_scenario(small_cfg(settle_cycle=4)), seed=1, audit=audit)
    sim.run(12)
    assert failures == []
    assert len(sim.env.exchange.deliveries) == 3


def test_postings_are_zero_sum():
    sim = MarketSimulation(build_scenario(small_cfg()), seed=2)
    sim.run(10)
    for _, posts in sim.env.exchange.postings:
        assert sum(p.amount for p in posts) == 0


def test_policy_fault_skips_agent():
    def bad(obs):
        raise RuntimeError("boom")

    res = simulate(build_scenario(small_cfg()), 2, seed=0, policies={"speculator": bad})
    assert res.faults and all(f[2].startswith("speculator") for f in res.faults)


def test_days_csv_round_trip(tmp_path):
    res = simulate(build_scenario(small_cfg()), 5, seed=0)
    res.write_days(tmp_path / "d.csv")
    assert read_days(tmp_path / "d.csv") == res.days


def test_trades_csv_round_trip(tmp_path):
    res = simulate(build_scenario(small_cfg()), 3, seed=0)
    data.write_trades(tmp_path / "t.csv", res.trade_log)
    back = data.read_trades(tmp_path / "t.csv")
    assert [(r["day"], r["quantity"], r["buyer"]) for r in back] == \
        [(d, t.quantity, t.buyer) for d, t in res.trade_log]
    assert [r["price"] for r in back] == pytest.approx(list(res.trade_prices()))


def test_factor_mask_changes_prices():
    sc = build_scenario(small_cfg())
    n = len(IcofmConfig.from_dict(sc.config).factor_names())
    full = simulate(sc, 10, seed=0, ops=[factor_mask_op(sc, [1] * n)])
    base = simulate(sc, 10, seed=0)
    assert full.days == base.days
    none = simulate(sc, 10, seed=0, ops=[factor_mask_op(sc, [0] * n)])
    assert none.days != base.days


# -- stabilization on the shock fixture ----------------------------------------------------

@pytest.mark.parametrize("seed", range(3))
def test_shock_fixture_breaches_without_stabilization(seed):
    sc = build_scenario(shock_fixture(seed))
    assert simulate(sc, 5).breaches() > 0


@pytest.mark.parametrize("seed", range(3))
def test_close_market_reduces_breaches(seed):
    sc = build_scenario(shock_fixture(seed))
    base = simulate(sc, 5)
    closed = simulate(sc, 5, ops=close_market_ops(sc))
    assert closed.breaches() < base.breaches()


@pytest.mark.parametrize("seed", range(3))
def test_interventionist_keeps_prices_inside(seed):
    cfg = shock_fixture(seed)
    sc = build_scenario(cfg)
    base = simulate(sc, 6)
    iv = simulate(sc, 6, ops=interventionist_ops(sc))
    assert iv.breaches() < base.breaches()
    assert iv.breaches() == 0
    assert iv.iv_position == 0


def test_restrict_order_type_holds_in_continuous_rounds():
    sc = build_scenario(small_cfg())
    seen = []

    def audit(sim, day, r):
        m = sim.env.exchange.market
        if m.phase == 1:
            seen.append(m.mkt_only)

    sim = MarketSimulation(sc, seed=0, ops=restrict_order_type_ops(sc), audit=audit)
    sim.run(3)
    assert seen and all(seen)
    assert IV not in sim.env.exchange.accounts
    plain = MarketSimulation(sc, seed=0, audit=audit)
    seen.clear()
    plain.run(3)
    assert seen and not any(seen)
