"""Constant-product swap math and the momentum strategy."""

from __future__ import annotations

import json
import random
from fractions import Fraction

import pytest

from mmevlab.amm import (
    BUILDER_BUY_ID,
    BUILDER_SELL_ID,
    AmmPool,
    MempoolTx,
    MomentumConfig,
    SwapRejected,
    TxDirection,
    admits,
    breakeven_bid_premium,
    execute_momentum,
    generate_mempool,
    load_scenario,
    price_impact,
    run_scenario,
    swap_exact_in,
)

F = Fraction


# ---------------------------------------------------------------------------
# swaps


def test_pool_validation():
    with pytest.raises(ValueError):
        AmmPool(0, 10)
    with pytest.raises(ValueError):
        AmmPool(10, 10, fee_bps=10_000)
    assert AmmPool(F(10), 10).exact
    assert not AmmPool(10, 10).exact
    assert AmmPool(300, 100).spot_price_x_per_y() == F(3)


def test_swap_integer_floor_path():
    out, pool = swap_exact_in(AmmPool(1000, 1000, fee_bps=0), TxDirection.BUY, 100)
    assert out == 90  # floor(1000*100/1100) = floor(90.90..)
    assert (pool.reserve_x, pool.reserve_y) == (1100, 910)
    # fee lands in the pool: reserves grow by the full input
    out30, pool30 = swap_exact_in(AmmPool(1000, 1000, fee_bps=30), TxDirection.BUY, 100)
    assert out30 == 90  # floor(90.66..)
    assert (pool30.reserve_x, pool30.reserve_y) == (1100, 910)


def test_swap_exact_fraction_path():
    out, pool = swap_exact_in(AmmPool(F(1000), F(1000), fee_bps=0), TxDirection.BUY, F(100))
    assert out == F(1000, 11)
    assert pool.reserve_y == F(1000) - F(1000, 11)
    # constant product holds exactly with no fee
    assert pool.reserve_x * pool.reserve_y == F(1100) * (F(1000) - F(1000, 11))
    assert F(1100) * (F(1000) - F(1000, 11)) == F(1000) * F(1000)


def test_swap_sell_direction():
    out, pool = swap_exact_in(AmmPool(1000, 1000, fee_bps=0), TxDirection.SELL, 100)
    assert out == 90
    assert (pool.reserve_x, pool.reserve_y) == (910, 1100)


def test_swap_product_never_decreases_on_integer_path():
    rng = random.Random(4)
    for _ in range(300):
        x, y = rng.randrange(10, 10**9), rng.randrange(10, 10**9)
        pool = AmmPool(x, y, fee_bps=rng.choice((0, 5, 30, 100)))
        direction = rng.choice((TxDirection.BUY, TxDirection.SELL))
        try:
            _, after = swap_exact_in(pool, direction, rng.randrange(1, 10**8))
        except SwapRejected:
            continue
        assert after.reserve_x * after.reserve_y >= x * y


def test_swap_rejected_on_zero_output():
    with pytest.raises(SwapRejected):
        swap_exact_in(AmmPool(10**12, 10, fee_bps=0), TxDirection.BUY, 5)
    with pytest.raises(ValueError):
        swap_exact_in(AmmPool(10, 10), TxDirection.BUY, 0)


def test_price_impact_exact_values():
    # exact path: impact of a 10% pool buy is exactly 1/10
    assert price_impact(AmmPool(F(1000), F(1000), fee_bps=0), TxDirection.BUY, F(100)) == F(1, 10)
    # integer path: the floored output makes the realized impact 1/9
    assert price_impact(AmmPool(1000, 1000, fee_bps=0), TxDirection.BUY, 100) == F(1, 9)
    assert price_impact(AmmPool(10**12, 10, fee_bps=0), TxDirection.BUY, 5) is None


def test_admits_boundary_is_inclusive():
    pool = AmmPool(F(1000), F(1000), fee_bps=0)
    assert admits(pool, MempoolTx("t", TxDirection.BUY, F(100), F(1, 10)))
    assert not admits(pool, MempoolTx("t", TxDirection.BUY, F(100), F(1, 10) - F(1, 10**9)))
    assert not admits(AmmPool(10**12, 10, fee_bps=0),
                      MempoolTx("t", TxDirection.BUY, 5, 1.0))


def test_mempool_tx_validation():
    with pytest.raises(ValueError):
        MempoolTx("t", TxDirection.BUY, 0, 0.1)
    with pytest.raises(ValueError):
        MempoolTx("t", TxDirection.BUY, 1, -0.1)
    with pytest.raises(ValueError):
        MempoolTx("t", TxDirection.BUY, 1, 0.1, arrival_slot_offset=-1)


# ---------------------------------------------------------------------------
# momentum


def momentum_fixture():
    """Pool 1000/1000, fee 0, builder buys 100, one organic buy 100."""
    return execute_momentum(
        AmmPool(F(1000), F(1000), fee_bps=0),
        window_k=2,
        mempool=[MempoolTx("organic", TxDirection.BUY, F(100), F(1), 0)],
        builder_capital=F(100),
    )


def test_momentum_three_step_fixture_exact():
    res = momentum_fixture()
    # hand oracle: builder buy takes 1000/11 Y leaving (1100, 10000/11); the
    # organic buy takes 2500/33 Y leaving (1200, 2500/3); selling 1000/11 Y
    # back returns 7200/61 X, so profit is 7200/61 - 100 = 1100/61
    assert res.y_held_peak == F(1000, 11)
    assert res.x_recovered == F(7200, 61)
    assert res.profit == F(1100, 61)
    assert [tx.tx_id for tx in res.slots[0]] == [BUILDER_BUY_ID, "organic"]
    assert [tx.tx_id for tx in res.slots[1]] == [BUILDER_SELL_ID]
    assert res.spot_prices == (F(1), F(36, 25), F(66000, 61) / (F(2500, 3) + F(1000, 11)))
    # with no fee the constant product survives the whole window exactly
    assert res.final_pool.reserve_x * res.final_pool.reserve_y == F(1000) * F(1000)


def test_momentum_round_trip_rounding():
    # empty mempool: buy then immediately sell back
    fee0 = execute_momentum(AmmPool(1000, 1000, fee_bps=0), 2, [], 100)
    assert fee0.profit == -1
    fee30 = execute_momentum(AmmPool(1000, 1000, fee_bps=30), 2, [], 100)
    assert fee30.profit < 0
    exact = execute_momentum(AmmPool(F(1000), F(1000), fee_bps=0), 2, [], F(100))
    assert exact.profit == 0  # no floors, no fee: a wash by algebra


def test_momentum_double_floor_can_lose_two_units():
    # 100**2 mod 991 = 90 < 100, so both floors bite: the documented
    # at-most-one-unit loss is a property of the fixture scale, not of
    # arbitrary reserve/capital pairs
    res = execute_momentum(AmmPool(891, 891, fee_bps=0), 2, [], 100)
    assert res.profit == -2


def test_momentum_withholds_sells_and_rejects_once():
    mempool = [
        MempoolTx("sell-early", TxDirection.SELL, 50, 1.0, 0),
        MempoolTx("buy-tight", TxDirection.BUY, 200, 0.001, 0),   # over tolerance
        MempoolTx("sell-late", TxDirection.SELL, 50, 1.0, 2),
        MempoolTx("buy-ok", TxDirection.BUY, 10, 1.0, 1),
        MempoolTx("after-window", TxDirection.BUY, 10, 1.0, 3),
    ]
    res = execute_momentum(AmmPool(10_000, 10_000, fee_bps=0), 3, mempool, 500)
    assert res.withheld == ("sell-early", "sell-late")
    assert res.rejected == ("buy-tight",)
    executed = res.executed_ids()
    assert "buy-ok" in executed
    assert "after-window" not in executed
    assert "after-window" not in res.withheld + res.rejected
    assert executed[0] == BUILDER_BUY_ID and executed[-1] == BUILDER_SELL_ID


def test_momentum_builder_position_always_closes():
    res = execute_momentum(AmmPool(10**6, 10**6, fee_bps=30), 4, [], 10**4)
    sells = [tx for comp in res.slots for tx in comp if tx.tx_id == BUILDER_SELL_ID]
    assert len(sells) == 1
    assert sells[0].amount_in == res.y_held_peak
    assert res.slots[-1][-1].tx_id == BUILDER_SELL_ID
    assert res.x_recovered == sells[0].amount_out


def test_momentum_gas_cost_reduces_profit():
    plain = execute_momentum(AmmPool(10**6, 10**6, fee_bps=0), 2, [], 10**4)
    taxed = execute_momentum(AmmPool(10**6, 10**6, fee_bps=0), 2, [], 10**4,
                             MomentumConfig(gas_cost_x=7))
    assert taxed.profit == plain.profit - 7


def test_momentum_validation():
    with pytest.raises(ValueError):
        execute_momentum(AmmPool(1000, 1000), 1, [], 100)
    with pytest.raises(ValueError):
        execute_momentum(AmmPool(1000, 1000), 2, [], 0)
    with pytest.raises(ValueError):
        # a 60% pool buy breaches the default 50% injection-impact bound
        execute_momentum(AmmPool(1000, 1000, fee_bps=0), 2, [], 600)
    execute_momentum(AmmPool(1000, 1000, fee_bps=0), 2, [], 600,
                     MomentumConfig(max_injection_impact=2.0))


def test_breakeven_bid_premium():
    res = momentum_fixture()
    rate = 10**18
    baselines = [46_000_000_000_000_000] * 2
    actuals = [46_000_000_000_000_000, 46_920_000_000_000_000]
    extra = actuals[1] - baselines[1]
    assert breakeven_bid_premium(res, baselines, actuals, rate) == int(F(1100, 61) * rate - extra)
    assert breakeven_bid_premium(res, baselines, baselines, rate) == int(F(1100, 61) * rate)
    with pytest.raises(ValueError):
        breakeven_bid_premium(res, baselines, actuals[:1], rate)
    with pytest.raises(ValueError):
        breakeven_bid_premium(res, baselines, actuals, 0)


# ---------------------------------------------------------------------------
# scenarios


def test_generate_mempool_deterministic_and_in_range():
    txs = generate_mempool(4, 9, n_tx=50, amount_min=5, amount_max=50)
    assert txs == generate_mempool(4, 9, n_tx=50, amount_min=5, amount_max=50)
    assert len(txs) == 50
    assert len({t.tx_id for t in txs}) == 50
    for t in txs:
        assert 5 <= t.amount_in <= 50
        assert 0 <= t.arrival_slot_offset < 4
        assert 0.01 <= t.max_price_impact <= 0.5
    sides = {t.direction for t in txs}
    assert sides == {TxDirection.BUY, TxDirection.SELL}


def test_load_scenario_rational_precision():
    doc = {
        "precision": "rational",
        "pool": {"reserve_x": 1000, "reserve_y": 1000, "fee_bps": 0},
        "window_k": 2,
        "builder_capital": "100",
        "mempool": [
            {"tx_id": "organic", "direction": "buy", "amount_in": "100",
             "max_price_impact": 1.0},
        ],
    }
    scenario = load_scenario(json.dumps(doc))
    assert scenario.pool.exact
    assert scenario.builder_capital == F(100)
    result, premium = run_scenario(scenario)
    assert result.profit == F(1100, 61)
    assert premium is None


def test_load_scenario_int_precision_with_bid_context():
    doc = {
        "pool": {"reserve_x": 10_000, "reserve_y": 10_000, "fee_bps": 0},
        "window_k": 2,
        "builder_capital": 1000,
        "baseline_bids_wei": [100, 100],
        "actual_bids_wei": [100, 105],
        "rate_wei_per_x": 50,
    }
    scenario = load_scenario(json.dumps(doc))
    assert not scenario.pool.exact
    result, premium = run_scenario(scenario)
    assert premium == result.profit * 50 - 5


def test_load_scenario_generator_merge():
    doc = {
        "pool": {"reserve_x": 10**6, "reserve_y": 10**6, "fee_bps": 30},
        "window_k": 3,
        "builder_capital": 1000,
        "mempool": [{"direction": "SELL", "amount_in": 5, "max_price_impact": 0.5}],
        "mempool_generator": {"seed": 3, "n_tx": 8},
    }
    scenario = load_scenario(json.dumps(doc))
    assert len(scenario.mempool) == 9
    assert scenario.mempool[1:] == generate_mempool(3, 3, n_tx=8)


def test_load_scenario_errors():
    with pytest.raises(ValueError):
        load_scenario("{bad")
    with pytest.raises(ValueError):
        load_scenario(json.dumps({"pool": {"reserve_x": 1, "reserve_y": 1}}))
    with pytest.raises(ValueError):
        load_scenario(json.dumps({
            "pool": {"reserve_x": 1000, "reserve_y": 1000}, "window_k": 2,
            "builder_capital": 10,
            "mempool": [{"direction": "sideways", "amount_in": 1, "max_price_impact": 1}],
        }))
