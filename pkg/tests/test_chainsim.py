import itertools
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from entplan.chainsim import (
    Agreement,
    ChainConfig,
    ChainError,
    EchelonState,
    Order,
    ProducerConfig,
    PurchaseContext,
    RetailerConfig,
    WholesalerConfig,
    industrial_sales_forecast,
    producer_step,
    purchase_decision,
    retailer_profit,
    retailer_step,
    simulate_chain,
    wholesaler_profit,
    wholesaler_step,
)
from entplan.demand import linear_price_model

from oracles import purchase_flowchart


# --- purchase algorithm -------------------------------------------------------

def test_favorable_arrangement_path():
    out = purchase_decision(PurchaseContext(
        meets_demands=True, has_arrangement=True, delivery_quality_problems=True,
        reliable_client=True, agrees_price=True))
    assert out.concluded
    assert out.trace == (1, 2, 4, 5, 6, 8)


def test_unfit_goods_without_adaptation():
    out = purchase_decision(PurchaseContext(meets_demands=False, can_adapt=False))
    assert not out.concluded
    assert out.trace == (1, 3, 9)


def test_price_reduction_then_agreement():
    out = purchase_decision(PurchaseContext(
        meets_demands=True, has_arrangement=False, reliable_client=True,
        agrees_price=(False, True), seller_lowers_price=True, max_rounds=1))
    assert out.concluded
    assert out.trace[-4:] == (6, 7, 6, 8)


def test_reduction_denied_without_rounds():
    out = purchase_decision(PurchaseContext(
        meets_demands=True, reliable_client=True,
        agrees_price=(False, True), seller_lowers_price=True, max_rounds=0))
    assert not out.concluded
    assert out.trace[-3:] == (6, 7, 9)


def test_stubborn_buyer_exhausts_rounds():
    out = purchase_decision(PurchaseContext(
        meets_demands=True, reliable_client=True,
        agrees_price=False, seller_lowers_price=True, max_rounds=2))
    assert not out.concluded
    assert out.trace == (1, 2, 5, 6, 7, 6, 7, 6, 7, 9)


def test_all_assignments_match_flowchart_oracle():
    for bits in itertools.product((False, True), repeat=7):
        meets, arr, adapt, probs, rel, agrees, lowers = bits
        for rounds in (0, 1, 2):
            ctx = PurchaseContext(meets, arr, adapt, probs, rel, agrees,
                                  lowers, max_rounds=rounds)
            got = purchase_decision(ctx)
            want_ok, want_trace = purchase_flowchart(meets, arr, adapt, probs,
                                                     rel, agrees, lowers, rounds)
            assert (got.concluded, got.trace) == (want_ok, want_trace)
            # transitions bounded by 7 + 2 * rounds
            assert len(got.trace) - 1 <= 7 + 2 * rounds


@given(st.booleans(), st.booleans(), st.booleans(), st.booleans(), st.booleans(),
       st.lists(st.booleans(), max_size=4), st.lists(st.booleans(), max_size=4),
       st.integers(0, 5))
def test_purchase_always_terminates(m, a, c, p, r, agrees, lowers, rounds):
    out = purchase_decision(PurchaseContext(m, a, c, p, r, agrees, lowers, rounds))
    assert out.trace[-1] in (8, 9)
    assert len(out.trace) - 1 <= 7 + 2 * rounds


def test_forecast_counts():
    assert industrial_sales_forecast([]).concluded == 0
    favorable = PurchaseContext(True, True, True, True, True, True, True)
    assert industrial_sales_forecast([favorable] * 4).concluded == 4
    mixed = [
        PurchaseContext(True, False, False, False, True, True, False),   # concluded
        PurchaseContext(False, False, False, False, False, False, False),
        PurchaseContext(True, True, False, False, True, True, False),    # fails step 4
        PurchaseContext(True, False, False, False, False, True, False),  # unreliable
        PurchaseContext(True, False, False, False, True, (False, True), True),
    ]
    fc = industrial_sales_forecast(mixed)
    expected = [purchase_flowchart(c.meets_demands, c.has_arrangement, c.can_adapt,
                                   c.delivery_quality_problems, c.reliable_client,
                                   c.agrees_price, c.seller_lowers_price,
                                   c.max_rounds)[0] for c in mixed]
    assert fc.concluded == sum(expected)
    assert [o.concluded for o in fc.outcomes] == expected


# --- profit identities ----------------------------------------------------------

def test_retailer_profit_values():
    assert retailer_profit(10, 5, 6, 8) == 12
    assert retailer_profit(10, 0, 6, 8) == -8
    assert retailer_profit(7, 13, 7, 2.5) == -2.5


def test_wholesaler_profit_values():
    assert wholesaler_profit(6, 5, 4, 3) == 7
    assert wholesaler_profit(6, 0, 4, 3) == -3


@given(st.floats(1, 100), st.integers(0, 50), st.floats(1, 100),
       st.integers(0, 40), st.integers(1, 40))
def test_expense_shift_is_exact_on_quarter_units(p_s, v, p_d, i_s4, delta4):
    # expenses in quarter currency units keep the subtraction exact
    i_s, delta = i_s4 / 4.0, delta4 / 4.0
    low = retailer_profit(p_s, v, p_d, i_s + delta)
    high = retailer_profit(p_s, v, p_d, i_s)
    assert high - low == delta


# --- per-echelon steps ----------------------------------------------------------

MODEL = linear_price_model(100.0, -5.0, (2.0, 18.0))


def test_retailer_step_orders_only_shortfall():
    state = EchelonState("r", "retailer", stocks={"G": 100.0})
    plan = retailer_step(state, {"G": MODEL}, {"G": 2.0})
    assert plan.orders["G"] == 0.0

    state = EchelonState("r", "retailer", stocks={"G": 20.0})
    plan = retailer_step(state, {"G": MODEL}, {"G": 2.0})
    assert plan.orders["G"] == pytest.approx(plan.planned_sales["G"] - 20.0)


def test_retailer_step_grid_optimum():
    # profit (p - 2) * (100 - 5p) peaks at p = 11, volume 45
    state = EchelonState("r", "retailer", stocks={"G": 0.0})
    plan = retailer_step(state, {"G": MODEL}, {"G": 2.0}, grid_step=0.01)
    assert plan.prices["G"] == pytest.approx(11.0, abs=0.01)
    assert plan.planned_sales["G"] == pytest.approx(45.0, abs=0.1)


def test_retailer_step_requires_model_for_stocked_goods():
    state = EchelonState("r", "retailer", stocks={"G": 5.0})
    with pytest.raises(ChainError):
        retailer_step(state, {}, {})


def test_wholesaler_step_agreements_first():
    state = EchelonState("w", "wholesaler", stocks={"G": 50.0},
                         agreements=[Agreement("ret1", "G", 40.0)])
    filled, producer_order = wholesaler_step(state, [Order("ret2", "G", 30.0)])
    assert [(o.counterparty, o.quantity) for o in filled] == [("ret1", 40.0), ("ret2", 10.0)]
    assert producer_order == {"G": 20.0}


def test_wholesaler_step_sufficient_stock():
    state = EchelonState("w", "wholesaler", stocks={"G": 90.0})
    filled, producer_order = wholesaler_step(state, [Order("r", "G", 30.0)])
    assert producer_order == {}
    assert filled[0].quantity == 30.0


def test_wholesaler_step_idle():
    state = EchelonState("w", "wholesaler", stocks={"G": 10.0})
    assert wholesaler_step(state, []) == ([], {})


def test_producer_step():
    state = EchelonState("p", "producer", stocks={"G": 100.0})
    assert producer_step(state, [Order("w", "G", 60.0)]) == {}
    state = EchelonState("p", "producer", stocks={"G": 10.0})
    assert producer_step(state, [Order("w", "G", 60.0)]) == {"G": 50.0}


def test_producer_step_multi_goods_hand_trace():
    state = EchelonState("p", "producer", stocks={"A": 5.0, "B": 40.0},
                         agreements=[Agreement("w2", "A", 10.0)])
    orders = [Order("w1", "A", 20.0), Order("w1", "B", 25.0)]
    made = producer_step(state, orders)
    assert made == {"A": 25.0, "B": 0.0} or made == {"A": 25.0}


# --- whole-chain simulation -----------------------------------------------------

def small_config(wholesaler_stock=10.0):
    return ChainConfig(
        goods=["G"],
        producer=ProducerConfig(name="plant", stocks={"G": 0.0},
                                basic_prices={"G": 4.0}, direct_costs={"G": 2.0},
                                indirect_cost=10.0),
        wholesalers=[WholesalerConfig(
            name="wh", stocks={"G": wholesaler_stock}, prices={"G": 6.0},
            expenses={"G": 5.0},
            retailers=[RetailerConfig(name="rt", stocks={"G": 30.0},
                                      expenses={"G": 3.0}, models={"G": MODEL})],
        )],
    )


def test_three_period_hand_trace():
    """Hand-executed trace: retail optimum p=13 sells from a 30-unit shelf,
    a 10-unit wholesaler runs dry in period 2, and the producer fills the gap."""
    traj = simulate_chain(small_config(wholesaler_stock=10.0), periods=3, seed=1)
    p1, p2, p3 = traj.snapshots

    rt1 = next(e for e in p1.ledger if e.echelon == "rt")
    assert rt1.sell_price == pytest.approx(13.0, abs=0.01)
    assert rt1.volume == pytest.approx(30.0)                  # stock-limited
    assert rt1.profit == pytest.approx(13 * 30 - 6 * 30 - 3, rel=1e-6)
    wh1 = next(e for e in p1.ledger if e.echelon == "wh")
    assert wh1.volume == pytest.approx(5.0, rel=1e-9)         # ships the shortfall
    assert wh1.profit == pytest.approx(wholesaler_profit(6.0, 5.0, 4.0, 5.0), rel=1e-6)
    assert p1.production == {}

    rt2 = next(e for e in p2.ledger if e.echelon == "rt")
    assert rt2.volume == pytest.approx(5.0, rel=1e-9)         # only the arrival
    wh2 = next(e for e in p2.ledger if e.echelon == "wh")
    assert wh2.volume == pytest.approx(5.0, rel=1e-9)         # partial fill from stock 5
    assert p2.production == {"G": pytest.approx(25.0, rel=1e-9)}
    plant2 = next(e for e in p2.ledger if e.echelon == "plant" and e.goods == "G")
    assert plant2.profit == pytest.approx(4 * 25 - 2 * 25, rel=1e-6)

    rt3 = next(e for e in p3.ledger if e.echelon == "rt")
    assert rt3.volume == pytest.approx(5.0, rel=1e-9)         # wholesaler sent 5 in p2
    wh3 = next(e for e in p3.ledger if e.echelon == "wh")
    assert wh3.volume == pytest.approx(25.0, rel=1e-9)
    assert p3.production == {"G": pytest.approx(5.0, rel=1e-9)}


def test_saturated_stocks_mean_no_production():
    config = small_config(wholesaler_stock=500.0)
    config.producer.stocks = {"G": 500.0}
    config.wholesalers[0].retailers[0].stocks = {"G": 500.0}
    traj = simulate_chain(config, periods=1, seed=0)
    assert traj.snapshots[0].production == {}
    assert all(sh.source != "plant" for sh in traj.snapshots[0].shipments)


def check_conservation(traj):
    for snap in traj.snapshots:
        for state in snap.states:
            for goods, flow in state.flows.items():
                inflow = flow.opening + flow.received + flow.produced
                assert flow.sold <= inflow + 1e-9
                assert flow.closing == pytest.approx(inflow - flow.sold, abs=1e-9)
                assert flow.closing >= -1e-9


def check_ledger_identities(traj):
    for snap in traj.snapshots:
        for e in snap.ledger:
            assert e.profit == e.sell_price * e.volume - e.purchase_price * e.volume - e.expenses


def test_conservation_and_ledger_on_hand_scenario():
    traj = simulate_chain(small_config(), periods=6, seed=0)
    check_conservation(traj)
    check_ledger_identities(traj)


def random_config(rng: random.Random) -> ChainConfig:
    goods = [f"G{i}" for i in range(rng.randint(1, 3))]
    def model():
        intercept = rng.uniform(50, 200)
        slope = -rng.uniform(2, 8)
        return linear_price_model(intercept, slope, (1.0, 0.9 * intercept / -slope))
    wholesalers = []
    for w in range(rng.randint(1, 2)):
        retailers = [RetailerConfig(
            name=f"rt{w}{r}",
            stocks={g: float(rng.randint(0, 60)) for g in goods},
            expenses={g: rng.randint(0, 20) / 4.0 for g in goods},
            models={g: model() for g in goods},
            grid_step=0.05,
        ) for r in range(rng.randint(1, 2))]
        agreements = []
        if rng.random() < 0.5:
            agreements.append(Agreement(retailers[0].name, goods[0],
                                        float(rng.randint(1, 20))))
        wholesalers.append(WholesalerConfig(
            name=f"wh{w}",
            stocks={g: float(rng.randint(0, 80)) for g in goods},
            prices={g: rng.uniform(2.0, 6.0) for g in goods},
            expenses={g: rng.randint(0, 12) / 4.0 for g in goods},
            agreements=agreements,
            retailers=retailers,
        ))
    return ChainConfig(
        goods=goods,
        producer=ProducerConfig(
            stocks={g: float(rng.randint(0, 50)) for g in goods},
            basic_prices={g: rng.uniform(1.0, 3.0) for g in goods},
            direct_costs={g: rng.uniform(0.5, 1.5) for g in goods},
            indirect_cost=float(rng.randint(0, 30))),
        wholesalers=wholesalers,
    )


def test_randomized_simulations_respect_conservation():
    rng = random.Random(2024)
    for _ in range(10):
        traj = simulate_chain(random_config(rng), periods=12, seed=5)
        check_conservation(traj)
        check_ledger_identities(traj)


def test_replay_is_identical():
    config = small_config()
    t1 = simulate_chain(config, periods=5, seed=9)
    t2 = simulate_chain(small_config(), periods=5, seed=9)
    assert t1 == t2


def test_orders_zero_when_stock_covers_demand():
    traj = simulate_chain(small_config(wholesaler_stock=400.0), periods=4, seed=0)
    for snap in traj.snapshots:
        assert snap.production == {}


def test_config_validation():
    config = small_config()
    config.wholesalers[0].retailers[0].models = {}
    with pytest.raises(ChainError):
        simulate_chain(config, periods=1, seed=0)
    with pytest.raises(ChainError):
        simulate_chain(small_config(), periods=0, seed=0)
