import random

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from entplan.demand import linear_price_model
from entplan.planner import (
    MarketBox,
    PlanError,
    PlanVariant,
    RoutingTable,
    WeakPlace,
    longest_operation_time,
    operation_profit,
    optimize_plan,
    plan_feasible,
    weak_place_feasible,
)

from oracles import (
    grid_plan_oracle,
    naive_capacity_check,
    naive_plan_check,
    rowsum_bottleneck,
)


# --- operating profit -----------------------------------------------------------

def test_operation_profit_values():
    assert operation_profit([10], [100], [6], 100.0) == 300.0
    assert operation_profit([10, 5], [0, 0], [6, 1], 75.0) == -75.0
    with pytest.raises(PlanError):
        operation_profit([1, 2], [1], [1, 1], 0.0)


def test_operation_profit_random_cases_match_recomputation():
    rng = random.Random(42)
    for _ in range(50):
        n = rng.randint(1, 5)
        p = [rng.uniform(1, 50) for _ in range(n)]
        v = [rng.uniform(0, 200) for _ in range(n)]
        a = [rng.uniform(0, 20) for _ in range(n)]
        a0 = rng.uniform(0, 500)
        income = 0.0
        for i in range(n):
            income += p[i] * v[i]
        cost = 0.0
        for i in range(n):
            cost += a[i] * v[i]
        assert operation_profit(p, v, a, a0) == income - cost - a0


def test_operation_profit_cost_by_production():
    assert operation_profit([10], [100], [6], 0.0,
                            production=[40], cost_by_production=True) == 760.0


@given(st.floats(0, 1000), st.floats(0, 500))
def test_indirect_cost_is_exactly_linear(a0, delta):
    base = operation_profit([10.0], [32.0], [4.0], a0)
    more = operation_profit([10.0], [32.0], [4.0], a0 + delta)
    assert base - more == pytest.approx(delta, abs=1e-9)


# --- bottleneck operations --------------------------------------------------------

def test_longest_operation_examples():
    assert longest_operation_time([[1, 2], [3, 1]]) == (4.0, 2)
    assert longest_operation_time([[5]]) == (5.0, 1)
    assert longest_operation_time([[2, 2], [1, 3]]) == (4.0, 1)  # tie keeps first
    with pytest.raises(PlanError):
        longest_operation_time([])


def test_longest_operation_random_matches_bruteforce():
    rng = random.Random(1)
    for _ in range(100):
        m = [[rng.uniform(0, 9) for _ in range(5)] for _ in range(5)]
        assert longest_operation_time(m) == rowsum_bottleneck(m)


def test_longest_operation_permutation_invariance():
    rng = random.Random(2)
    m = [[rng.uniform(0, 9) for _ in range(4)] for _ in range(4)]
    tau, idx = longest_operation_time(m)
    cols = list(range(4))
    rng.shuffle(cols)
    permuted_cols = [[row[c] for c in cols] for row in m]
    assert longest_operation_time(permuted_cols)[0] == pytest.approx(tau)
    rows = list(range(4))
    rng.shuffle(rows)
    permuted_rows = [m[r] for r in rows]
    tau2, idx2 = longest_operation_time(permuted_rows)
    assert tau2 == pytest.approx(tau)
    assert rows[idx2 - 1] == idx - 1 or m[rows[idx2 - 1]] == m[idx - 1]


def test_weak_place_examples():
    assert weak_place_feasible([2, 3], [10, 10], 50.0) == (True, 0.0)
    assert weak_place_feasible([2, 3], [0, 0], 0.0) == (True, 0.0)
    ok, slack = weak_place_feasible([2, 3], [10, 11], 50.0)
    assert not ok and slack == -3.0
    with pytest.raises(PlanError):
        weak_place_feasible([1], [1, 2], 5.0)


def test_weak_place_random_matches_naive():
    rng = random.Random(3)
    for _ in range(100):
        n = rng.randint(1, 6)
        taus = [rng.uniform(0, 5) for _ in range(n)]
        ys = [rng.uniform(0, 40) for _ in range(n)]
        T = rng.uniform(0, 400)
        assert weak_place_feasible(taus, ys, T) == naive_capacity_check(taus, ys, T)


@given(st.floats(0.1, 10))
def test_weak_place_scale_invariance(factor):
    taus, ys, T = [2.0, 3.0], [5.0, 7.0], 40.0
    base_ok, _ = weak_place_feasible(taus, ys, T)
    scaled_ok, _ = weak_place_feasible([t * factor for t in taus], ys, T * factor)
    assert base_ok == scaled_ok


# --- plan feasibility ---------------------------------------------------------------

def make_plan(prices, volumes, stocks=None, costs=None, a0=0.0):
    n = len(prices)
    stocks = stocks or [0.0] * n
    costs = costs or [1.0] * n
    production = [max(0.0, v - z) for v, z in zip(volumes, stocks)]
    profit = operation_profit(prices, volumes, costs, a0)
    return PlanVariant(goods=tuple(f"g{i}" for i in range(n)),
                       prices=tuple(prices), volumes=tuple(volumes),
                       production=tuple(production), stocks=tuple(stocks),
                       direct_costs=tuple(costs), indirect_cost=a0, profit=profit)


BOX2 = MarketBox(price_bounds=((2.0, 10.0), (1.0, 8.0)),
                 volume_bounds=((0.0, 100.0), (0.0, 50.0)))


def test_plan_feasible_interior():
    plan = make_plan([5.0, 4.0], [20.0, 10.0], stocks=[20.0, 10.0])
    ok, violation = plan_feasible(plan, BOX2)
    assert ok and violation is None


def test_plan_feasible_reports_first_price_bound():
    plan = make_plan([1.0, 4.0], [20.0, 10.0])
    ok, violation = plan_feasible(plan, BOX2)
    assert not ok
    assert violation.kind == "price_bound" and violation.index == 1
    assert "price bound 1" in str(violation)


def test_plan_feasible_capacity_group():
    routing = RoutingTable(durations={"g0": ((2.0, 1.0), (0.5, 0.5))},
                           weak_places=(WeakPlace(goods=("g0",), time=10.0),))
    plan = make_plan([5.0, 4.0], [20.0, 10.0])
    ok, violation = plan_feasible(plan, BOX2, routing)
    assert not ok and violation.kind == "capacity"


def test_overlapping_weak_places_rejected():
    with pytest.raises(PlanError):
        RoutingTable(durations={"a": ((1.0,),), "b": ((1.0,),)},
                     weak_places=(WeakPlace(goods=("a", "b"), time=5.0),
                                  WeakPlace(goods=("b",), time=5.0)))


def test_plan_feasible_random_matches_naive():
    rng = random.Random(4)
    routing = RoutingTable(durations={"g0": ((1.5,),), "g1": ((2.5,),)},
                           weak_places=(WeakPlace(goods=("g0", "g1"), time=120.0),))
    taus = [1.5, 2.5]
    for _ in range(200):
        prices = [rng.uniform(0, 12), rng.uniform(0, 10)]
        volumes = [rng.uniform(0, 120), rng.uniform(0, 60)]
        stocks = [rng.uniform(0, 30), rng.uniform(0, 30)]
        plan = make_plan(prices, volumes, stocks=stocks)
        ok, _ = plan_feasible(plan, BOX2, routing)
        want = naive_plan_check(prices, volumes, plan.production,
                                BOX2.price_bounds, BOX2.volume_bounds,
                                [((0, 1), taus, 120.0)])
        assert ok == want


def test_plan_variant_production_invariant():
    with pytest.raises(PlanError):
        PlanVariant(goods=("g",), prices=(5.0,), volumes=(10.0,),
                    production=(10.0,), stocks=(4.0,), direct_costs=(1.0,),
                    indirect_cost=0.0, profit=0.0)


# --- optimizer -------------------------------------------------------------------

def single_goods_setup():
    model = linear_price_model(100.0, -5.0, (2.0, 18.0))
    box = MarketBox(price_bounds=((2.0, 18.0),), volume_bounds=((0.0, 1000.0),))
    return model, box


def test_optimizer_analytic_instance():
    model, box = single_goods_setup()
    report = optimize_plan(["G"], {"G": model}, {"G": 2.0}, 0.0, box,
                           budget=100_000, seed=7)
    assert report.best is not None
    assert report.best.profit >= 0.99 * 405.0
    assert abs(report.best.prices[0] - 11.0) <= 0.2
    assert report.feasible_fraction > 0.95
    ok, _ = plan_feasible(report.best, box)
    assert ok


def test_optimizer_capacity_bound():
    model, box = single_goods_setup()
    routing = RoutingTable(durations={"G": ((1.0,),)},
                           weak_places=(WeakPlace(goods=("G",), time=30.0),))
    report = optimize_plan(["G"], {"G": model}, {"G": 2.0}, 0.0, box,
                           routing=routing, budget=100_000, seed=7)
    oracle_profit, _ = grid_plan_oracle(
        [lambda p: 100.0 - 5.0 * p], [2.0], 0.0, [(2.0, 18.0)], [(0.0, 1000.0)],
        [0.0], [((0,), [1.0], 30.0)])
    assert report.best.production[0] <= 30.0 + 1e-9
    assert report.best.profit >= 0.99 * oracle_profit


def test_optimizer_empty_feasible_region():
    model, _ = single_goods_setup()
    box = MarketBox(price_bounds=((2.0, 18.0),), volume_bounds=((5000.0, 6000.0),))
    report = optimize_plan(["G"], {"G": model}, {"G": 2.0}, 0.0, box,
                           budget=2000, seed=1)
    assert report.best is None
    assert report.feasible_fraction == 0.0


def test_optimizer_determinism_and_trace_monotone():
    model, box = single_goods_setup()
    r1 = optimize_plan(["G"], {"G": model}, {"G": 2.0}, 5.0, box, budget=20_000, seed=3)
    r2 = optimize_plan(["G"], {"G": model}, {"G": 2.0}, 5.0, box, budget=20_000, seed=3)
    assert r1 == r2
    profits = [p for _, p in r1.trace if p is not None]
    assert all(b >= a - 1e-9 for a, b in zip(profits, profits[1:]))


def test_optimizer_budget_prefix_monotone():
    model, box = single_goods_setup()
    small = optimize_plan(["G"], {"G": model}, {"G": 2.0}, 0.0, box, budget=4000, seed=11)
    large = optimize_plan(["G"], {"G": model}, {"G": 2.0}, 0.0, box, budget=40_000, seed=11)
    assert large.best.profit >= small.best.profit - 1e-9
    # the shared prefix of the trace is identical
    assert large.trace[:3] == small.trace[:3]


def test_optimizer_result_passes_feasibility_and_production_rule():
    rng = random.Random(6)
    for _ in range(5):
        intercept = rng.uniform(80, 150)
        slope = -rng.uniform(2, 6)
        cost = rng.uniform(0.5, 4.0)
        stock = float(rng.randint(0, 20))
        model = linear_price_model(intercept, slope, (cost, 0.9 * intercept / -slope))
        box = MarketBox(price_bounds=(model.box[0],), volume_bounds=((0.0, intercept),))
        report = optimize_plan(["G"], {"G": model}, {"G": cost}, 1.0, box,
                               stocks={"G": stock}, budget=5000, seed=rng.randint(0, 99))
        plan = report.best
        assert plan is not None
        ok, violation = plan_feasible(plan, box)
        assert ok, violation
        assert plan.production[0] == max(0.0, plan.volumes[0] - stock)


def test_optimizer_requires_model_and_budget():
    model, box = single_goods_setup()
    with pytest.raises(PlanError):
        optimize_plan(["G"], {}, {"G": 1.0}, 0.0, box, budget=10, seed=0)
    with pytest.raises(PlanError):
        optimize_plan(["G"], {"G": model}, {"G": 1.0}, 0.0, box, budget=0, seed=0)


def test_optimizer_rejects_unreliable_model_unless_overridden():
    from entplan.demand import fit_demand_curve

    weak = fit_demand_curve([(5.0, 100.0), (10.0, 50.0), (20.0, 25.0)], "log-linear")
    box = MarketBox(price_bounds=((5.0, 20.0),), volume_bounds=((0.0, 500.0),))
    with pytest.raises(PlanError):
        optimize_plan(["G"], {"G": weak}, {"G": 1.0}, 0.0, box, budget=100, seed=0)
    report = optimize_plan(["G"], {"G": weak}, {"G": 1.0}, 0.0, box, budget=100,
                           seed=0, allow_unreliable=True)
    assert report.best is not None
