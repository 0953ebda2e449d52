import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from entplan.demand import (
    ComplaintEntry,
    FitError,
    RankDeficientError,
    characteristic_significance,
    complaint_summary,
    consumer_value,
    demand_deltas,
    fit_consumer_value,
    fit_demand_curve,
    fit_demand_from_sales,
    fit_linear_demand,
    linear_price_model,
    model_from_dict,
    model_to_dict,
    predict_volume,
    predict_volume_batch,
    reliability_check,
    survey_observations,
)

from oracles import lstsq_with_stderr, pearson_by_hand


# --- consumer value ---------------------------------------------------------

def test_exact_single_weight():
    m = fit_consumer_value([((1,), 2.0), ((2,), 4.0), ((3,), 6.0)])
    assert m.weights == pytest.approx((2.0,), abs=1e-12)


def test_exact_two_weights():
    m = fit_consumer_value([((1, 0), 3.0), ((0, 1), 5.0), ((1, 1), 8.0)])
    assert m.weights == pytest.approx((3.0, 5.0), abs=1e-12)


def test_consumer_value_arithmetic():
    m = fit_consumer_value([((1, 0), 2.0), ((0, 1), 3.0), ((1, 1), 5.0)])
    assert consumer_value(m, (1, 1)) == pytest.approx(5.0)
    assert consumer_value(m, (0, 0)) == 0.0
    assert consumer_value(m, (2, 2)) == pytest.approx(2 * consumer_value(m, (1, 1)))
    with pytest.raises(FitError):
        consumer_value(m, (1, 2, 3))


@given(st.lists(st.floats(-50, 50), min_size=2, max_size=2),
       st.lists(st.floats(-50, 50), min_size=2, max_size=2),
       st.floats(-3, 3), st.floats(-3, 3))
def test_consumer_value_linearity(x, z, a, b):
    m = fit_consumer_value([((1, 0), 2.0), ((0, 1), -1.5), ((1, 1), 0.5)])
    mixed = consumer_value(m, [a * xi + b * zi for xi, zi in zip(x, z)])
    split = a * consumer_value(m, x) + b * consumer_value(m, z)
    assert mixed == pytest.approx(split, rel=1e-9, abs=1e-9)


def test_rank_deficient_design_is_error():
    with pytest.raises(RankDeficientError):
        fit_consumer_value([((1, 2), 3.0), ((2, 4), 6.0), ((3, 6), 9.0)])


def test_sample_smaller_than_parameters_is_error():
    with pytest.raises(FitError):
        fit_consumer_value([((1, 0), 1.0)])


def test_consumer_value_recovery_within_three_stderr():
    rng = np.random.default_rng(20)
    true_w = np.array([1.5, -0.5])
    X = rng.uniform(0.5, 4.0, size=(200, 2))
    y = X @ true_w + rng.normal(0, 0.3, size=200)
    expected, stderr = lstsq_with_stderr(X, y)
    m = fit_consumer_value(list(zip(map(tuple, X), y)))
    assert np.allclose(m.weights, expected, atol=1e-8)
    assert all(abs(w - t) <= 3 * se for w, t, se in zip(m.weights, true_w, stderr))


def test_residual_orthogonality():
    rng = np.random.default_rng(3)
    X = rng.uniform(-2, 2, size=(60, 3))
    y = X @ np.array([2.0, -1.0, 0.5]) + rng.normal(0, 1.0, size=60)
    m = fit_consumer_value(list(zip(map(tuple, X), y)))
    resid = y - X @ np.array(m.weights)
    assert np.all(np.abs(X.T @ resid) <= 1e-6 * np.abs(X.T @ y) + 1e-9)


def test_duplicating_observations_keeps_weights():
    obs = [((1.0, 0.5), 2.0), ((0.5, 2.0), 1.0), ((2.0, 1.0), 3.5)]
    m1 = fit_consumer_value(obs)
    m2 = fit_consumer_value(obs + obs)
    assert m1.weights == pytest.approx(m2.weights, abs=1e-9)


# --- linear demand on deltas -------------------------------------------------

def test_linear_demand_exact():
    m = fit_linear_demand([((1,), -10.0), ((2,), -20.0)])
    assert m.coefficients == pytest.approx((-10.0,), abs=1e-12)


def test_linear_demand_zero_response():
    m = fit_linear_demand([((1,), 0.0), ((2,), 0.0)])
    assert m.coefficients == (0.0,)
    assert m.diagnostics.r_squared is None


def test_linear_demand_recovery():
    rng = np.random.default_rng(11)
    truth = np.array([-8.0, 120.0])
    X = rng.uniform(-1, 1, size=(100, 2))
    y = X @ truth + rng.normal(0, 2.0, size=100)
    expected, stderr = lstsq_with_stderr(X, y)
    m = fit_linear_demand(list(zip(map(tuple, X), y)))
    assert np.allclose(m.coefficients, expected, atol=1e-8)
    assert all(abs(c - t) <= 3 * se for c, t, se in zip(m.coefficients, truth, stderr))


# --- demand curves -----------------------------------------------------------

def test_log_linear_exact_power_law():
    m = fit_demand_curve([(p, 1000.0 / p) for p in (5.0, 10.0, 20.0)], "log-linear")
    assert m.scale == pytest.approx(1000.0, rel=1e-6)
    assert m.elasticity == pytest.approx(-1.0, abs=1e-6)
    v, inside = predict_volume(m, 10.0)
    assert v == pytest.approx(100.0, rel=1e-9) and inside
    v, inside = predict_volume(m, 40.0)
    assert v == pytest.approx(25.0, rel=1e-9) and not inside


def test_log_linear_flat_response_unreliable():
    m = fit_demand_curve([(p, 50.0) for p in (4.0, 6.0, 8.0, 10.0, 12.0,
                                              14.0, 16.0, 18.0, 20.0, 22.0)],
                         "log-linear")
    assert m.elasticity == pytest.approx(0.0, abs=1e-12)
    diag = reliability_check(m)
    assert not diag.reliable
    assert "correlation" in diag.failed_checks()


def test_log_linear_requires_positive_data():
    with pytest.raises(FitError):
        fit_demand_curve([(1.0, 5.0), (-2.0, 3.0)], "log-linear")


def test_log_linear_elasticity_recovery():
    rng = np.random.default_rng(4)
    prices = rng.uniform(5, 50, size=200)
    volumes = 800.0 * prices ** -1.4 * np.exp(rng.normal(0, 0.1, size=200))
    X = np.column_stack([np.ones(200), np.log(prices)])
    expected, stderr = lstsq_with_stderr(X, np.log(volumes))
    m = fit_demand_curve(list(zip(prices, volumes)), "log-linear")
    assert m.coefficients == pytest.approx(tuple(expected), abs=1e-8)
    assert abs(m.elasticity - (-1.4)) <= 3 * stderr[1]


def test_log_linear_strictly_decreasing_for_negative_elasticity():
    m = fit_demand_curve([(p, 1000.0 / p) for p in (5.0, 10.0, 20.0)], "log-linear")
    grid = np.linspace(5, 20, 40)
    values = predict_volume_batch(m, grid)
    assert np.all(np.diff(values) < 0)


def test_piecewise_continuous_at_breakpoints():
    rng = np.random.default_rng(9)
    prices = rng.uniform(2, 20, size=80)
    volumes = np.where(prices < 10, 200 - 5 * prices, 260 - 11 * prices)
    volumes = volumes + rng.normal(0, 1.0, size=80)
    m = fit_demand_curve(list(zip(prices, volumes)), "piecewise-linear")
    assert len(m.segments) == len(m.breakpoints) + 1
    for i, t in enumerate(m.breakpoints):
        a_left, b_left = m.segments[i]
        a_right, b_right = m.segments[i + 1]
        assert a_left + b_left * t == pytest.approx(a_right + b_right * t, abs=1e-6)


def test_piecewise_batch_matches_pointwise():
    rng = np.random.default_rng(5)
    prices = rng.uniform(1, 30, size=60)
    volumes = 300 - 7 * prices + rng.normal(0, 2, size=60)
    m = fit_demand_curve(list(zip(prices, volumes)), "piecewise-linear")
    pts = np.linspace(1, 30, 17)
    batch = predict_volume_batch(m, pts)
    single = [predict_volume(m, p)[0] for p in pts]
    assert batch == pytest.approx(single, rel=1e-12)


def test_linear_price_model_prediction():
    m = linear_price_model(100.0, -5.0, (2.0, 18.0))
    assert predict_volume(m, 10.0) == (50.0, True)
    assert predict_volume(m, 20.0) == (0.0, False)


# --- reliability -------------------------------------------------------------

def test_reliability_small_sample():
    m = fit_demand_curve([(5.0, 100.0), (10.0, 50.0), (20.0, 25.0)], "log-linear")
    diag = reliability_check(m)
    assert not diag.reliable
    assert diag.failed_checks() == ("sample_size",)


def test_reliability_perfect_fit_on_twenty_points():
    pairs = [(float(p), 1000.0 / p) for p in range(5, 25)]
    m = fit_demand_curve(pairs, "log-linear")
    diag = reliability_check(m)
    assert diag.reliable
    assert diag.r_squared == pytest.approx(1.0, abs=1e-12)


def test_reliability_shuffled_pairs():
    rng = np.random.default_rng(17)
    prices = np.linspace(5, 40, 30)
    volumes = rng.permutation(np.linspace(20, 25, 30))
    m = fit_demand_curve(list(zip(prices, volumes)), "log-linear")
    diag = reliability_check(m)
    assert abs(diag.correlations[0]) < 0.3
    assert not diag.reliable


# --- dataset-driven analysis --------------------------------------------------

def test_demand_deltas_consecutive_quarters(notebooks):
    deltas = demand_deltas(notebooks, "TN20A")
    assert len(deltas) == 3  # four quarters -> three steps
    # volumes total 100 each quarter, so every volume delta is zero
    assert all(dv == pytest.approx(0.0) for _, dv in deltas)


def test_fit_from_sales_forms(notebooks):
    log = fit_demand_from_sales(notebooks, "TN20A", "log-linear")
    assert log.form == "log-linear" and log.diagnostics.sample_size == 12
    lin = fit_demand_from_sales(notebooks, "TN20A", "linear-delta")
    assert lin.form == "linear-delta" and lin.baseline is not None
    with pytest.raises(FitError):
        fit_demand_from_sales(notebooks, "MB01", "log-linear")


def test_characteristic_significance_ram_first():
    # volumes exactly proportional to RAM across a small class
    from entplan.datastore import (CharacteristicRecord, Dataset, GoodsRecord,
                                   SaleRecord)
    from entplan.periods import Period

    goods = []
    chars = []
    sales = []
    for i, ram in enumerate((1.0, 2.0, 4.0, 8.0), start=1):
        gid = f"G{i}"
        goods.append(GoodsRecord(gid, gid, "product", "test", "pc", 100.0, False, False))
        chars.append(CharacteristicRecord(f"c{i}", gid, "ram", "numeric", ram, "Gb"))
        chars.append(CharacteristicRecord(f"k{i}", gid, "color", "category",
                                          "red" if i % 2 else "blue", ""))
        for q in (1, 2):
            sales.append(SaleRecord(f"s{i}{q}", gid, "B", "P", 10.0 * ram, 5.0,
                                    Period(2010, q), "retail", ""))
    ds = Dataset(tovar=tuple(goods), character=tuple(chars), logist=tuple(sales))
    ranked = characteristic_significance(ds, "G1")
    assert ranked[0].characteristic == "ram"
    assert ranked[0].correlation == pytest.approx(1.0)
    assert {e.characteristic for e in ranked} == {"ram", "color"}


def test_characteristic_significance_constant_char_zero(notebooks):
    from entplan.datastore import CharacteristicRecord, Dataset

    extra = tuple(CharacteristicRecord(f"x{i}", g.id, "flat", "numeric", 3.0, "")
                  for i, g in enumerate(notebooks.tovar) if g.kind == "product")
    ds = Dataset(tovar=notebooks.tovar, character=notebooks.character + extra,
                 logist=notebooks.logist)
    ranked = characteristic_significance(ds, "TN20A")
    flat = next(e for e in ranked if e.characteristic == "flat")
    assert flat.correlation == 0.0


def test_characteristic_significance_matches_hand_pearson(notebooks):
    ranked = characteristic_significance(notebooks, "TN20A")
    assert {e.characteristic for e in ranked} == \
        {"size of RAM", "price", "operation system", "screen size"}
    # recompute the RAM correlation by hand over (goods, quarter) volumes
    budget = [g.id for g in notebooks.tovar if g.goods_class == "budget"]
    ram = {c.goods_id: float(c.value) for c in notebooks.character
           if c.name == "size of RAM" and c.goods_id in budget}
    volumes = {}
    for r in notebooks.logist:
        if r.goods_id in budget:
            volumes[(r.goods_id, r.period)] = volumes.get((r.goods_id, r.period), 0.0) + r.volume
    xs = [ram[g] for (g, _) in volumes]
    ys = [v for v in volumes.values()]
    expected = pearson_by_hand(xs, ys)
    got = next(e for e in ranked if e.characteristic == "size of RAM")
    assert got.correlation == pytest.approx(expected, abs=1e-9)


def test_complaint_summary(notebooks):
    entries = complaint_summary(notebooks, "TN20A", "quality")
    assert [e.document_id for e in entries] == ["D01", "D02"]
    assert entries[0].action_taken is True    # D03 references D01
    assert entries[1].action_taken is False
    assert complaint_summary(notebooks, "TN55", "quality") == []
    assert isinstance(entries[0], ComplaintEntry)


def test_survey_observations(notebooks):
    obs = survey_observations(notebooks, ["size of RAM", "screen size"])
    assert len(obs) == len(notebooks.surveys)
    m = fit_consumer_value(obs, characteristics=["size of RAM", "screen size"])
    assert len(m.weights) == 2


# --- serialization ------------------------------------------------------------

def test_model_round_trip(notebooks):
    for form in ("log-linear", "piecewise-linear", "linear-delta"):
        m = fit_demand_from_sales(notebooks, "TN301", form)
        again = model_from_dict(model_to_dict(m))
        assert again == m
