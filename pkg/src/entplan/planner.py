"""Operating-profit planning under market and capacity constraints.

The planner samples price vectors uniformly from the market price box,
derives sale volumes from the demand models (capped at the volume upper
bound, rejected below the lower bound), rejects samples that overload a
capacity bottleneck, and keeps the feasible sample of maximal profit.
Profit is revenue minus direct costs on sold volume minus a per-plan
indirect cost; production makes up the gap between sales and stock.

Capacity follows the bottleneck rule: for each product the binding
operation is the one with the largest total duration across components,
and products sharing a bottleneck must fit their production into its
available time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .demand import DemandModel, predict_volume_batch, reliability_check
from .errors import EntplanError

TIE_TOLERANCE = 1e-9
SAMPLE_CHUNK = 8192


class PlanError(EntplanError):
    pass


class NoFeasiblePlanError(PlanError):
    pass


# ---------------------------------------------------------------------------
# Plan data


@dataclass(frozen=True)
class PlanVariant:
    goods: tuple[str, ...]
    prices: tuple[float, ...]
    volumes: tuple[float, ...]
    production: tuple[float, ...]
    stocks: tuple[float, ...]
    direct_costs: tuple[float, ...]
    indirect_cost: float
    profit: float

    def __post_init__(self):
        n = len(self.goods)
        for name in ("prices", "volumes", "production", "stocks", "direct_costs"):
            if len(getattr(self, name)) != n:
                raise PlanError(f"{name} length does not match goods count")
        for v, z, y in zip(self.volumes, self.stocks, self.production):
            if abs(y - max(0.0, v - z)) > 1e-9:
                raise PlanError("production must equal max(0, volume - stock)")


@dataclass(frozen=True)
class MarketBox:
    price_bounds: tuple[tuple[float, float], ...]
    volume_bounds: tuple[tuple[float, float], ...]

    def __post_init__(self):
        for name in ("price_bounds", "volume_bounds"):
            for lo, hi in getattr(self, name):
                if lo < 0 or hi < 0:
                    raise PlanError(f"{name} must be >= 0")
                if lo > hi:
                    raise PlanError(f"{name} has min {lo} above max {hi}")


@dataclass(frozen=True)
class WeakPlace:
    goods: tuple[str, ...]
    time: float
    name: str = ""

    def __post_init__(self):
        if self.time < 0:
            raise PlanError("available time must be >= 0")
        if not self.goods:
            raise PlanError("weak place lists no goods")


@dataclass(frozen=True)
class RoutingTable:
    durations: dict[str, tuple[tuple[float, ...], ...]]  # product -> operations x components
    weak_places: tuple[WeakPlace, ...] = ()

    def __post_init__(self):
        for product, matrix in self.durations.items():
            for row in matrix:
                for d in row:
                    if d < 0:
                        raise PlanError(f"negative duration for product {product!r}")
        seen: set[str] = set()
        for wp in self.weak_places:
            overlap = seen & set(wp.goods)
            if overlap:
                raise PlanError(f"weak-place groups overlap on {sorted(overlap)}")
            seen |= set(wp.goods)
            for g in wp.goods:
                if g not in self.durations:
                    raise PlanError(f"weak place references unrouted product {g!r}")


@dataclass(frozen=True)
class OptimizationReport:
    best: PlanVariant | None
    samples: int
    feasible_fraction: float
    seed: int
    trace: tuple[tuple[int, float | None], ...]  # (samples so far, best profit)


# ---------------------------------------------------------------------------
# Profit and constraints


def operation_profit(prices: Sequence[float], volumes: Sequence[float],
                     direct_costs: Sequence[float], indirect_cost: float,
                     production: Sequence[float] | None = None,
                     cost_by_production: bool = False) -> float:
    """Revenue minus direct costs minus the indirect cost.

    Direct costs apply to sold volume; `cost_by_production` switches them to
    produced volume instead.
    """
    if not (len(prices) == len(volumes) == len(direct_costs)):
        raise PlanError("prices, volumes, and direct costs must share one length")
    revenue = 0.0
    for p, v in zip(prices, volumes):
        revenue += p * v
    cost = 0.0
    costed = production if cost_by_production else volumes
    if costed is None:
        raise PlanError("cost_by_production requires production volumes")
    if len(costed) != len(direct_costs):
        raise PlanError("production length does not match direct costs")
    for a, q in zip(direct_costs, costed):
        cost += a * q
    return revenue - cost - indirect_cost


def longest_operation_time(matrix: Sequence[Sequence[float]]) -> tuple[float, int]:
    """Bottleneck of one product: max over operations of the row's total
    duration, with the 1-based operation index (ties keep the smallest)."""
    if not matrix:
        raise PlanError("empty routing matrix")
    best_total, best_index = -math.inf, 0
    for i, row in enumerate(matrix, start=1):
        total = 0.0
        for d in row:
            total += d
        if total > best_total:
            best_total, best_index = total, i
    return best_total, best_index


def weak_place_feasible(taus: Sequence[float], volumes: Sequence[float],
                        available_time: float) -> tuple[bool, float]:
    """Whether production volumes fit the shared bottleneck; slack may be
    negative."""
    if len(taus) != len(volumes):
        raise PlanError("bottleneck durations and volumes must share one length")
    if available_time < 0 or any(t < 0 for t in taus) or any(v < 0 for v in volumes):
        raise PlanError("durations, volumes, and available time must be >= 0")
    load = 0.0
    for t, y in zip(taus, volumes):
        load += t * y
    slack = available_time - load
    return load <= available_time, slack


@dataclass(frozen=True)
class Violation:
    kind: str      # price_bound | volume_bound | capacity
    index: int     # 1-based goods index or weak-place index
    detail: str

    def __str__(self) -> str:
        label = {"price_bound": "price bound", "volume_bound": "volume bound",
                 "capacity": "capacity group"}[self.kind]
        return f"{label} {self.index}: {self.detail}"


def bottleneck_durations(routing: RoutingTable) -> dict[str, float]:
    return {product: longest_operation_time(matrix)[0]
            for product, matrix in routing.durations.items()}


def plan_feasible(plan: PlanVariant, box: MarketBox,
                  routing: RoutingTable | None = None) -> tuple[bool, Violation | None]:
    """Check every market bound, then every capacity group, reporting the
    first violation in that fixed order."""
    n = len(plan.goods)
    if len(box.price_bounds) != n or len(box.volume_bounds) != n:
        raise PlanError("market box does not match the plan's goods count")
    for i in range(n):
        lo, hi = box.price_bounds[i]
        if not lo <= plan.prices[i] <= hi:
            return False, Violation("price_bound", i + 1,
                                    f"price {plan.prices[i]} outside [{lo}, {hi}]")
    for i in range(n):
        lo, hi = box.volume_bounds[i]
        if not lo <= plan.volumes[i] <= hi:
            return False, Violation("volume_bound", i + 1,
                                    f"volume {plan.volumes[i]} outside [{lo}, {hi}]")
    if routing is not None:
        taus = bottleneck_durations(routing)
        index = {g: k for k, g in enumerate(plan.goods)}
        for w, wp in enumerate(routing.weak_places, start=1):
            group = [g for g in wp.goods if g in index]
            ok, slack = weak_place_feasible([taus[g] for g in group],
                                            [plan.production[index[g]] for g in group],
                                            wp.time)
            if not ok:
                return False, Violation("capacity", w,
                                        f"load exceeds {wp.time} by {-slack}")
    return True, None


# ---------------------------------------------------------------------------
# Monte Carlo optimizer


def _lex_less(a: Sequence[float], b: Sequence[float]) -> bool:
    for x, y in zip(a, b):
        if x != y:
            return x < y
    return False


def optimize_plan(goods: Sequence[str],
                  models: Mapping[str, DemandModel],
                  direct_costs: Mapping[str, float],
                  indirect_cost: float,
                  box: MarketBox,
                  stocks: Mapping[str, float] | None = None,
                  routing: RoutingTable | None = None,
                  *,
                  budget: int,
                  seed: int,
                  allow_unreliable: bool = False,
                  cost_by_production: bool = False,
                  trace_every: int = 1000,
                  progress=None) -> OptimizationReport:
    """Best feasible plan from `budget` uniform price samples.

    Deterministic given the seed; ties within 1e-9 of profit resolve to the
    lexicographically smallest price vector.  When nothing feasible turns
    up, the report carries best=None and feasible fraction 0.
    """
    goods = list(goods)
    n = len(goods)
    if budget < 1:
        raise PlanError("budget must be >= 1")
    if len(box.price_bounds) != n or len(box.volume_bounds) != n:
        raise PlanError("market box does not match the goods list")
    for g in goods:
        if g not in models:
            raise PlanError(f"missing demand model for goods {g!r}")
        diag = models[g].diagnostics
        if diag is not None and not allow_unreliable:
            if not reliability_check(models[g]).reliable:
                raise PlanError(f"demand model for {g!r} fails the reliability "
                                f"check; pass allow_unreliable to override")

    z = np.asarray([float((stocks or {}).get(g, 0.0)) for g in goods])
    a = np.asarray([float(direct_costs.get(g, 0.0)) for g in goods])
    lo = np.asarray([b[0] for b in box.price_bounds])
    hi = np.asarray([b[1] for b in box.price_bounds])
    vlo = np.asarray([b[0] for b in box.volume_bounds])
    vhi = np.asarray([b[1] for b in box.volume_bounds])

    group_taus, group_times = [], []
    if routing is not None:
        taus = bottleneck_durations(routing)
        index = {g: k for k, g in enumerate(goods)}
        for wp in routing.weak_places:
            members = [index[g] for g in wp.goods if g in index]
            if members:
                group_taus.append((np.asarray(members),
                                   np.asarray([taus[goods[m]] for m in members])))
                group_times.append(wp.time)

    rng = np.random.default_rng(seed)
    best_profit = None
    best_prices = None
    best_volumes = None
    feasible_count = 0
    done = 0
    trace: list[tuple[int, float | None]] = []
    next_mark = trace_every

    while done < budget:
        chunk = min(SAMPLE_CHUNK, budget - done)
        prices = rng.uniform(lo, hi, size=(chunk, n))
        volumes = np.empty_like(prices)
        for j, g in enumerate(goods):
            volumes[:, j] = predict_volume_batch(models[g], prices[:, j])
        volumes = np.minimum(volumes, vhi)
        feasible = np.all(volumes >= vlo, axis=1)
        production = np.maximum(volumes - z, 0.0)
        for (members, taus_arr), time_limit in zip(group_taus, group_times):
            load = production[:, members] @ taus_arr
            feasible &= load <= time_limit
        revenue = np.sum(prices * volumes, axis=1)
        costed = production if cost_by_production else volumes
        profit = revenue - costed @ a - indirect_cost

        feasible_count += int(feasible.sum())
        idx = np.nonzero(feasible)[0]
        if idx.size:
            chunk_best = float(profit[idx].max())
            floor = chunk_best - TIE_TOLERANCE
            for i in idx:
                p = float(profit[i])
                if p < floor:
                    continue
                if best_profit is None or p > best_profit + TIE_TOLERANCE:
                    best_profit, best_prices = p, prices[i].copy()
                    best_volumes = volumes[i].copy()
                elif p >= best_profit - TIE_TOLERANCE and _lex_less(prices[i], best_prices):
                    best_profit, best_prices = p, prices[i].copy()
                    best_volumes = volumes[i].copy()
        done += chunk
        while next_mark <= done:
            trace.append((next_mark, best_profit))
            next_mark += trace_every
        if progress is not None:
            progress(done, best_profit)

    if not trace or trace[-1][0] != budget:
        trace.append((budget, best_profit))

    best = None
    if best_prices is not None:
        volumes = tuple(float(v) for v in best_volumes)
        production = tuple(max(0.0, v - s) for v, s in zip(volumes, z))
        prices_t = tuple(float(p) for p in best_prices)
        costs_t = tuple(float(c) for c in a)
        profit_exact = operation_profit(prices_t, volumes, costs_t, indirect_cost,
                                        production=production,
                                        cost_by_production=cost_by_production)
        best = PlanVariant(goods=tuple(goods), prices=prices_t, volumes=volumes,
                           production=production, stocks=tuple(float(s) for s in z),
                           direct_costs=costs_t, indirect_cost=indirect_cost,
                           profit=profit_exact)
    return OptimizationReport(best=best, samples=budget,
                              feasible_fraction=feasible_count / budget,
                              seed=seed, trace=tuple(trace))
