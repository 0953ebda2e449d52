"""Producer-wholesaler-retailer delivery chain simulation.

Per period, in order: retailers pick a price maximizing their margin over a
grid inside the demand model's validity box, sell from stock, and order the
shortfall; wholesalers serve long-term agreements first, then retail
orders, and order their own shortfall upstream; the producer makes up any
deficit with production.  Goods shipped between echelons arrive one period
later.  Profit ledgers record sell price * volume - buy price * volume -
expenses for resellers, and revenue - direct costs - indirect costs for
the producer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .demand import DemandModel, predict_volume
from .errors import EntplanError

PRODUCER, WHOLESALER, RETAILER = "producer", "wholesaler", "retailer"


class ChainError(EntplanError):
    pass


# ---------------------------------------------------------------------------
# Industrial purchase decision


@dataclass(frozen=True)
class PurchaseContext:
    """Predicates steering one buyer's purchase negotiation.

    `agrees_price` and `seller_lowers_price` may be sequences, consulted per
    visit to their step (the last entry repeats); plain booleans behave as
    constant sequences.  `max_rounds` bounds how many price reductions the
    seller may attempt.
    """
    meets_demands: bool = False
    has_arrangement: bool = False
    can_adapt: bool = False
    delivery_quality_problems: bool = False
    reliable_client: bool = False
    agrees_price: bool | Sequence[bool] = False
    seller_lowers_price: bool | Sequence[bool] = False
    max_rounds: int = 1

    def __post_init__(self):
        if self.max_rounds < 0:
            raise ChainError("max_rounds must be >= 0")


@dataclass(frozen=True)
class PurchaseOutcome:
    concluded: bool
    trace: tuple[int, ...]  # step numbers visited, in order


def _at(value: bool | Sequence[bool], visit: int) -> bool:
    if isinstance(value, bool):
        return value
    seq = list(value)
    if not seq:
        return False
    return bool(seq[min(visit, len(seq) - 1)])


def purchase_decision(ctx: PurchaseContext) -> PurchaseOutcome:
    """Run the nine-step purchase negotiation and record the visited steps.

    Steps: 1 goods fit the buyer's demands? 2 existing arrangement for an
    analogous goods? 3 seller can adapt the goods? 4 problems with delivery
    or quality of the analogous goods? 5 buyer is a reliable client?
    6 buyer agrees to the proposed price? 7 seller lowers the price (at most
    `max_rounds` times)?  8 concluded / 9 not concluded.
    """
    trace = [1]
    step = 2 if ctx.meets_demands else 3
    rounds_used = 0
    price_visit = 0
    lower_visit = 0
    while True:
        trace.append(step)
        if step == 2:
            step = 4 if ctx.has_arrangement else 5
        elif step == 3:
            step = 2 if ctx.can_adapt else 9
        elif step == 4:
            step = 5 if ctx.delivery_quality_problems else 9
        elif step == 5:
            step = 6 if ctx.reliable_client else 9
        elif step == 6:
            agrees = _at(ctx.agrees_price, price_visit)
            price_visit += 1
            step = 8 if agrees else 7
        elif step == 7:
            lowers = _at(ctx.seller_lowers_price, lower_visit)
            lower_visit += 1
            if lowers and rounds_used < ctx.max_rounds:
                rounds_used += 1
                step = 6
            else:
                step = 9
        elif step == 8:
            return PurchaseOutcome(True, tuple(trace))
        else:
            return PurchaseOutcome(False, tuple(trace))


@dataclass(frozen=True)
class SalesForecast:
    concluded: int
    outcomes: tuple[PurchaseOutcome, ...]


def industrial_sales_forecast(buyers: Sequence[PurchaseContext]) -> SalesForecast:
    """Run the purchase algorithm per candidate buyer and count concluded deals."""
    outcomes = tuple(purchase_decision(ctx) for ctx in buyers)
    return SalesForecast(sum(1 for o in outcomes if o.concluded), outcomes)


# ---------------------------------------------------------------------------
# Profit identities


def retailer_profit(sell_price: float, volume: float,
                    purchase_price: float, expenses: float) -> float:
    """Retail revenue minus goods bought at the wholesale price minus expenses."""
    if volume < 0:
        raise ChainError("volume must be >= 0")
    return sell_price * volume - purchase_price * volume - expenses


def wholesaler_profit(sell_price: float, volume: float,
                      purchase_price: float, expenses: float) -> float:
    """Wholesale revenue minus goods bought at the basic price minus expenses."""
    if volume < 0:
        raise ChainError("volume must be >= 0")
    return sell_price * volume - purchase_price * volume - expenses


# ---------------------------------------------------------------------------
# Echelon state and per-period steps


@dataclass(frozen=True)
class Agreement:
    counterparty: str
    goods: str
    quantity: float

    def __post_init__(self):
        if self.quantity <= 0:
            raise ChainError("agreement quantity must be > 0")


@dataclass(frozen=True)
class Order:
    counterparty: str
    goods: str
    quantity: float


@dataclass
class EchelonState:
    name: str
    role: str
    stocks: dict[str, float] = field(default_factory=dict)
    prices: dict[str, float] = field(default_factory=dict)   # posted sale price per goods
    expenses: dict[str, float] = field(default_factory=dict)  # per goods, current period
    pending_orders: list[Order] = field(default_factory=list)
    agreements: list[Agreement] = field(default_factory=list)

    def __post_init__(self):
        if self.role not in (PRODUCER, WHOLESALER, RETAILER):
            raise ChainError(f"unknown echelon role {self.role!r}")
        for goods, stock in self.stocks.items():
            if stock < 0:
                raise ChainError(f"negative stock for {goods!r}")
        for goods, price in self.prices.items():
            if price <= 0:
                raise ChainError(f"non-positive price for {goods!r}")


@dataclass(frozen=True)
class RetailerPlan:
    prices: dict[str, float]
    planned_sales: dict[str, float]
    orders: dict[str, float]


def _grid_best_price(model: DemandModel, purchase_price: float, expenses: float,
                     grid_step: float) -> tuple[float, float]:
    """Grid search of sell_price*V - purchase_price*V - expenses over the box."""
    (lo, hi), = model.box
    steps = max(0, int(math.floor((hi - lo) / grid_step + 1e-9)))
    best_price, best_profit, best_volume = lo, -math.inf, 0.0
    for k in range(steps + 1):
        p = min(lo + k * grid_step, hi)
        v = max(0.0, predict_volume(model, (p,))[0])
        profit = p * v - purchase_price * v - expenses
        if profit > best_profit:
            best_price, best_profit, best_volume = p, profit, v
    return best_price, best_volume


def retailer_step(state: EchelonState, models: Mapping[str, DemandModel],
                  purchase_prices: Mapping[str, float],
                  grid_step: float = 0.01) -> RetailerPlan:
    """Choose retail prices, plan sales, and size the wholesaler order.

    The order covers only the shortfall: max(0, planned - stock).
    """
    prices, planned, orders = {}, {}, {}
    for goods, stock in state.stocks.items():
        if goods not in models:
            if stock > 0:
                raise ChainError(f"no demand model for stocked goods {goods!r} "
                                 f"at {state.name}")
            continue
    for goods, model in models.items():
        stock = state.stocks.get(goods, 0.0)
        expense = state.expenses.get(goods, 0.0)
        price, volume = _grid_best_price(model, purchase_prices.get(goods, 0.0),
                                         expense, grid_step)
        prices[goods] = price
        planned[goods] = volume
        orders[goods] = max(0.0, volume - stock)
    return RetailerPlan(prices, planned, orders)


def _allocate(state: EchelonState, incoming: Sequence[Order],
              period_agreements: Sequence[Agreement]) -> tuple[list[Order], dict[str, float]]:
    """Serve agreements first, then orders, from stock; report the shortfall.

    Returns (shipments as orders actually filled, per-goods unmet demand).
    """
    demanded: dict[str, float] = {}
    queue: list[Order] = []
    for a in period_agreements:
        queue.append(Order(a.counterparty, a.goods, a.quantity))
    queue.extend(incoming)
    for o in queue:
        demanded[o.goods] = demanded.get(o.goods, 0.0) + o.quantity
    shipments = []
    for o in queue:
        available = state.stocks.get(o.goods, 0.0)
        qty = min(o.quantity, available)
        if qty > 0:
            state.stocks[o.goods] = available - qty
            shipments.append(Order(o.counterparty, o.goods, qty))
    shortfall = {g: max(0.0, total - (state.stocks.get(g, 0.0) + sum(
        s.quantity for s in shipments if s.goods == g)))
        for g, total in demanded.items()}
    return shipments, shortfall


def wholesaler_step(state: EchelonState, incoming: Sequence[Order]
                    ) -> tuple[list[Order], dict[str, float]]:
    """Fill agreements then retail orders from stock; order the deficit upstream.

    The producer order per goods is max(0, total demanded - opening stock).
    """
    opening = dict(state.stocks)
    shipments, _ = _allocate(state, incoming, state.agreements)
    demanded: dict[str, float] = {}
    for a in state.agreements:
        demanded[a.goods] = demanded.get(a.goods, 0.0) + a.quantity
    for o in incoming:
        demanded[o.goods] = demanded.get(o.goods, 0.0) + o.quantity
    producer_order = {g: max(0.0, total - opening.get(g, 0.0))
                      for g, total in demanded.items()}
    return shipments, {g: q for g, q in producer_order.items() if q > 0}


def producer_step(state: EchelonState, incoming: Sequence[Order]) -> dict[str, float]:
    """Production per goods: max(0, total demanded - stock), mirroring the
    wholesaler rule with production in place of an upstream order."""
    demanded: dict[str, float] = {}
    for a in state.agreements:
        demanded[a.goods] = demanded.get(a.goods, 0.0) + a.quantity
    for o in incoming:
        demanded[o.goods] = demanded.get(o.goods, 0.0) + o.quantity
    return {g: max(0.0, total - state.stocks.get(g, 0.0))
            for g, total in demanded.items() if total - state.stocks.get(g, 0.0) > 0}


# ---------------------------------------------------------------------------
# Whole-chain simulation


def _per_period(value, t: int) -> float:
    """Scalar config values apply to every period; lists index by period."""
    if isinstance(value, (int, float)):
        return float(value)
    seq = list(value)
    return float(seq[min(t, len(seq) - 1)])


@dataclass
class RetailerConfig:
    name: str
    stocks: dict[str, float] = field(default_factory=dict)
    expenses: dict[str, float | list] = field(default_factory=dict)
    models: dict[str, DemandModel] = field(default_factory=dict)
    grid_step: float = 0.01


@dataclass
class WholesalerConfig:
    name: str
    stocks: dict[str, float] = field(default_factory=dict)
    prices: dict[str, float | list] = field(default_factory=dict)
    expenses: dict[str, float | list] = field(default_factory=dict)
    agreements: list[Agreement] = field(default_factory=list)
    retailers: list[RetailerConfig] = field(default_factory=list)


@dataclass
class ProducerConfig:
    name: str = "producer"
    stocks: dict[str, float] = field(default_factory=dict)
    basic_prices: dict[str, float | list] = field(default_factory=dict)
    direct_costs: dict[str, float] = field(default_factory=dict)
    indirect_cost: float | list = 0.0
    agreements: list[Agreement] = field(default_factory=list)


@dataclass
class ChainConfig:
    goods: list[str]
    producer: ProducerConfig
    wholesalers: list[WholesalerConfig]

    def validate(self) -> None:
        if not self.goods:
            raise ChainError("config lists no goods")
        names = [self.producer.name] + [w.name for w in self.wholesalers] + \
                [r.name for w in self.wholesalers for r in w.retailers]
        if len(set(names)) != len(names):
            raise ChainError("echelon names must be unique")
        for w in self.wholesalers:
            for r in w.retailers:
                for goods, stock in r.stocks.items():
                    if stock > 0 and goods not in r.models:
                        raise ChainError(f"retailer {r.name!r} stocks {goods!r} "
                                         f"without a demand model")


@dataclass(frozen=True)
class Shipment:
    source: str
    dest: str
    goods: str
    quantity: float
    price: float
    dispatched: int   # period index (1-based)
    arrives: int


@dataclass(frozen=True)
class GoodsFlow:
    opening: float
    received: float
    produced: float
    sold: float      # shipped out or sold to consumers
    closing: float


@dataclass(frozen=True)
class LedgerEntry:
    echelon: str
    role: str
    goods: str | None            # None for the producer's whole-plan entry
    sell_price: float
    volume: float
    purchase_price: float        # wholesale/basic buy price; direct cost for producer
    expenses: float              # party expenses; indirect cost for producer
    profit: float


@dataclass(frozen=True)
class EchelonSnapshot:
    name: str
    role: str
    flows: dict[str, GoodsFlow]
    prices: dict[str, float]


@dataclass(frozen=True)
class PeriodSnapshot:
    period: int
    states: tuple[EchelonSnapshot, ...]
    shipments: tuple[Shipment, ...]
    production: dict[str, float]
    ledger: tuple[LedgerEntry, ...]


@dataclass(frozen=True)
class ChainTrajectory:
    seed: int
    periods: int
    snapshots: tuple[PeriodSnapshot, ...]


def simulate_chain(config: ChainConfig, periods: int, seed: int = 0) -> ChainTrajectory:
    """Run the chain for `periods` periods.

    Deterministic given the config and seed (the rules themselves are
    deterministic; the seed is recorded for replay bookkeeping).
    """
    if periods < 1:
        raise ChainError("periods must be >= 1")
    config.validate()

    producer = EchelonState(config.producer.name, PRODUCER,
                            stocks=dict(config.producer.stocks),
                            prices={}, agreements=list(config.producer.agreements))
    wholesalers = []
    for wc in config.wholesalers:
        w = EchelonState(wc.name, WHOLESALER, stocks=dict(wc.stocks),
                         prices={}, agreements=list(wc.agreements))
        retailers = [EchelonState(rc.name, RETAILER, stocks=dict(rc.stocks), prices={})
                     for rc in wc.retailers]
        wholesalers.append((wc, w, retailers))

    in_transit: list[Shipment] = []
    snapshots = []

    for t in range(1, periods + 1):
        ti = t - 1
        opening: dict[tuple[str, str], float] = {}
        for st in _all_states(producer, wholesalers):
            for goods in config.goods:
                opening[(st.name, goods)] = st.stocks.get(goods, 0.0)

        received: dict[tuple[str, str], float] = {}
        still_moving = []
        for sh in in_transit:
            if sh.arrives == t:
                dest = _find_state(producer, wholesalers, sh.dest)
                dest.stocks[sh.goods] = dest.stocks.get(sh.goods, 0.0) + sh.quantity
                received[(sh.dest, sh.goods)] = received.get((sh.dest, sh.goods), 0.0) + sh.quantity
            else:
                still_moving.append(sh)
        in_transit = still_moving

        shipments: list[Shipment] = []
        ledger: list[LedgerEntry] = []
        sold: dict[tuple[str, str], float] = {}
        production: dict[str, float] = {}

        basic_price = {g: _per_period(config.producer.basic_prices.get(g, 0.0), ti)
                       for g in config.goods}

        for wc, w, retailers in wholesalers:
            wholesale_price = {g: _per_period(wc.prices.get(g, 0.0), ti)
                               for g in config.goods}
            retail_orders: list[Order] = []
            for rc, r in zip(wc.retailers, retailers):
                r.expenses = {g: _per_period(rc.expenses.get(g, 0.0), ti)
                              for g in rc.models}
                plan = retailer_step(r, rc.models, wholesale_price, rc.grid_step)
                r.prices = dict(plan.prices)
                for goods, planned in plan.planned_sales.items():
                    stock = r.stocks.get(goods, 0.0)
                    sales = min(planned, stock)
                    r.stocks[goods] = stock - sales
                    sold[(r.name, goods)] = sold.get((r.name, goods), 0.0) + sales
                    ledger.append(LedgerEntry(
                        r.name, RETAILER, goods,
                        sell_price=plan.prices[goods], volume=sales,
                        purchase_price=wholesale_price.get(goods, 0.0),
                        expenses=r.expenses.get(goods, 0.0),
                        profit=retailer_profit(plan.prices[goods], sales,
                                               wholesale_price.get(goods, 0.0),
                                               r.expenses.get(goods, 0.0))))
                for goods, qty in plan.orders.items():
                    if qty > 0:
                        retail_orders.append(Order(r.name, goods, qty))

            w.prices = dict(wholesale_price)
            w.expenses = {g: _per_period(wc.expenses.get(g, 0.0), ti)
                          for g in config.goods}
            filled, producer_order = wholesaler_step(w, retail_orders)
            shipped_by_goods: dict[str, float] = {}
            for o in filled:
                shipments.append(Shipment(w.name, o.counterparty, o.goods, o.quantity,
                                          wholesale_price.get(o.goods, 0.0), t, t + 1))
                shipped_by_goods[o.goods] = shipped_by_goods.get(o.goods, 0.0) + o.quantity
                sold[(w.name, o.goods)] = sold.get((w.name, o.goods), 0.0) + o.quantity
            for goods in config.goods:
                volume = shipped_by_goods.get(goods, 0.0)
                if volume == 0.0 and w.expenses.get(goods, 0.0) == 0.0:
                    continue
                ledger.append(LedgerEntry(
                    w.name, WHOLESALER, goods,
                    sell_price=wholesale_price.get(goods, 0.0), volume=volume,
                    purchase_price=basic_price.get(goods, 0.0),
                    expenses=w.expenses.get(goods, 0.0),
                    profit=wholesaler_profit(wholesale_price.get(goods, 0.0), volume,
                                             basic_price.get(goods, 0.0),
                                             w.expenses.get(goods, 0.0))))
            w.pending_orders = [Order(w.name, g, q) for g, q in producer_order.items()]

        producer_orders = [o for _, w, _ in wholesalers for o in w.pending_orders]
        made = producer_step(producer, producer_orders)
        for goods, qty in made.items():
            producer.stocks[goods] = producer.stocks.get(goods, 0.0) + qty
            production[goods] = production.get(goods, 0.0) + qty
        filled, _ = _allocate(producer, producer_orders, producer.agreements)
        producer.prices = dict(basic_price)
        prod_volumes: dict[str, float] = {}
        for o in filled:
            shipments.append(Shipment(producer.name, o.counterparty, o.goods,
                                      o.quantity, basic_price.get(o.goods, 0.0), t, t + 1))
            prod_volumes[o.goods] = prod_volumes.get(o.goods, 0.0) + o.quantity
            sold[(producer.name, o.goods)] = sold.get((producer.name, o.goods), 0.0) + o.quantity
        # Producer ledger: one margin row per goods sold plus one indirect
        # row, so each row satisfies sell*v - cost*v - expenses exactly.
        indirect = _per_period(config.producer.indirect_cost, ti)
        for goods in config.goods:
            v = prod_volumes.get(goods, 0.0)
            if v == 0.0:
                continue
            price = basic_price.get(goods, 0.0)
            cost = config.producer.direct_costs.get(goods, 0.0)
            ledger.append(LedgerEntry(
                producer.name, PRODUCER, goods,
                sell_price=price, volume=v, purchase_price=cost, expenses=0.0,
                profit=price * v - cost * v - 0.0))
        ledger.append(LedgerEntry(
            producer.name, PRODUCER, None,
            sell_price=0.0, volume=0.0, purchase_price=0.0, expenses=indirect,
            profit=-indirect))

        states = []
        for st in _all_states(producer, wholesalers):
            flows = {}
            for goods in config.goods:
                key = (st.name, goods)
                flows[goods] = GoodsFlow(
                    opening=opening[key],
                    received=received.get(key, 0.0),
                    produced=production.get(goods, 0.0) if st.role == PRODUCER else 0.0,
                    sold=sold.get(key, 0.0),
                    closing=st.stocks.get(goods, 0.0))
            states.append(EchelonSnapshot(st.name, st.role, flows, dict(st.prices)))
        in_transit.extend(shipments)
        snapshots.append(PeriodSnapshot(t, tuple(states), tuple(shipments),
                                        production, tuple(ledger)))

    return ChainTrajectory(seed=seed, periods=periods, snapshots=tuple(snapshots))


def _all_states(producer, wholesalers):
    yield producer
    for _, w, retailers in wholesalers:
        yield w
        yield from retailers


def _find_state(producer, wholesalers, name: str) -> EchelonState:
    for st in _all_states(producer, wholesalers):
        if st.name == name:
            return st
    raise ChainError(f"unknown echelon {name!r}")
