"""Planning-problem, scenario, trajectory, report, and event file formats.

Problems and scenarios are JSON (docs/formats.md documents every field);
trajectories are CSV with one row per state/shipment/ledger record; event
files are CSV with one event per line.  Model references inside problem
and scenario files take three forms: an inline model object, "@path" to a
model JSON file, or "fit:GOODS:FORM" to fit from the loaded dataset.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

from ..chainsim import (Agreement, ChainConfig, ChainTrajectory, ProducerConfig,
                        RetailerConfig, WholesalerConfig)
from ..datastore import Dataset
from ..demand import DemandModel, fit_demand_from_sales, model_from_dict, model_to_dict
from ..errors import EntplanError
from ..inference import Event
from ..periods import Period
from ..planner import (MarketBox, OptimizationReport, RoutingTable, WeakPlace,
                       optimize_plan)

ACTIVITY_DRIVER_TOL = 1e-6


class FormatError(EntplanError):
    pass


def _load_json(source) -> dict:
    if isinstance(source, dict):
        return source
    path = Path(source)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise FormatError(f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from None


def resolve_model(ref, ds: Dataset | None = None,
                  base_dir: Path | None = None) -> DemandModel:
    if isinstance(ref, dict):
        return model_from_dict(ref)
    if isinstance(ref, str) and ref.startswith("@"):
        path = Path(ref[1:])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        return model_from_dict(_load_json(path))
    if isinstance(ref, str) and ref.startswith("fit:"):
        try:
            _, goods, form = ref.split(":", 2)
        except ValueError:
            raise FormatError(f"bad model reference {ref!r}; expected "
                              f"fit:GOODS:FORM") from None
        if ds is None:
            raise FormatError(f"model reference {ref!r} needs a loaded dataset")
        return fit_demand_from_sales(ds, goods, form)
    raise FormatError(f"cannot interpret model reference {ref!r}")


# ---------------------------------------------------------------------------
# Planning problems


@dataclass
class PlanningProblem:
    goods: list[str]
    models: dict[str, DemandModel]
    direct_costs: dict[str, float]
    indirect_cost: float
    stocks: dict[str, float]
    box: MarketBox
    routing: RoutingTable | None
    budget: int
    seed: int
    allow_unreliable: bool = False
    cost_by_production: bool = False
    activity_drivers: dict[str, float] = field(default_factory=dict)


def load_problem(source, ds: Dataset | None = None,
                 base_dir: Path | None = None) -> PlanningProblem:
    data = _load_json(source)
    if base_dir is None and not isinstance(source, dict):
        base_dir = Path(source).parent
    try:
        goods = list(data["goods"])
        model_refs = data["models"]
    except KeyError as exc:
        raise FormatError(f"problem file misses required field {exc}") from None
    models = {g: resolve_model(model_refs[g], ds, base_dir)
              for g in goods if g in model_refs}
    missing = [g for g in goods if g not in models]
    if missing:
        raise FormatError(f"no model reference for goods {missing}")
    price_bounds = data.get("price_bounds", {})
    volume_bounds = data.get("volume_bounds", {})

    def bounds_for(table, g, fallback):
        if g in table:
            lo, hi = table[g]
            return float(lo), float(hi)
        return fallback(g)

    box = MarketBox(
        price_bounds=tuple(bounds_for(price_bounds, g,
                                      lambda g: models[g].box[0]) for g in goods),
        volume_bounds=tuple(bounds_for(volume_bounds, g, lambda g: (0.0, float("inf")))
                            for g in goods),
    )
    routing = None
    if data.get("routing"):
        r = data["routing"]
        routing = RoutingTable(
            durations={k: tuple(tuple(float(d) for d in row) for row in matrix)
                       for k, matrix in r.get("durations", {}).items()},
            weak_places=tuple(WeakPlace(goods=tuple(wp["goods"]),
                                        time=float(wp["time"]),
                                        name=wp.get("name", ""))
                              for wp in r.get("weak_places", ())),
        )
    indirect = float(data.get("indirect_cost", 0.0))
    drivers = {k: float(v) for k, v in data.get("activity_drivers", {}).items()}
    if drivers and abs(sum(drivers.values()) - indirect) > ACTIVITY_DRIVER_TOL:
        raise FormatError("activity drivers must sum to the indirect cost")
    return PlanningProblem(
        goods=goods,
        models=models,
        direct_costs={g: float(v) for g, v in data.get("direct_costs", {}).items()},
        indirect_cost=indirect,
        stocks={g: float(v) for g, v in data.get("stocks", {}).items()},
        box=box,
        routing=routing,
        budget=int(data.get("budget", 100_000)),
        seed=int(data.get("seed", 0)),
        allow_unreliable=bool(data.get("allow_unreliable", False)),
        cost_by_production=bool(data.get("cost_by_production", False)),
        activity_drivers=drivers,
    )


def run_problem(problem: PlanningProblem, budget: int | None = None,
                seed: int | None = None, progress=None) -> OptimizationReport:
    return optimize_plan(
        problem.goods, problem.models, problem.direct_costs,
        problem.indirect_cost, problem.box, stocks=problem.stocks,
        routing=problem.routing,
        budget=budget if budget is not None else problem.budget,
        seed=seed if seed is not None else problem.seed,
        allow_unreliable=problem.allow_unreliable,
        cost_by_production=problem.cost_by_production,
        progress=progress)


def report_to_dict(report: OptimizationReport) -> dict:
    best = None
    if report.best is not None:
        b = report.best
        best = {
            "goods": list(b.goods),
            "prices": list(b.prices),
            "volumes": list(b.volumes),
            "production": list(b.production),
            "stocks": list(b.stocks),
            "direct_costs": list(b.direct_costs),
            "indirect_cost": b.indirect_cost,
            "profit": b.profit,
        }
    return {
        "best": best,
        "samples": report.samples,
        "feasible_fraction": report.feasible_fraction,
        "seed": report.seed,
        "trace": [[n, p] for n, p in report.trace],
    }


def problem_to_dict(problem: PlanningProblem) -> dict:
    """Round-trippable problem description (models inlined)."""
    out = {
        "goods": list(problem.goods),
        "models": {g: model_to_dict(m) for g, m in problem.models.items()},
        "direct_costs": dict(problem.direct_costs),
        "indirect_cost": problem.indirect_cost,
        "stocks": dict(problem.stocks),
        "price_bounds": {g: list(b) for g, b in
                         zip(problem.goods, problem.box.price_bounds)},
        "volume_bounds": {g: [b[0], b[1] if b[1] != float("inf") else 1e18]
                          for g, b in zip(problem.goods, problem.box.volume_bounds)},
        "budget": problem.budget,
        "seed": problem.seed,
        "allow_unreliable": problem.allow_unreliable,
        "cost_by_production": problem.cost_by_production,
    }
    if problem.routing is not None:
        out["routing"] = {
            "durations": {k: [list(row) for row in matrix]
                          for k, matrix in problem.routing.durations.items()},
            "weak_places": [{"goods": list(wp.goods), "time": wp.time,
                             "name": wp.name}
                            for wp in problem.routing.weak_places],
        }
    if problem.activity_drivers:
        out["activity_drivers"] = dict(problem.activity_drivers)
    return out


# ---------------------------------------------------------------------------
# Chain scenarios


def _agreements(raw) -> list[Agreement]:
    out = []
    for item in raw or ():
        if isinstance(item, dict):
            out.append(Agreement(item["counterparty"], item["goods"],
                                 float(item["quantity"])))
        else:
            counterparty, goods, quantity = item
            out.append(Agreement(counterparty, goods, float(quantity)))
    return out


def load_scenario(source, ds: Dataset | None = None,
                  base_dir: Path | None = None) -> tuple[ChainConfig, int, int]:
    """Returns (config, periods, seed)."""
    data = _load_json(source)
    if base_dir is None and not isinstance(source, dict):
        base_dir = Path(source).parent
    try:
        goods = list(data["goods"])
        producer_raw = data["producer"]
        wholesalers_raw = data["wholesalers"]
    except KeyError as exc:
        raise FormatError(f"scenario file misses required field {exc}") from None
    producer = ProducerConfig(
        name=producer_raw.get("name", "producer"),
        stocks={g: float(v) for g, v in producer_raw.get("stocks", {}).items()},
        basic_prices=producer_raw.get("basic_prices", {}),
        direct_costs={g: float(v) for g, v in
                      producer_raw.get("direct_costs", {}).items()},
        indirect_cost=producer_raw.get("indirect_cost", 0.0),
        agreements=_agreements(producer_raw.get("agreements")),
    )
    wholesalers = []
    for w in wholesalers_raw:
        retailers = []
        for r in w.get("retailers", ()):
            retailers.append(RetailerConfig(
                name=r["name"],
                stocks={g: float(v) for g, v in r.get("stocks", {}).items()},
                expenses=r.get("expenses", {}),
                models={g: resolve_model(ref, ds, base_dir)
                        for g, ref in r.get("models", {}).items()},
                grid_step=float(r.get("grid_step", 0.01)),
            ))
        wholesalers.append(WholesalerConfig(
            name=w["name"],
            stocks={g: float(v) for g, v in w.get("stocks", {}).items()},
            prices=w.get("prices", {}),
            expenses=w.get("expenses", {}),
            agreements=_agreements(w.get("agreements")),
            retailers=retailers,
        ))
    config = ChainConfig(goods=goods, producer=producer, wholesalers=wholesalers)
    return config, int(data.get("periods", 1)), int(data.get("seed", 0))


TRAJECTORY_COLUMNS = ("period", "echelon", "role", "record", "goods",
                      "opening", "received", "produced", "sold", "closing",
                      "counterparty", "quantity", "price", "unit_cost",
                      "expenses", "value")


def trajectory_rows(traj: ChainTrajectory) -> list[dict]:
    rows = []
    for snap in traj.snapshots:
        for state in snap.states:
            for goods, flow in sorted(state.flows.items()):
                rows.append({"period": snap.period, "echelon": state.name,
                             "role": state.role, "record": "state",
                             "goods": goods, "opening": flow.opening,
                             "received": flow.received, "produced": flow.produced,
                             "sold": flow.sold, "closing": flow.closing})
        for sh in snap.shipments:
            rows.append({"period": snap.period, "echelon": sh.source,
                         "record": "shipment", "goods": sh.goods,
                         "counterparty": sh.dest, "quantity": sh.quantity,
                         "price": sh.price})
        for e in snap.ledger:
            rows.append({"period": snap.period, "echelon": e.echelon,
                         "role": e.role, "record": "profit",
                         "goods": e.goods or "", "quantity": e.volume,
                         "price": e.sell_price, "unit_cost": e.purchase_price,
                         "expenses": e.expenses, "value": e.profit})
    return rows


def trajectory_csv(traj: ChainTrajectory) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=TRAJECTORY_COLUMNS,
                            lineterminator="\n")
    writer.writeheader()
    for row in trajectory_rows(traj):
        writer.writerow({k: _cell(v) for k, v in row.items()})
    return buf.getvalue()


def _cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


# ---------------------------------------------------------------------------
# Event files: kind,period,subject,magnitude ("k=v;k=v" or empty)


def parse_event_line(values: dict) -> Event:
    kind = (values.get("kind") or "").strip()
    period = Period.parse((values.get("period") or "").strip())
    subject = (values.get("subject") or "-").strip() or "-"
    magnitude = {}
    raw = (values.get("magnitude") or "").strip()
    if raw:
        for pair in raw.split(";"):
            key, _, val = pair.partition("=")
            if not key or not val:
                raise FormatError(f"bad magnitude entry {pair!r}")
            magnitude[key.strip()] = float(val)
    return Event(kind, period, subject, magnitude)


def load_events(path: str | Path) -> list[Event]:
    path = Path(path)
    if not path.is_file():
        raise FormatError(f"event file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for column in ("kind", "period"):
            if column not in (reader.fieldnames or []):
                raise FormatError(f"event file misses column {column!r}")
        return [parse_event_line(row) for row in reader]
