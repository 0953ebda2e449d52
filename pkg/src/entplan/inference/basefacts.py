"""Ground facts extracted from the dataset for the rule engine.

Predicates:
    period(P)                       known quarters plus their years
    goods(G) / goods_name(G, Name) / goods_kind(G, Kind) / goods_class(G, C)
    org(O) / org_name(O, Name) / org_kind(O, Kind)
    uses_component(G, C, UnitCost)  component purchases per product
    operation_time(G, Op, Duration, Norm)  pure operations with a norm
    characteristic(G, Name, Value)  numeric characteristics
    characteristic_text(G, Name, Value)  categorical characteristics
"""

from __future__ import annotations

from ..datastore import Dataset
from ..periods import Period
from .engine import Fact


def dataset_facts(ds: Dataset) -> tuple[Fact, ...]:
    facts: list[Fact] = []
    years = {p.year for p in ds.periods()}
    for p in ds.periods():
        facts.append(Fact("period", (p,)))
    for y in sorted(years):
        facts.append(Fact("period", (Period(y),)))
    for g in ds.tovar:
        facts.append(Fact("goods", (g.id,)))
        facts.append(Fact("goods_name", (g.id, g.name)))
        facts.append(Fact("goods_kind", (g.id, g.kind)))
        if g.goods_class:
            facts.append(Fact("goods_class", (g.id, g.goods_class)))
    for org_id, rec in ds.orgs().items():
        facts.append(Fact("org", (org_id,)))
        facts.append(Fact("org_name", (org_id, rec.name or org_id)))
        facts.append(Fact("org_kind", (org_id, rec.kind)))
    for r in ds.calcul:
        if r.component_id:
            facts.append(Fact("uses_component", (r.goods_id, r.component_id,
                                                 float(r.unit_cost))))
        elif r.norm is not None:
            facts.append(Fact("operation_time", (r.goods_id, r.operation,
                                                 float(r.duration), float(r.norm))))
    for c in ds.character:
        if c.kind == "numeric":
            facts.append(Fact("characteristic", (c.goods_id, c.name, float(c.value))))
        else:
            facts.append(Fact("characteristic_text", (c.goods_id, c.name, c.value)))
    return tuple(facts)
