"""Answer composition: routes a parsed question to the analysis machinery
and assembles explanation lines with their supporting proofs.

Cause analysis and recommendations go through backward chaining over the
rule library; metric lookups read the financial statements; rankings,
complaints, bargain prospecting, and best-characteristics summaries are
computed straight from the dataset with aggregate proof nodes standing in
for rule firings.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass, field

import numpy as np

from .chainsim import PurchaseContext, industrial_sales_forecast
from .datastore import Dataset, query_sales, statement_lookup
from .demand import FitError, characteristic_significance, complaint_summary
from .errors import EntplanError
from .inference import (AnswerReport, Atom, EngineContext, ProofNode, RuleSet,
                        Var, backward_chain, dataset_facts)
from .periods import Period
from .queryparser import QueryAST

TOP_SALES_QUANTILE = 75  # best-characteristics summarizes the top sales quartile
DISCOUNT_TOLERANCE = 0.9  # one price reduction is taken as a 10% concession


class AnswerError(EntplanError):
    pass


class UnknownEntityError(AnswerError):
    pass


@dataclass(frozen=True)
class QueryAnswer:
    status: str                      # ok | insufficient-data
    ast: QueryAST
    lines: tuple[str, ...] = ()
    line_proofs: tuple[int, ...] = ()
    proofs: tuple[ProofNode, ...] = ()
    data: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        from .inference.engine import _proof_dict

        return {
            "status": self.status,
            "intent": self.ast.intent,
            "lines": [{"text": t, "proof": p}
                      for t, p in zip(self.lines, self.line_proofs)],
            "proofs": [_proof_dict(p) for p in self.proofs],
            "data": self.data,
        }


# ---------------------------------------------------------------------------
# Entity resolution against the dataset dictionary


def resolve_goods(ds: Dataset, ref: str) -> str:
    by_id = ds.goods_by_id()
    if ref in by_id:
        return ref
    lowered = ref.lower()
    for g in ds.tovar:
        if g.name.lower() == lowered or g.id.lower() == lowered:
            return g.id
    raise UnknownEntityError(f"unknown goods {ref!r}")


def resolve_org(ds: Dataset, ref: str) -> str:
    orgs = ds.orgs()
    if ref in orgs:
        return ref
    lowered = ref.lower()
    for org_id, rec in orgs.items():
        if org_id.lower() == lowered or rec.name.lower() == lowered:
            return org_id
    raise UnknownEntityError(f"unknown organization {ref!r}")


def resolve_class(ds: Dataset, ref: str) -> str:
    classes = {g.goods_class for g in ds.tovar if g.goods_class}
    if ref in classes:
        return ref
    lowered = ref.lower()
    for c in classes:
        if c.lower() == lowered:
            return c
    raise UnknownEntityError(f"unknown goods class {ref!r}")


def _dataset_empty(ds: Dataset) -> bool:
    return not (ds.logist or ds.finres or ds.docum or ds.market)


def _period_has_data(ds: Dataset, period: Period) -> bool:
    for table in (ds.logist, ds.finres, ds.market, ds.docum):
        for rec in table:
            if period.contains(rec.period):
                return True
    return False


def _aggregate_proof(label: str) -> ProofNode:
    return ProofNode("builtin", label, None, None, (), ())


def _insufficient(ast: QueryAST, note: str) -> QueryAnswer:
    return QueryAnswer("insufficient-data", ast, (note,), (0,),
                       (_aggregate_proof(note),), {})


# ---------------------------------------------------------------------------
# Dispatch


def answer(ast: QueryAST, ds: Dataset, rules: RuleSet,
           ctx: EngineContext | None = None, max_proofs: int = 100) -> QueryAnswer:
    """Answer a parsed question against the dataset and rule library."""
    ctx = ctx if ctx is not None else EngineContext(ds=ds)
    if _dataset_empty(ds):
        return _insufficient(ast, "insufficient data: the dataset is empty")
    handler = {
        "cause-analysis": _answer_cause,
        "recommendation": _answer_recommendation,
        "metric-lookup": _answer_lookup,
        "characteristic-ranking": _answer_ranking,
        "complaint-listing": _answer_complaints,
        "bargain-prospecting": _answer_bargains,
        "best-characteristics": _answer_best,
    }[ast.intent]
    return handler(ast, ds, rules, ctx, max_proofs)


def _from_report(ast: QueryAST, report: AnswerReport) -> QueryAnswer:
    return QueryAnswer("ok", ast, report.lines, report.line_proofs,
                       report.proofs,
                       {"conclusions": [str(c) for c in report.conclusions],
                        "truncated": report.truncated})


def _answer_cause(ast, ds, rules, ctx, max_proofs):
    if not _period_has_data(ds, ast.period):
        return _insufficient(ast, f"insufficient data: no records for {ast.period}")
    metric = "sales" if ast.subject == "income" else ast.subject
    goal = Atom("cause", (metric, ast.direction, ast.period, Var("C"), Var("S")))
    report = backward_chain(goal, rules, dataset_facts(ds), ctx, max_proofs)
    return _from_report(ast, report)


def _answer_recommendation(ast, ds, rules, ctx, max_proofs):
    if not _period_has_data(ds, ast.period):
        return _insufficient(ast, f"insufficient data: no records for {ast.period}")
    goal = Atom("recommend", (ast.subject, ast.period, Var("A"), Var("G")))
    report = backward_chain(goal, rules, dataset_facts(ds), ctx, max_proofs)
    return _from_report(ast, report)


_STATEMENT_FIELDS = {
    "profit": "profit",
    "cost": "cost",
    "income": "revenue",
    "cash-flow": "cash_flow",
    "accounts-receivable": "accounts_receivable",
}


def _answer_lookup(ast, ds, rules, ctx, max_proofs):
    org = ds.own_org() if ast.scope == "own" else resolve_org(ds, ast.scope)
    if org is None:
        raise UnknownEntityError("the dataset declares no own organization")
    display = ds.orgs()[org].name or org
    if ast.subject == "sales":
        rows = [r for r in query_sales(ds) if ast.period.contains(r.period)]
        total = sum(r.volume * r.price for r in rows
                    if ast.scope == "own" or r.buyer_id == org)
        if not rows:
            return _insufficient(ast, f"insufficient data: no sales in {ast.period}")
        label = f"sum(logist.volume * logist.price, period = {ast.period})"
        line = f"sales of {display} in {ast.period} total {total:g}"
        return QueryAnswer("ok", ast, (line,), (0,), (_aggregate_proof(label),),
                           {"metric": "sales", "org": org,
                            "period": str(ast.period), "value": total})
    values = []
    for quarter in ast.period.quarters():
        rec = statement_lookup(ds, org, quarter)
        if rec is not None:
            values.append(getattr(rec, _STATEMENT_FIELDS[ast.subject]))
    if not values:
        return _insufficient(
            ast, f"insufficient data: no financial statement for {display} "
                 f"in {ast.period}")
    total = sum(values)
    label = f"finres.{_STATEMENT_FIELDS[ast.subject]} (org = {org}, period = {ast.period})"
    line = f"{ast.subject.replace('-', ' ')} of {display} in {ast.period} is {total:g}"
    return QueryAnswer("ok", ast, (line,), (0,), (_aggregate_proof(label),),
                       {"metric": ast.subject, "org": org,
                        "period": str(ast.period), "value": total})


def _answer_ranking(ast, ds, rules, ctx, max_proofs):
    goods = resolve_goods(ds, ast.subject)
    try:
        entries = characteristic_significance(ds, goods)
    except FitError as exc:
        return _insufficient(ast, f"insufficient data: {exc}")
    lines, proofs, line_proofs, data = [], [], [], []
    for e in entries:
        if e.kind == "numeric":
            lines.append(f"{e.characteristic}: correlation with sale volume "
                         f"{e.correlation:+.3f}")
            label = f"pearson(characteristic {e.characteristic!r}, volume)"
        else:
            ratio = "inf" if e.variance_ratio == float("inf") else f"{e.variance_ratio:.3f}"
            lines.append(f"{e.characteristic}: variance ratio across groups {ratio}")
            label = f"variance_ratio(characteristic {e.characteristic!r}, volume)"
        proofs.append(_aggregate_proof(label))
        line_proofs.append(len(proofs) - 1)
        ratio = e.variance_ratio
        if ratio is not None and ratio == float("inf"):
            ratio = None  # JSON-safe: an exact group split has no finite ratio
        data.append({"characteristic": e.characteristic, "kind": e.kind,
                     "correlation": e.correlation, "variance_ratio": ratio})
    return QueryAnswer("ok", ast, tuple(lines), tuple(line_proofs),
                       tuple(proofs), {"goods": goods, "entries": data})


def _answer_complaints(ast, ds, rules, ctx, max_proofs):
    goods = resolve_goods(ds, ast.subject)
    topics = (ast.topic,) if ast.topic else ("quality", "service", "delivery", "price")
    lines, proofs, line_proofs, items = [], [], [], []
    for topic in topics:
        for entry in complaint_summary(ds, goods, topic):
            status = "action taken" if entry.action_taken else "no action yet"
            lines.append(f"[{topic}] {entry.excerpt} ({status})")
            proofs.append(_aggregate_proof(
                f"docum row {entry.document_id} (negative, topic = {topic})"))
            line_proofs.append(len(proofs) - 1)
            items.append({"document": entry.document_id, "topic": topic,
                          "excerpt": entry.excerpt,
                          "action_taken": entry.action_taken})
    if not lines:
        lines = [f"no negative documents for {ast.subject}"]
        proofs = [_aggregate_proof("docum scan: no matching rows")]
        line_proofs = [0]
    return QueryAnswer("ok", ast, tuple(lines), tuple(line_proofs),
                       tuple(proofs), {"goods": goods, "complaints": items})


def derive_purchase_contexts(ds: Dataset, goods_id: str
                             ) -> list[tuple[str, PurchaseContext]]:
    """Build one negotiation context per candidate buyer from the dataset.

    Candidates are organizations of kind `buyer`.  Signals: purchases of
    same-class goods (demands fit), repeat purchases of an analogous goods
    (existing arrangement), that buyer's negative delivery/quality
    documents on the analogous goods, overdue receivables (reliability),
    the goods' adaptable/price_flexible flags, and the buyer's historical
    average price against the goods' list price.
    """
    goods = ds.goods_by_id()[goods_id]
    same_class = {g.id for g in ds.tovar if g.goods_class == goods.goods_class}
    analogous = same_class - {goods_id}
    out = []
    for org_id, rec in sorted(ds.orgs().items()):
        if rec.kind != "buyer":
            continue
        purchases = [r for r in ds.logist if r.buyer_id == org_id
                     and r.goods_id in same_class]
        analog_periods = {r.period for r in purchases if r.goods_id in analogous}
        problems = any(d.org_id == org_id and d.goods_id in analogous
                       and d.sentiment == "negative"
                       and d.topic in ("delivery", "quality") for d in ds.docum)
        overdue = any(r.org_id == org_id and r.overdue for r in ds.debitor)
        # Agreement is judged per visit: at the list price from the buyer's
        # paid-price history, then once more after a 10% concession; buyers
        # without a history are assumed open to a reduced offer.
        if goods.list_price is None:
            agrees: bool | tuple = True
        elif purchases:
            mean_paid = sum(r.price for r in purchases) / len(purchases)
            if mean_paid >= goods.list_price:
                agrees = True
            else:
                agrees = (False, mean_paid >= DISCOUNT_TOLERANCE * goods.list_price)
        else:
            agrees = (False, True)
        out.append((org_id, PurchaseContext(
            meets_demands=bool(purchases),
            has_arrangement=len(analog_periods) >= 2,
            can_adapt=goods.adaptable,
            delivery_quality_problems=problems,
            reliable_client=not overdue,
            agrees_price=agrees,
            seller_lowers_price=goods.price_flexible,
            max_rounds=1,
        )))
    return out


def _answer_bargains(ast, ds, rules, ctx, max_proofs):
    goods = resolve_goods(ds, ast.subject)
    contexts = derive_purchase_contexts(ds, goods)
    forecast = industrial_sales_forecast([c for _, c in contexts])
    lines = [f"{forecast.concluded} of {len(contexts)} candidate buyers "
             f"could conclude a bargain for {ast.subject}"]
    proofs = [_aggregate_proof("purchase algorithm over balans buyers")]
    line_proofs = [0]
    buyers = []
    for (org_id, _), outcome in zip(contexts, forecast.outcomes):
        verdict = "bargain can be concluded" if outcome.concluded \
            else "bargain is not concluded"
        lines.append(f"buyer {org_id}: {verdict}")
        proofs.append(_aggregate_proof(
            f"purchase steps {','.join(str(x) for x in outcome.trace)}"))
        line_proofs.append(len(proofs) - 1)
        buyers.append({"org": org_id, "concluded": outcome.concluded,
                       "trace": list(outcome.trace)})
    return QueryAnswer("ok", ast, tuple(lines), tuple(line_proofs),
                       tuple(proofs), {"goods": goods,
                                       "concluded": forecast.concluded,
                                       "buyers": buyers})


def best_characteristics(ds: Dataset, goods_class: str, period: Period
                         ) -> list[dict]:
    """Mode/median characteristic values over the class's top sales quartile."""
    members = [g.id for g in ds.tovar
               if g.goods_class == goods_class and g.kind == "product"]
    volumes: dict[str, float] = {}
    for r in ds.logist:
        if r.goods_id in members and period.contains(r.period):
            volumes[r.goods_id] = volumes.get(r.goods_id, 0.0) + r.volume
    if not volumes:
        return []
    threshold = float(np.percentile(sorted(volumes.values()), TOP_SALES_QUANTILE))
    top = {g for g, v in volumes.items() if v >= threshold}
    order: list[str] = []
    by_char: dict[str, list] = {}
    units: dict[str, str] = {}
    kinds: dict[str, str] = {}
    for c in ds.character:
        if c.goods_id in top:
            if c.name not in by_char:
                order.append(c.name)
                units[c.name] = c.unit
                kinds[c.name] = c.kind
            by_char.setdefault(c.name, []).append(c.value)
    out = []
    for name in order:
        values = by_char[name]
        if kinds[name] == "numeric":
            value = float(statistics.median(values))
        else:
            counts: dict[str, int] = {}
            for v in values:
                counts[v] = counts.get(v, 0) + 1
            best_count = max(counts.values())
            value = sorted(v for v, n in counts.items() if n == best_count)[0]
        out.append({"characteristic": name, "value": value,
                    "unit": units[name], "kind": kinds[name]})
    return out


def _show_value(value) -> str:
    if isinstance(value, float) and value.is_integer():
        return str(int(value))
    return str(value)


def _answer_best(ast, ds, rules, ctx, max_proofs):
    goods_class = resolve_class(ds, ast.subject)
    entries = best_characteristics(ds, goods_class, ast.period)
    if not entries:
        return _insufficient(
            ast, f"insufficient data: no {goods_class} sales in {ast.period}")
    lines, proofs, line_proofs = [], [], []
    for e in entries:
        text = f"{e['characteristic']} is {_show_value(e['value'])}"
        if e["unit"]:
            text += f" {e['unit']}"
        lines.append(text)
        stat = "median" if e["kind"] == "numeric" else "mode"
        proofs.append(_aggregate_proof(
            f"{stat}({e['characteristic']!r}) over top sales quartile of "
            f"{goods_class} in {ast.period}"))
        line_proofs.append(len(proofs) - 1)
    return QueryAnswer("ok", ast, tuple(lines), tuple(line_proofs),
                       tuple(proofs), {"class": goods_class,
                                       "characteristics": entries})
