"""Built-in rule conditions: comparisons, arithmetic, dataset aggregates,
model calls, and plan capacity checks.

A built-in either tests a condition (boolean result) or computes a value;
computed values bind the `as` variable, or must equal it when it is
already bound.  Aggregates that match no rows are undefined and fail the
condition rather than binding a default.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass, field
from typing import Mapping

from ..errors import EntplanError
from ..periods import Period
from .engine import BinOp, Call, ColumnRef, Comparison, Var, walk


class BuiltinError(EntplanError):
    pass


@dataclass
class EngineContext:
    """Read-only handles the built-ins may consult."""
    ds: object = None                      # datastore.Dataset
    models: Mapping[str, object] = field(default_factory=dict)
    routing: object = None                 # planner.RoutingTable
    plan: object = None                    # planner.PlanVariant
    own_org: str | None = None

    def own(self) -> str | None:
        if self.own_org:
            return self.own_org
        if self.ds is not None:
            return self.ds.own_org()
        return None


# ---------------------------------------------------------------------------
# Table access for aggregates

_FILTER_FIELDS = {
    "goods": "goods_id",
    "org": "org_id",
    "component": "component_id",
    "buyer": "buyer_id",
    "producer": "producer_id",
    "respondent": "respondent_id",
}

_TABLES = ("logist", "market", "docum", "finres", "debitor", "calcul",
           "character", "surveys", "money", "balans", "tovar")


def _table_rows(ctx: EngineContext, table: str):
    if ctx.ds is None:
        raise BuiltinError("no dataset loaded for aggregate evaluation")
    if table not in _TABLES:
        raise BuiltinError(f"unknown table {table!r}")
    return getattr(ctx.ds, table)


def _matches(rec, filters: list[tuple[str, object]]) -> bool:
    for key, wanted in filters:
        attr = _FILTER_FIELDS.get(key, key)
        if not hasattr(rec, attr):
            raise BuiltinError(f"table rows have no column {key!r}")
        have = getattr(rec, attr)
        if attr == "period":
            period = wanted if isinstance(wanted, Period) else Period(int(wanted))
            if not period.contains(have):
                return False
        elif have != wanted:
            return False
    return True


def _column_values(ctx, table: str, column: str, filters) -> list:
    rows = _table_rows(ctx, table)
    out = []
    for rec in rows:
        if not _matches(rec, filters):
            continue
        if not hasattr(rec, column):
            raise BuiltinError(f"table {table!r} has no column {column!r}")
        value = getattr(rec, column)
        if value is not None:
            out.append(value)
    return out


# ---------------------------------------------------------------------------
# Builtin implementations; value builtins return None when undefined.


def _agg_count(args, filters, ctx):
    table = args[0]
    if isinstance(table, ColumnRef):
        table = table.table
    return float(sum(1 for rec in _table_rows(ctx, table) if _matches(rec, filters)))


def _make_agg(fn):
    def impl(args, filters, ctx):
        ref = args[0]
        if not isinstance(ref, ColumnRef):
            raise BuiltinError("aggregate needs a table.column argument")
        values = _column_values(ctx, ref.table, ref.column, filters)
        if not values:
            return None
        return float(fn(values))
    return impl


def _share(args, filters, ctx):
    goods, period = args
    period = period if isinstance(period, Period) else Period(int(period))
    own = ctx.own()
    values = [r.share for r in _table_rows(ctx, "market")
              if r.goods_id == goods and r.share is not None
              and period.contains(r.period)
              and (own is None or r.org_id == own)]
    if not values:
        return None
    return float(sum(values) / len(values))


def _share_previous(args, filters, ctx):
    goods, period = args
    period = period if isinstance(period, Period) else Period(int(period))
    return _share((goods, period.previous()), filters, ctx)


def _previous_period(args, filters, ctx):
    period = args[0]
    if not isinstance(period, Period):
        period = Period(int(period))
    return period.previous()


def _char_value(args, filters, ctx):
    goods, name = args
    for c in _table_rows(ctx, "character"):
        if c.goods_id == goods and c.name == name and c.kind == "numeric":
            return float(c.value)
    return None


def _char_text(args, filters, ctx):
    goods, name = args
    for c in _table_rows(ctx, "character"):
        if c.goods_id == goods and c.name == name and c.kind == "category":
            return c.value
    return None


def _class_median(args, filters, ctx):
    goods_class, name = args
    members = {g.id for g in _table_rows(ctx, "tovar") if g.goods_class == goods_class}
    values = [float(c.value) for c in _table_rows(ctx, "character")
              if c.goods_id in members and c.name == name and c.kind == "numeric"]
    if not values:
        return None
    return float(statistics.median(values))


def _prime_cost(args, filters, ctx):
    goods = args[0]
    rows = [r for r in _table_rows(ctx, "calcul") if r.goods_id == goods]
    if not rows:
        return None
    return float(sum(r.unit_cost for r in rows))


def _predict(args, filters, ctx):
    from ..demand import predict_volume

    name, price = args
    model = ctx.models.get(name)
    if model is None:
        raise BuiltinError(f"unknown demand model {name!r}")
    return float(predict_volume(model, float(price))[0])


def _reliable(args, filters, ctx):
    from ..demand import reliability_check

    model = ctx.models.get(args[0])
    if model is None:
        raise BuiltinError(f"unknown demand model {args[0]!r}")
    if model.diagnostics is None:
        return True
    return reliability_check(model).reliable


def _weak_place_feasible(args, filters, ctx):
    from ..planner import bottleneck_durations, weak_place_feasible

    if ctx.routing is None or ctx.plan is None:
        raise BuiltinError("weak_place_feasible needs a routing table and a plan")
    index = int(args[0])
    if not 1 <= index <= len(ctx.routing.weak_places):
        raise BuiltinError(f"no weak place {index}")
    wp = ctx.routing.weak_places[index - 1]
    taus = bottleneck_durations(ctx.routing)
    position = {g: i for i, g in enumerate(ctx.plan.goods)}
    group = [g for g in wp.goods if g in position]
    ok, _ = weak_place_feasible([taus[g] for g in group],
                                [ctx.plan.production[position[g]] for g in group],
                                wp.time)
    return ok


def _component_in_routing(args, filters, ctx):
    component = args[0]
    return any(r.component_id == component for r in _table_rows(ctx, "calcul"))


BUILTINS = {
    "count": _agg_count,
    "sum": _make_agg(sum),
    "avg": _make_agg(lambda xs: sum(xs) / len(xs)),
    "min": _make_agg(min),
    "max": _make_agg(max),
    "share": _share,
    "share_previous": _share_previous,
    "previous_period": _previous_period,
    "char_value": _char_value,
    "char_text": _char_text,
    "class_median": _class_median,
    "prime_cost": _prime_cost,
    "predict": _predict,
    "reliable": _reliable,
    "weak_place_feasible": _weak_place_feasible,
    "component_in_routing": _component_in_routing,
}

BUILTIN_NAMES = set(BUILTINS)

_COMPARATORS = {
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    "=": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    ">=": lambda a, b: a >= b,
    ">": lambda a, b: a > b,
}

_ARITHMETIC = {
    "+": lambda a, b: a + b,
    "-": lambda a, b: a - b,
    "*": lambda a, b: a * b,
    "/": lambda a, b: a / b,
}


def _eval_expr(expr, bindings, ctx):
    """Evaluate a term/BinOp/Call expression; None marks an undefined value."""
    expr = walk(expr, bindings)
    if isinstance(expr, Var):
        raise BuiltinError(f"unbound variable ?{expr.name}")
    if isinstance(expr, BinOp):
        left = _eval_expr(expr.left, bindings, ctx)
        right = _eval_expr(expr.right, bindings, ctx)
        if left is None or right is None:
            return None
        try:
            return _ARITHMETIC[expr.op](left, right)
        except ZeroDivisionError:
            return None
    if isinstance(expr, Call):
        return _eval_call(expr, bindings, ctx)
    return expr


def _eval_call(call: Call, bindings, ctx):
    fn = BUILTINS.get(call.func)
    if fn is None:
        raise BuiltinError(f"unknown built-in {call.func!r}")
    args = []
    for a in call.args:
        if isinstance(a, ColumnRef):
            args.append(a)
        else:
            args.append(_eval_expr(a, bindings, ctx))
    filters = [(k, _eval_expr(v, bindings, ctx)) for k, v in call.filters]
    return fn(tuple(args), filters, ctx)


def evaluate_builtin(condition, bindings: dict, ctx: EngineContext | None
                     ) -> tuple[bool, dict]:
    """Evaluate a Comparison or Call under the bindings.

    Returns (holds, bindings); a Call with an `as` variable extends the
    bindings on success.  Undefined values (empty aggregates, missing
    characteristics) make the condition fail.
    """
    ctx = ctx if ctx is not None else EngineContext()
    if isinstance(condition, Comparison):
        left = _eval_expr(condition.lhs, bindings, ctx)
        right = _eval_expr(condition.rhs, bindings, ctx)
        if left is None or right is None:
            return False, bindings
        if isinstance(left, Period) and isinstance(right, Period):
            left, right = left.sort_key(), right.sort_key()
        if condition.op not in ("=", "!=") and (
                isinstance(left, str) != isinstance(right, str)):
            return False, bindings
        try:
            return bool(_COMPARATORS[condition.op](left, right)), bindings
        except TypeError:
            raise BuiltinError(
                f"cannot compare {left!r} and {right!r} with {condition.op}") from None
    if isinstance(condition, Call):
        value = _eval_call(condition, bindings, ctx)
        if condition.bind is None:
            if isinstance(value, bool):
                return value, bindings
            return value is not None, bindings
        if value is None:
            return False, bindings
        bound = walk(condition.bind, bindings)
        if isinstance(bound, Var):
            new = dict(bindings)
            new[bound] = value
            return True, new
        return bound == value, bindings
    raise BuiltinError(f"unsupported condition {condition!r}")


def render_condition(condition, bindings) -> str:
    """Human-readable form of an evaluated condition for proof trees."""
    def show(term):
        term = walk(term, bindings)
        if isinstance(term, Var):
            return f"?{term.name.split('#')[0]}"
        if isinstance(term, ColumnRef):
            return f"{term.table}.{term.column}"
        if isinstance(term, BinOp):
            return f"{show(term.left)} {term.op} {show(term.right)}"
        if isinstance(term, Call):
            inner = [show(a) for a in term.args]
            inner += [f"{k} = {show(v)}" for k, v in term.filters]
            return f"{term.func}({', '.join(inner)})"
        if isinstance(term, float) and term.is_integer():
            return str(int(term))
        return str(term)

    if isinstance(condition, Comparison):
        return f"{show(condition.lhs)} {condition.op} {show(condition.rhs)}"
    if isinstance(condition, Call):
        text = show(Call(condition.func, condition.args, condition.filters))
        if condition.bind is not None:
            text += f" as {show(condition.bind)}"
        return text
    return str(condition)
