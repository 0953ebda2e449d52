"""Enterprise dataset: loading, validation, and lookups.

Eleven comma-separated files (nine required, two optional) describe an
enterprise and its market: balances, funds movement, financial results,
sales/logistics, documents, goods, goods characteristics, production
operations, receivables, plus optional consumer surveys and competitor
market records.  Exact columns are documented in docs/schema.md.

The loaded Dataset is immutable; every query returns the loaded record
objects themselves, never synthesized copies.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable, Sequence

from .errors import EntplanError
from .periods import Period, PeriodError

CHANNELS = ("retail", "wholesale", "direct")
SENTIMENTS = ("positive", "negative", "neutral")
TOPICS = ("quality", "service", "delivery", "price")
DOC_KINDS = ("complaint", "review", "action", "note")
GOODS_KINDS = ("product", "component")
ORG_KINDS = ("own", "branch", "competitor", "buyer", "wholesaler", "retailer", "partner")

PROFIT_IDENTITY_TOL = 0.01  # |profit - (revenue - cost)| allowed in finres rows


class DatasetError(EntplanError):
    def __init__(self, message: str, *, table: str | None = None,
                 row: int | None = None, column: str | None = None):
        self.table = table
        self.row = row
        self.column = column
        where = table or ""
        if row is not None:
            where += f" row {row}"
        if column:
            where += f" column {column!r}"
        super().__init__(f"{where}: {message}" if where else message)


class MissingTableError(DatasetError):
    pass


class MissingColumnError(DatasetError):
    pass


class DuplicateKeyError(DatasetError):
    pass


class ForeignKeyError(DatasetError):
    pass


class InvalidValueError(DatasetError):
    pass


# ---------------------------------------------------------------------------
# Record types


@dataclass(frozen=True)
class GoodsRecord:
    id: str
    name: str
    kind: str           # product | component
    goods_class: str    # free classification, may be empty
    unit: str
    list_price: float | None
    adaptable: bool
    price_flexible: bool


@dataclass(frozen=True)
class CharacteristicRecord:
    id: str
    goods_id: str
    name: str
    kind: str           # numeric | category
    value: float | str
    unit: str


@dataclass(frozen=True)
class SaleRecord:
    id: str
    goods_id: str
    buyer_id: str
    producer_id: str
    volume: float
    price: float
    period: Period
    channel: str
    region: str


@dataclass(frozen=True)
class DocumentRecord:
    id: str
    goods_id: str
    org_id: str
    period: Period
    kind: str
    sentiment: str
    topic: str
    text: str
    ref_id: str         # for kind=action: the document it answers


@dataclass(frozen=True)
class OperationRecord:
    id: str
    goods_id: str
    operation: str
    component_id: str   # empty for pure operations (no component consumed)
    duration: float
    norm: float | None
    unit_cost: float


@dataclass(frozen=True)
class BalanceRecord:
    id: str
    org_id: str
    name: str
    kind: str
    period: Period
    assets: float
    liabilities: float


@dataclass(frozen=True)
class MoneyRecord:
    id: str
    org_id: str
    period: Period
    inflow: float
    outflow: float


@dataclass(frozen=True)
class FinancialStatement:
    id: str
    org_id: str
    period: Period
    revenue: float
    cost: float
    profit: float
    cash_flow: float
    accounts_receivable: float


@dataclass(frozen=True)
class ReceivableRecord:
    id: str
    org_id: str
    period: Period
    amount: float
    overdue: bool


@dataclass(frozen=True)
class SurveyRecord:
    id: str
    respondent_id: str
    goods_id: str
    stated_value: float


@dataclass(frozen=True)
class MarketRecord:
    id: str
    goods_id: str
    org_id: str
    period: Period
    price: float
    share: float | None


@dataclass(frozen=True)
class Dataset:
    tovar: tuple[GoodsRecord, ...] = ()
    character: tuple[CharacteristicRecord, ...] = ()
    logist: tuple[SaleRecord, ...] = ()
    docum: tuple[DocumentRecord, ...] = ()
    calcul: tuple[OperationRecord, ...] = ()
    balans: tuple[BalanceRecord, ...] = ()
    money: tuple[MoneyRecord, ...] = ()
    finres: tuple[FinancialStatement, ...] = ()
    debitor: tuple[ReceivableRecord, ...] = ()
    surveys: tuple[SurveyRecord, ...] = ()
    market: tuple[MarketRecord, ...] = ()

    def row_counts(self) -> dict[str, int]:
        return {f.name: len(getattr(self, f.name)) for f in fields(self)}

    def goods_ids(self) -> set[str]:
        return {g.id for g in self.tovar}

    def goods_by_id(self) -> dict[str, GoodsRecord]:
        return {g.id: g for g in self.tovar}

    def org_ids(self) -> set[str]:
        return {b.org_id for b in self.balans}

    def orgs(self) -> dict[str, BalanceRecord]:
        """One representative balance row per organization (first occurrence)."""
        out: dict[str, BalanceRecord] = {}
        for b in self.balans:
            out.setdefault(b.org_id, b)
        return out

    def own_org(self) -> str | None:
        for b in self.balans:
            if b.kind == "own":
                return b.org_id
        return None

    def periods(self) -> tuple[Period, ...]:
        seen: dict[Period, None] = {}
        for table in (self.logist, self.finres, self.market, self.docum, self.money):
            for rec in table:
                seen.setdefault(rec.period, None)
        return tuple(sorted(seen, key=Period.sort_key))


# ---------------------------------------------------------------------------
# Loading


class _Row:
    """One CSV row with typed accessors that report table/row/column on failure."""

    def __init__(self, table: str, line: int, values: dict[str, str]):
        self.table = table
        self.line = line
        self.values = values

    def _fail(self, column: str, message: str) -> InvalidValueError:
        return InvalidValueError(message, table=self.table, row=self.line, column=column)

    def raw(self, column: str) -> str:
        return (self.values.get(column) or "").strip()

    def str(self, column: str, required: bool = True) -> str:
        v = self.raw(column)
        if required and not v:
            raise self._fail(column, "value required")
        return v

    def enum(self, column: str, choices: Sequence[str], required: bool = True) -> str:
        v = self.raw(column)
        if not v and not required:
            return ""
        if v not in choices:
            raise self._fail(column, f"expected one of {', '.join(choices)}, got {v!r}")
        return v

    def float(self, column: str, *, required: bool = True,
              minimum: float | None = None, strict_min: bool = False) -> float | None:
        v = self.raw(column)
        if not v:
            if required:
                raise self._fail(column, "numeric value required")
            return None
        try:
            x = float(v)
        except ValueError:
            raise self._fail(column, f"not a number: {v!r}") from None
        if not math.isfinite(x):
            raise self._fail(column, f"not finite: {v!r}")
        if minimum is not None:
            if strict_min and x <= minimum:
                raise self._fail(column, f"must be > {minimum}, got {x}")
            if not strict_min and x < minimum:
                raise self._fail(column, f"must be >= {minimum}, got {x}")
        return x

    def flag(self, column: str) -> bool:
        v = self.raw(column)
        if v in ("", "0"):
            return False
        if v == "1":
            return True
        raise self._fail(column, f"expected 0 or 1, got {v!r}")

    def period(self, column: str, quarter_required: bool = True) -> Period:
        v = self.str(column)
        try:
            p = Period.parse(v)
        except PeriodError as exc:
            raise self._fail(column, str(exc)) from None
        if quarter_required and not p.is_quarter:
            raise self._fail(column, f"quarterly period required, got {v!r}")
        return p


_COLUMNS = {
    "tovar": ["id", "name", "kind", "class", "unit", "list_price", "adaptable", "price_flexible"],
    "character": ["id", "goods_id", "name", "kind", "value", "unit"],
    "logist": ["id", "goods_id", "buyer_id", "producer_id", "volume", "price", "period", "channel", "region"],
    "docum": ["id", "goods_id", "org_id", "period", "kind", "sentiment", "topic", "text", "ref_id"],
    "calcul": ["id", "goods_id", "operation", "component_id", "duration", "norm", "unit_cost"],
    "balans": ["id", "org_id", "name", "kind", "period", "assets", "liabilities"],
    "money": ["id", "org_id", "period", "inflow", "outflow"],
    "finres": ["id", "org_id", "period", "revenue", "cost", "profit", "cash_flow", "accounts_receivable"],
    "debitor": ["id", "org_id", "period", "amount", "overdue"],
    "surveys": ["id", "respondent_id", "goods_id", "stated_value"],
    "market": ["id", "goods_id", "org_id", "period", "price", "share"],
}

REQUIRED_TABLES = ("balans", "money", "finres", "logist", "docum",
                   "tovar", "character", "calcul", "debitor")
OPTIONAL_TABLES = ("surveys", "market")


def _parse_tovar(r: _Row) -> GoodsRecord:
    return GoodsRecord(
        id=r.str("id"),
        name=r.str("name"),
        kind=r.enum("kind", GOODS_KINDS),
        goods_class=r.raw("class"),
        unit=r.raw("unit"),
        list_price=r.float("list_price", required=False, minimum=0.0, strict_min=True),
        adaptable=r.flag("adaptable"),
        price_flexible=r.flag("price_flexible"),
    )


def _parse_character(r: _Row) -> CharacteristicRecord:
    kind = r.enum("kind", ("numeric", "category"))
    value: float | str
    if kind == "numeric":
        value = r.float("value")
    else:
        value = r.str("value")
    return CharacteristicRecord(
        id=r.str("id"), goods_id=r.str("goods_id"), name=r.str("name"),
        kind=kind, value=value, unit=r.raw("unit"),
    )


def _parse_logist(r: _Row) -> SaleRecord:
    return SaleRecord(
        id=r.str("id"),
        goods_id=r.str("goods_id"),
        buyer_id=r.raw("buyer_id"),
        producer_id=r.raw("producer_id"),
        volume=r.float("volume", minimum=0.0, strict_min=True),
        price=r.float("price", minimum=0.0, strict_min=True),
        period=r.period("period"),
        channel=r.enum("channel", CHANNELS),
        region=r.raw("region"),
    )


def _parse_docum(r: _Row) -> DocumentRecord:
    return DocumentRecord(
        id=r.str("id"),
        goods_id=r.str("goods_id"),
        org_id=r.raw("org_id"),
        period=r.period("period"),
        kind=r.enum("kind", DOC_KINDS),
        sentiment=r.enum("sentiment", SENTIMENTS),
        topic=r.enum("topic", TOPICS),
        text=r.raw("text"),
        ref_id=r.raw("ref_id"),
    )


def _parse_calcul(r: _Row) -> OperationRecord:
    return OperationRecord(
        id=r.str("id"),
        goods_id=r.str("goods_id"),
        operation=r.str("operation"),
        component_id=r.raw("component_id"),
        duration=r.float("duration", minimum=0.0),
        norm=r.float("norm", required=False, minimum=0.0),
        unit_cost=r.float("unit_cost", required=False, minimum=0.0) or 0.0,
    )


def _parse_balans(r: _Row) -> BalanceRecord:
    return BalanceRecord(
        id=r.str("id"),
        org_id=r.str("org_id"),
        name=r.raw("name"),
        kind=r.enum("kind", ORG_KINDS),
        period=r.period("period"),
        assets=r.float("assets"),
        liabilities=r.float("liabilities"),
    )


def _parse_money(r: _Row) -> MoneyRecord:
    return MoneyRecord(
        id=r.str("id"), org_id=r.str("org_id"), period=r.period("period"),
        inflow=r.float("inflow", minimum=0.0),
        outflow=r.float("outflow", minimum=0.0),
    )


def _parse_finres(r: _Row) -> FinancialStatement:
    rec = FinancialStatement(
        id=r.str("id"),
        org_id=r.str("org_id"),
        period=r.period("period"),
        revenue=r.float("revenue"),
        cost=r.float("cost"),
        profit=r.float("profit"),
        cash_flow=r.float("cash_flow"),
        accounts_receivable=r.float("accounts_receivable"),
    )
    if abs(rec.profit - (rec.revenue - rec.cost)) > PROFIT_IDENTITY_TOL:
        raise InvalidValueError(
            f"profit {rec.profit} does not match revenue - cost = {rec.revenue - rec.cost}",
            table=r.table, row=r.line, column="profit")
    return rec


def _parse_debitor(r: _Row) -> ReceivableRecord:
    return ReceivableRecord(
        id=r.str("id"), org_id=r.str("org_id"), period=r.period("period"),
        amount=r.float("amount", minimum=0.0),
        overdue=r.flag("overdue"),
    )


def _parse_surveys(r: _Row) -> SurveyRecord:
    return SurveyRecord(
        id=r.str("id"), respondent_id=r.str("respondent_id"),
        goods_id=r.str("goods_id"), stated_value=r.float("stated_value"),
    )


def _parse_market(r: _Row) -> MarketRecord:
    share = r.float("share", required=False, minimum=0.0)
    if share is not None and share > 1.0:
        raise InvalidValueError(f"share must be within [0, 1], got {share}",
                                table=r.table, row=r.line, column="share")
    return MarketRecord(
        id=r.str("id"), goods_id=r.str("goods_id"), org_id=r.raw("org_id"),
        period=r.period("period"),
        price=r.float("price", minimum=0.0, strict_min=True),
        share=share,
    )


_PARSERS = {
    "tovar": _parse_tovar, "character": _parse_character, "logist": _parse_logist,
    "docum": _parse_docum, "calcul": _parse_calcul, "balans": _parse_balans,
    "money": _parse_money, "finres": _parse_finres, "debitor": _parse_debitor,
    "surveys": _parse_surveys, "market": _parse_market,
}


def _table_path(root: Path, table: str) -> Path | None:
    for candidate in (root / f"{table}.csv", root / table):
        if candidate.is_file():
            return candidate
    return None


def _read_table(root: Path, table: str, required: bool) -> list:
    path = _table_path(root, table)
    if path is None:
        if required:
            raise MissingTableError(f"no file for required table (looked for "
                                    f"{table}.csv and {table})", table=table)
        return []
    records = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for column in _COLUMNS[table]:
            if column not in header:
                raise MissingColumnError("missing required column",
                                         table=table, column=column)
        for values in reader:
            row = _Row(table, reader.line_num, values)
            records.append(_PARSERS[table](row))
    return records


def _check_duplicates(table: str, records: Iterable) -> None:
    seen: dict[str, int] = {}
    for i, rec in enumerate(records, start=2):
        if rec.id in seen:
            raise DuplicateKeyError(f"duplicate key {rec.id!r} (first seen row {seen[rec.id]})",
                                    table=table, row=i, column="id")
        seen[rec.id] = i


def _check_foreign_keys(ds: Dataset) -> None:
    goods = ds.goods_ids()
    orgs = ds.org_ids()
    doc_ids = {d.id for d in ds.docum}

    def check(table: str, records, column: str, value_of, universe, allow_empty=False):
        for i, rec in enumerate(records, start=2):
            v = value_of(rec)
            if allow_empty and not v:
                continue
            if v not in universe:
                raise ForeignKeyError(f"unknown reference {v!r}",
                                      table=table, row=i, column=column)

    check("character", ds.character, "goods_id", lambda r: r.goods_id, goods)
    check("logist", ds.logist, "goods_id", lambda r: r.goods_id, goods)
    check("calcul", ds.calcul, "goods_id", lambda r: r.goods_id, goods)
    check("calcul", ds.calcul, "component_id", lambda r: r.component_id, goods, allow_empty=True)
    check("docum", ds.docum, "goods_id", lambda r: r.goods_id, goods)
    check("docum", ds.docum, "ref_id", lambda r: r.ref_id, doc_ids, allow_empty=True)
    check("finres", ds.finres, "org_id", lambda r: r.org_id, orgs)
    check("debitor", ds.debitor, "org_id", lambda r: r.org_id, orgs)
    check("money", ds.money, "org_id", lambda r: r.org_id, orgs)
    check("surveys", ds.surveys, "goods_id", lambda r: r.goods_id, goods)
    check("market", ds.market, "goods_id", lambda r: r.goods_id, goods)


def _check_org_consistency(ds: Dataset) -> None:
    seen: dict[str, tuple[str, str]] = {}
    for i, b in enumerate(ds.balans, start=2):
        prev = seen.get(b.org_id)
        if prev is None:
            seen[b.org_id] = (b.name, b.kind)
        elif prev != (b.name, b.kind):
            raise InvalidValueError(
                f"organization {b.org_id!r} has conflicting name/kind across rows",
                table="balans", row=i, column="org_id")


def load_dataset(root: str | Path) -> Dataset:
    """Load and validate all table files under `root`.

    Raises DatasetError subclasses naming the table, row, and column on any
    missing file, missing column, duplicate key, dangling reference, or
    invalid value.  Loading is deterministic: the same files always produce
    an identical Dataset.
    """
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset directory not found: {root}")
    tables = {}
    for table in REQUIRED_TABLES:
        tables[table] = _read_table(root, table, required=True)
    for table in OPTIONAL_TABLES:
        tables[table] = _read_table(root, table, required=False)
    for name, records in tables.items():
        _check_duplicates(name, records)
    ds = Dataset(**{name: tuple(records) for name, records in tables.items()})
    _check_org_consistency(ds)
    _check_foreign_keys(ds)
    return ds


# ---------------------------------------------------------------------------
# Queries


def query_sales(ds: Dataset,
                goods_ids: set[str] | None = None,
                period_start: Period | str | None = None,
                period_end: Period | str | None = None,
                channel: str | None = None) -> list[SaleRecord]:
    """All sale records matching the filter, in (period, goods id) order.

    `period_start`/`period_end` bound the quarter range inclusively; a year
    period covers all its quarters.  Raises DatasetError when the range is
    inverted or the channel is unknown.
    """
    from .periods import as_period

    start = as_period(period_start) if period_start is not None else None
    end = as_period(period_end) if period_end is not None else None
    lo = min(start.quarters()).sort_key() if start else None
    hi = max(end.quarters()).sort_key() if end else None
    if lo is not None and hi is not None and lo > hi:
        raise DatasetError(f"period range starts after it ends: {start} > {end}")
    if channel is not None and channel not in CHANNELS:
        raise DatasetError(f"unknown channel {channel!r}")

    out = []
    for rec in ds.logist:
        if goods_ids is not None and rec.goods_id not in goods_ids:
            continue
        key = rec.period.sort_key()
        if lo is not None and key < lo:
            continue
        if hi is not None and key > hi:
            continue
        if channel is not None and rec.channel != channel:
            continue
        out.append(rec)
    out.sort(key=lambda r: (r.period.sort_key(), r.goods_id, r.id))
    return out


def statement_lookup(ds: Dataset, org_id: str, period: Period | str) -> FinancialStatement | None:
    """The financial statement for (org, quarter), or None when absent.

    A malformed or non-quarter period is an error; a missing statement is not.
    """
    from .periods import as_period

    p = as_period(period)
    if not p.is_quarter:
        raise PeriodError(f"quarterly period required, got {p}")
    for rec in ds.finres:
        if rec.org_id == org_id and rec.period == p:
            return rec
    return None
