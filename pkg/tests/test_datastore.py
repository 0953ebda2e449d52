import random
import shutil

import pytest

from entplan.datastore import (
    Dataset,
    DatasetError,
    DuplicateKeyError,
    ForeignKeyError,
    InvalidValueError,
    MissingTableError,
    SaleRecord,
    load_dataset,
    query_sales,
    statement_lookup,
)
from entplan.periods import Period, PeriodError

from oracles import naive_sales_scan


def test_load_notebooks_counts(notebooks):
    counts = notebooks.row_counts()
    assert counts["tovar"] == 10
    assert counts["logist"] == 33
    assert counts["finres"] == 6
    assert counts["balans"] == 11
    assert counts["docum"] == 7
    assert counts["market"] == 17
    assert all(counts[t] > 0 for t in ("money", "character", "calcul", "debitor", "surveys"))


def test_load_is_deterministic(notebooks_dir):
    assert load_dataset(notebooks_dir) == load_dataset(notebooks_dir)


def test_missing_table_reports_name(notebooks_dir, tmp_path):
    broken = tmp_path / "data"
    shutil.copytree(notebooks_dir, broken)
    (broken / "tovar.csv").unlink()
    with pytest.raises(MissingTableError) as err:
        load_dataset(broken)
    assert "tovar" in str(err.value)


def test_dangling_goods_reference_reports_row(notebooks_dir, tmp_path):
    broken = tmp_path / "data"
    shutil.copytree(notebooks_dir, broken)
    with (broken / "logist.csv").open("a") as fh:
        fh.write("L99,NOPE,RET1,NPRO,5,100,2010Q1,retail,kyiv\n")
    with pytest.raises(ForeignKeyError) as err:
        load_dataset(broken)
    assert "logist" in str(err.value) and "NOPE" in str(err.value)
    assert "row 35" in str(err.value)


def test_duplicate_key_rejected(notebooks_dir, tmp_path):
    broken = tmp_path / "data"
    shutil.copytree(notebooks_dir, broken)
    with (broken / "tovar.csv").open("a") as fh:
        fh.write("TN20A,copy,product,budget,pc,1,0,0\n")
    with pytest.raises(DuplicateKeyError):
        load_dataset(broken)


def test_missing_column_rejected(notebooks_dir, tmp_path):
    broken = tmp_path / "data"
    shutil.copytree(notebooks_dir, broken)
    (broken / "money.csv").write_text("id,org_id,period,inflow\nM01,NPRO,2010Q1,1\n")
    with pytest.raises(DatasetError) as err:
        load_dataset(broken)
    assert "outflow" in str(err.value)


def test_profit_identity_enforced(notebooks_dir, tmp_path):
    broken = tmp_path / "data"
    shutil.copytree(notebooks_dir, broken)
    with (broken / "finres.csv").open("a") as fh:
        fh.write("F99,NPRO,2010Q4,100,40,99,1,1\n")
    with pytest.raises(InvalidValueError) as err:
        load_dataset(broken)
    assert "profit" in str(err.value)


def test_negative_volume_rejected(notebooks_dir, tmp_path):
    broken = tmp_path / "data"
    shutil.copytree(notebooks_dir, broken)
    with (broken / "logist.csv").open("a") as fh:
        fh.write("L99,TN20A,RET1,NPRO,-5,100,2010Q1,retail,kyiv\n")
    with pytest.raises(InvalidValueError) as err:
        load_dataset(broken)
    assert "volume" in str(err.value)


def test_query_sales_empty_dataset():
    assert query_sales(Dataset(), goods_ids={"TN20A"}) == []


def test_query_sales_identity_filter(notebooks):
    rows = query_sales(notebooks)
    assert len(rows) == len(notebooks.logist)


def test_query_sales_quarter_slice_matches_scan(notebooks):
    got = query_sales(notebooks, goods_ids={"TN20A"},
                      period_start="2010Q2", period_end="2010Q2")
    want = naive_sales_scan(notebooks.logist, goods_ids={"TN20A"},
                            start=Period(2010, 2), end=Period(2010, 2))
    assert got == want
    assert len(got) == 3
    # twelve TN20A rows across 2010 altogether
    assert len(query_sales(notebooks, goods_ids={"TN20A"},
                           period_start="2010", period_end="2010")) == 12


def test_query_sales_returns_loaded_rows(notebooks):
    loaded = {id(r) for r in notebooks.logist}
    for rec in query_sales(notebooks, goods_ids={"TN301"}, channel="direct"):
        assert id(rec) in loaded


def test_query_sales_inverted_range_rejected(notebooks):
    with pytest.raises(DatasetError):
        query_sales(notebooks, period_start="2010Q3", period_end="2010Q1")


def test_query_sales_random_filters_match_scan(notebooks):
    rng = random.Random(7)
    ids = sorted(notebooks.goods_ids())
    for _ in range(25):
        goods = set(rng.sample(ids, rng.randint(1, len(ids)))) if rng.random() < 0.8 else None
        q1, q2 = sorted((rng.randint(1, 4), rng.randint(1, 4)))
        channel = rng.choice([None, "retail", "wholesale", "direct"])
        got = query_sales(notebooks, goods_ids=goods,
                          period_start=Period(2010, q1), period_end=Period(2010, q2),
                          channel=channel)
        want = naive_sales_scan(notebooks.logist, goods_ids=goods,
                                start=Period(2010, q1), end=Period(2010, q2),
                                channel=channel)
        assert got == want


def test_statement_lookup(notebooks):
    rec = statement_lookup(notebooks, "ACME", "2010Q2")
    assert rec is not None and rec.profit == 220000
    assert statement_lookup(notebooks, "NOBODY", "2010Q2") is None
    assert statement_lookup(notebooks, "NPRO", Period(2011, 1)) is None
    with pytest.raises(PeriodError):
        statement_lookup(notebooks, "NPRO", "2010Q5")


def test_period_parsing():
    assert Period.parse("2010Q4") == Period(2010, 4)
    assert Period.parse("2010") == Period(2010)
    assert Period(2010).contains(Period(2010, 3))
    assert not Period(2010, 2).contains(Period(2010, 3))
    assert Period(2010, 1).previous() == Period(2009, 4)
    for bad in ("2010Q5", "haha", "Q2", "20:10"):
        with pytest.raises(PeriodError):
            Period.parse(bad)


def test_sale_record_is_plain_data(notebooks):
    rec = notebooks.logist[0]
    assert isinstance(rec, SaleRecord)
    assert rec.volume > 0 and rec.price > 0
