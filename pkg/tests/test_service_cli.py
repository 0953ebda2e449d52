import json
from pathlib import Path

import pytest

from entplan.service.cli import main

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_ingest_reports_counts(capsys, notebooks_dir):
    code, out, _ = run(capsys, "ingest", str(notebooks_dir))
    assert code == 0
    assert "logist: 33 rows" in out


def test_ingest_structured(capsys, notebooks_dir):
    code, out, _ = run(capsys, "--format", "structured", "ingest", str(notebooks_dir))
    assert code == 0
    assert json.loads(out)["tables"]["tovar"] == 10


def test_ingest_missing_directory(capsys, tmp_path):
    code, _, err = run(capsys, "ingest", str(tmp_path / "nope"))
    assert code == 1 and "error" in err


def test_unknown_subcommand_exits_one(capsys):
    code, _, err = run(capsys, "frobnicate")
    assert code == 1
    assert "usage" in err.lower()


def test_no_subcommand_prints_usage(capsys):
    code, _, err = run(capsys)
    assert code == 1 and "usage" in err.lower()


def test_fit_writes_model(capsys, notebooks_dir, tmp_path):
    out_file = tmp_path / "model.json"
    code, out, _ = run(capsys, "--data-dir", str(notebooks_dir),
                       "fit", "TN20A", "--form", "log-linear",
                       "--out", str(out_file))
    assert code == 0
    data = json.loads(out_file.read_text())
    assert data["form"] == "log-linear"


def test_fit_unknown_goods(capsys, notebooks_dir):
    code, _, err = run(capsys, "--data-dir", str(notebooks_dir),
                       "fit", "XJ9000", "--form", "log-linear")
    assert code == 1 and "no sales" in err


def test_ask_profit_of_acme(capsys, notebooks_dir):
    code, out, _ = run(capsys, "--data-dir", str(notebooks_dir),
                       "ask", "what is profit of ACME in 2010Q2?")
    assert code == 0
    assert "220000" in out


def test_ask_parse_error(capsys, notebooks_dir):
    code, _, err = run(capsys, "--data-dir", str(notebooks_dir),
                       "ask", "pray tell the vibes")
    assert code == 1 and "parse error" in err


def test_ask_structured_payload(capsys, notebooks_dir):
    code, out, _ = run(capsys, "--format", "structured",
                       "--data-dir", str(notebooks_dir),
                       "ask", "how to increase income in 2010Q3?")
    assert code == 0
    payload = json.loads(out)
    assert payload["status"] == "ok"
    texts = [line["text"] for line in payload["lines"]]
    assert any("quality improvement" in t for t in texts)


def test_plan_is_deterministic(capsys, tmp_path):
    out1, out2 = tmp_path / "r1.json", tmp_path / "r2.json"
    problem = str(FIXTURES / "problem_notebooks.json")
    code1, _, _ = run(capsys, "plan", problem, "--budget", "20000",
                      "--seed", "7", "--out", str(out1))
    code2, _, _ = run(capsys, "plan", problem, "--budget", "20000",
                      "--seed", "7", "--out", str(out2))
    assert code1 == code2 == 0
    assert out1.read_bytes() == out2.read_bytes()
    report = json.loads(out1.read_text())
    assert report["best"]["profit"] > 0


def test_simulate_deterministic(capsys, tmp_path):
    out1, out2 = tmp_path / "t1.csv", tmp_path / "t2.csv"
    scenario = str(FIXTURES / "scenario_notebooks.json")
    code1, _, _ = run(capsys, "simulate", scenario, "--periods", "5",
                      "--seed", "3", "--out", str(out1))
    code2, _, _ = run(capsys, "simulate", scenario, "--periods", "5",
                      "--seed", "3", "--out", str(out2))
    assert code1 == code2 == 0
    assert out1.read_bytes() == out2.read_bytes()
    header = out1.read_text().splitlines()[0]
    assert header.startswith("period,echelon,role,record,goods")


def test_event_file_processing(capsys, notebooks_dir):
    code, out, _ = run(capsys, "--data-dir", str(notebooks_dir),
                       "event", str(FIXTURES / "events_demo.csv"))
    assert code == 0
    assert "replan required" in out
    assert "plan of sales must be corrected" in out


def test_repl_loop(capsys, notebooks_dir, monkeypatch):
    lines = iter(["what is profit of ACME in 2010Q2?", "nonsense!!", "exit"])
    monkeypatch.setattr("builtins.input", lambda prompt="": next(lines))
    code = main(["--data-dir", str(notebooks_dir), "repl"])
    out = capsys.readouterr().out
    assert code == 0
    assert "220000" in out
    assert "parse error" in out
