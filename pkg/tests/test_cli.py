import csv
import json

import numpy as np
import pytest
import yaml

from appealgate.cli import main
from appealgate.experiment.assignment import Group
from appealgate.experiment.eventlog import EventLog

from helpers import ANSWERS, user_in


def run(*argv):
    return main([str(a) for a in argv])


def test_no_command_is_usage_error(capsys):
    assert run() == 2


def test_missing_config_file(tmp_path, capsys):
    assert run("--config", tmp_path / "nope.yaml", "score", "hi") == 2
    assert "config file not found" in capsys.readouterr().err


def test_invalid_config(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("toxicity:\n  threshold: 3\n")
    assert run("--config", cfg, "score", "hi") == 2


def test_score(capsys):
    assert run("score", "You are a fucking idiot") == 0
    assert run("score", "Thanks, have a nice day") == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].split("\t")[1] == "toxic"
    assert lines[1].split("\t")[1] == "ok"


def test_score_file_and_missing_text(tmp_path, capsys):
    f = tmp_path / "t.txt"
    f.write_text("hello\n\nyou idiot\n")
    assert run("score", "--file", f) == 0
    assert len(capsys.readouterr().out.splitlines()) == 2
    assert run("score") == 2


def test_simulate_is_seeded(tmp_path, capsys):
    paths = [tmp_path / f"{i}.jsonl" for i in range(3)]
    assert run("simulate", "--n-users", 30, "--seed", 4, "--out", paths[0]) == 0
    assert run("simulate", "--n-users", 30, "--seed", 4, "--out", paths[1]) == 0
    assert run("simulate", "--n-users", 30, "--seed", 5, "--out", paths[2]) == 0
    assert paths[0].read_text() == paths[1].read_text() != paths[2].read_text()
    assert "appeals          30" in capsys.readouterr().out


def test_simulate_seed_from_config(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(yaml.safe_dump({"experiment": {"seed": 4}, "behavior": {"n_users": 30}}))
    assert run("--config", cfg, "simulate", "--out", tmp_path / "a.jsonl") == 0
    assert run("simulate", "--n-users", 30, "--seed", 4, "--out", tmp_path / "b.jsonl") == 0
    assert (tmp_path / "a.jsonl").read_text() == (tmp_path / "b.jsonl").read_text()


def test_simulate_bad_override(tmp_path, capsys):
    assert run("simulate", "--n-users", -3, "--out", tmp_path / "x.jsonl") == 2


@pytest.fixture(scope="module")
def fixture_log(tmp_path_factory):
    path = tmp_path_factory.mktemp("fx") / "fixture.jsonl"
    assert main(["fixture", "--out", str(path)]) == 0
    return path


def test_report_on_fixture(fixture_log, tmp_path, capsys):
    assert run("report", "--log", fixture_log, "--out", tmp_path / "rep") == 0
    out = capsys.readouterr().out
    assert "473.557" in out and "117.592" in out
    assert "60.04%" in out and "80.15%" in out
    with open(tmp_path / "rep" / "sweep.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert [r[4:] for r in rows[1:]] == [["18.03%", "6.1%"], ["13.24%", "3.81%"], ["7.3%", "1.52%"]]


def test_report_threshold_changes_cells(fixture_log, tmp_path, capsys):
    tables = {}
    for th in (0.5, 0.9):
        assert run("report", "--log", fixture_log, "--threshold", th, "--out", tmp_path / str(th)) == 0
        with open(tmp_path / str(th) / "hypotheses.csv", newline="") as fh:
            tables[th] = {r[0]: r for r in csv.reader(fh)}
    assert tables[0.5]["H2a"][3] != tables[0.9]["H2a"][3]
    assert tables[0.5]["H1a"][3] == tables[0.9]["H1a"][3]


def test_report_bad_inputs(tmp_path, capsys):
    assert run("report", "--log", tmp_path / "missing.jsonl") == 2
    assert run("report", "--log", tmp_path / "x.jsonl", "--threshold", 1.2) == 2
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    assert run("report", "--log", empty, "--out", tmp_path / "r") == 1
    header_only = tmp_path / "header.jsonl"
    EventLog().write_jsonl(header_only)
    assert run("report", "--log", header_only, "--out", tmp_path / "r") == 1
    assert "empty log" in capsys.readouterr().err


def _write_corpus(path, n=120, seed=0, separable=True):
    rng = np.random.default_rng(seed)
    good = ["sorry", "understand", "apologize", "rules", "respect"]
    bad = ["unfair", "stupid", "nothing", "wrong", "mods"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["text", "label"])
        for i in range(n):
            label = i % 2
            pool = good if label else bad
            w.writerow([" ".join(rng.choice(pool, 4)), label if separable else 1])


def test_train_pps(tmp_path, capsys):
    corpus = tmp_path / "c.csv"
    _write_corpus(corpus)
    model = tmp_path / "m.json"
    assert run("train-pps", corpus, "--out", model, "--seed", 3) == 0
    assert "macro F     1.0000" in capsys.readouterr().out
    assert json.loads(model.read_text())["vocabulary"]


def test_train_pps_errors(tmp_path, capsys):
    assert run("train-pps", tmp_path / "none.csv") == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("text,score\nhello,1\n")
    assert run("train-pps", bad) == 2
    assert "schema" in capsys.readouterr().err
    one_class = tmp_path / "one.csv"
    _write_corpus(one_class, separable=False)
    assert run("train-pps", one_class, "--out", tmp_path / "m.json") == 1


def test_report_with_trained_model(tmp_path, capsys):
    corpus = tmp_path / "c.csv"
    _write_corpus(corpus)
    model = tmp_path / "m.json"
    assert run("train-pps", corpus, "--out", model) == 0
    assert run("simulate", "--n-users", 40, "--out", tmp_path / "s.jsonl") == 0
    assert run("report", "--log", tmp_path / "s.jsonl", "--model", model, "--out", tmp_path / "r") == 0


def _script():
    ctl = user_in(Group.CONTROL, "ctl", 0)
    trt = user_in(Group.TREATMENT, "trt", 0)
    return [
        {"op": "ban", "user": ctl, "reason": "Rule 1: be civil"},
        {"op": "message", "user": ctl, "body": "Please unban me."},
        {"op": "ban", "user": trt, "reason": "Rule 1: be civil", "at": 10},
        {"op": "message", "user": trt, "body": "I am sorry."},
        {"op": "submit", "user": trt, "answers": ANSWERS, "started_at": 20, "at": 300},
        {"op": "decide", "conversation": "conv-1", "decision": "denied", "at": 400},
        {"op": "decide", "conversation": "conv-2", "decision": "muted", "mute_days": 7},
    ]


@pytest.mark.parametrize("suffix", [".yaml", ".json", ".jsonl"])
def test_run_bot_formats(tmp_path, capsys, suffix):
    steps = _script()
    script = tmp_path / f"s{suffix}"
    if suffix == ".jsonl":
        script.write_text("\n".join(json.dumps(s) for s in steps))
    elif suffix == ".json":
        script.write_text(json.dumps({"steps": steps}))
    else:
        script.write_text(yaml.safe_dump(steps))
    out_log = tmp_path / "log.jsonl"
    assert run("run-bot", "--script", script, "--out", out_log) == 0
    out = capsys.readouterr().out
    rows = [line.split(None, 2) for line in out.splitlines()[:5]]
    assert [r[:2] for r in rows] == [
        ["evt:2", "control_open"],
        ["evt:7", "treatment_awaiting_form"],
        ["form:0", "treatment_completed"],
        ["evt:19", "decided"],
        ["evt:21", "decided"],
    ]
    assert rows[1][2] == "reply, archive" and rows[2][2] == "unarchive, note, reply"
    assert len(EventLog.read_jsonl(out_log)) > 0


def test_run_bot_errors(tmp_path, capsys):
    assert run("run-bot", "--script", tmp_path / "none.yaml") == 2
    bad = tmp_path / "bad.yaml"
    bad.write_text("just a string")
    assert run("run-bot", "--script", bad) == 2
    wrong = tmp_path / "wrong.yaml"
    wrong.write_text(yaml.safe_dump([{"op": "explode"}]))
    assert run("run-bot", "--script", wrong) == 1
    assert "step 0" in capsys.readouterr().err
