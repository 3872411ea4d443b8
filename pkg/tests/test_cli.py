"""Command-line client: exit codes and outputs."""
import json
from pathlib import Path

import pytest

from certlang.cli import main
from certlang.corpus import CORPUS_DIR
from tests.conftest import toy_relu_net

DP = str(CORPUS_DIR / "deeppoly" / "certifier.cf")
NET = str(CORPUS_DIR / "deeppoly" / "nets" / "toy_relu.json")


def test_check_ok(capsys):
    assert main(["check", DP]) == 0


def test_check_syntax_error(tmp_path, capsys):
    bad = tmp_path / "bad.cf"
    bad.write_text("Def shape as (Real l){true}")
    assert main(["check", str(bad)]) == 1
    assert "error" in capsys.readouterr().err


def test_check_missing_file(capsys):
    assert main(["check", "/nonexistent.cf"]) == 1


def test_run_writes_shape_table(tmp_path, capsys):
    out = tmp_path / "shapes.json"
    assert main(["run", DP, NET, "--out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["n4"]["u"] == "2"


def test_verify_single_op(capsys):
    code = main(["verify", DP, "--op", "Add", "--nprev", "2"])
    assert code == 0
    data = json.loads(capsys.readouterr().out)
    assert data["summary"]["DeepPoly/Add"] == "verified"


def test_verify_human_output(capsys):
    code = main(["verify", DP, "--op", "Add", "--nprev", "2", "--human"])
    assert code == 0
    assert "DeepPoly/Add" in capsys.readouterr().out


def test_verify_rejects_zero_bound(capsys):
    assert main(["verify", DP, "--nprev", "0"]) == 1


def test_verify_falsified_exit_code(tmp_path, capsys):
    from certlang.corpus import entry
    e = entry("deeppoly")
    m = [x for x in e.mutants if x.name == "add_halved"][0]
    path = tmp_path / "mutant.cf"
    path.write_text(e.mutant_source(m))
    assert main(["verify", str(path), "--op", "Add", "--nprev", "2"]) == 2


def test_fuzz_small(capsys):
    code = main(["fuzz", DP, "--seeds", "2", "--points", "4",
                 "--max-neurons", "8"])
    assert code == 0
    data = json.loads(capsys.readouterr().out)
    assert data["nets"] == 2 and not data["violations"]


def test_config_file(tmp_path, monkeypatch, capsys):
    cfg = tmp_path / "cf.toml"
    cfg.write_text("timeout = 45\nworkers = 2\n")
    assert main(["--config", str(cfg), "check", DP]) == 0


def test_verify_trace_flag(capsys):
    code = main(["verify", DP, "--op", "Add", "--nprev", "2", "--trace"])
    assert code == 0
    assert "trace:" in capsys.readouterr().err


def test_verify_inconclusive_exit_code():
    # transcendental cases sit outside the verified fragment
    path = str(CORPUS_DIR / "sigmoid_tanh" / "certifier.cf")
    assert main(["verify", path, "--op", "Sigmoid"]) == 3
