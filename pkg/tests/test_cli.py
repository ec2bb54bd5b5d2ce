import csv
import json
import os

import numpy as np
import pytest

from cfswipt import cli
from cfswipt.experiments import ConvergenceRow, ResultRow

SMALL = ["--seeds", "0", "--set", "sweep.lambda_a=1.2e-5", "--set", "sweep.phi_values=[0.3]"]


def _fields(cls):
    return list(cls.__dataclass_fields__)


@pytest.mark.parametrize("argv", [
    ["fig9"],
    [],
    ["er-sweep", "--set", "no_equals_sign"],
    ["er-sweep", "--seeds", "a,b"],
    ["er-sweep", "--format", "xml"],
])
def test_usage_errors_exit_2(argv, capsys):
    assert cli.main(argv) == cli.EXIT_USAGE
    assert "usage error" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ["validate", "--set", "phi=1.2"],
    ["validate", "--set", "bogus=1"],
    ["validate", "--config", "/nonexistent/cfg.yaml"],
])
def test_config_errors_exit_2(argv, capsys):
    assert cli.main(argv) == cli.EXIT_USAGE
    assert "configuration error" in capsys.readouterr().err


def test_dispatch_unknown_subcommand():
    with pytest.raises(cli.UsageError):
        cli.dispatch("plot", cli.parse_config())


def test_er_sweep_csv_header(tmp_path):
    out = tmp_path / "er.csv"
    code = cli.main(["er-sweep", *SMALL, "--set", "sweep.er_grid=[0.0]", "--out", str(out)])
    assert code == cli.EXIT_OK
    with open(out, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == _fields(ResultRow)
    assert sorted(r["model"] for r in rows) == ["cellfree", "colocated"]
    assert all(float(r["esr_worst"]) >= 0 for r in rows)
    # only the output file remains: the temporary file was renamed into place
    assert os.listdir(tmp_path) == ["er.csv"]


def test_convergence_jsonl_nondecreasing(tmp_path):
    out = tmp_path / "conv.jsonl"
    code = cli.main(["convergence", *SMALL, "--set", "sweep.convergence_e_min=0.0",
                     "--set", "sweep.convergence_inits=[-6.0]", "--format", "jsonl",
                     "--out", str(out)])
    assert code == cli.EXIT_OK
    rows = [json.loads(line) for line in out.read_text().splitlines()]
    assert list(rows[0]) == _fields(ConvergenceRow)
    assert [r["iteration"] for r in rows] == list(range(1, len(rows) + 1))
    assert np.all(np.diff([r["pi"] for r in rows]) >= -1e-7)


def test_write_rows_replaces_atomically(tmp_path):
    out = tmp_path / "x.csv"
    out.write_text("old contents that are longer than the new ones\n" * 10)
    cli.write_rows([{"a": 1, "b": 2.5}], str(out), "csv")
    assert out.read_text() == "a,b\n1,2.5\n"
    assert os.listdir(tmp_path) == ["x.csv"]


def test_write_rows_failure_leaves_target(tmp_path):
    out = tmp_path / "keep.csv"
    out.write_text("keep\n")

    class Bad:
        def to_dict(self):
            raise RuntimeError("boom")

    with pytest.raises(RuntimeError):
        cli.write_rows([Bad()], str(out), "csv")
    assert out.read_text() == "keep\n"
    assert os.listdir(tmp_path) == ["keep.csv"]


def test_stdout_output(capsys):
    cli.write_rows([{"a": 1}], None, "jsonl")
    assert json.loads(capsys.readouterr().out) == {"a": 1}


def test_validate_exits_0_at_default_draws(tmp_path):
    out = tmp_path / "v.csv"
    assert cli.main(["validate", "--out", str(out)]) == cli.EXIT_OK
    with open(out, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert rows and all(r["pass"] == "True" for r in rows)
    assert {r["term"] for r in rows} >= {"c_kj", "c_til", "iu_an", "b_k", "bhat_k", "btil", "ahe",
                                          "power"}


def test_validate_exits_1_on_failed_check(monkeypatch, tmp_path):
    monkeypatch.setattr(cli, "VALIDATE_REL_TOL", 0.0)
    code = cli.main(["validate", "--set", "n_draws=500", "--out", str(tmp_path / "v.csv")])
    assert code == cli.EXIT_FAIL


def test_detect_demo_rows(tmp_path):
    out = tmp_path / "d.jsonl"
    assert cli.main(["detect-demo", "--format", "jsonl", "--out", str(out)]) == cli.EXIT_OK
    rows = [json.loads(line) for line in out.read_text().splitlines()]
    assert len(rows) == len(cli.DETECT_NS) * 3
    assert [r["n_aps"] for r in rows[::3]] == list(cli.DETECT_NS)
    for r in rows:
        assert r["attacked"] == (r["iu"] == 0)
        assert r["target"] == (0.3 if r["iu"] == 0 else 0.0)
