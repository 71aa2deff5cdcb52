import json

import pytest

from magbottle.cli import RunConfig, main, parse_field_expr, run_compare
from magbottle.hyperbolic import GROWTH_FAILURE
from magbottle.report import emit_report


def read(path):
    return path.read_text(encoding="utf-8")


def test_parse_field_expr():
    m = parse_field_expr("(x/y)^2 + y + 1/y")
    assert float(m.signed(2.0, 1.0)) == 6.0


def test_config_validation():
    with pytest.raises(ValueError):
        RunConfig(lambdas=[20, 10])
    with pytest.raises(ValueError):
        RunConfig(delta0=0.45)
    with pytest.raises(ValueError):
        RunConfig(lambdas=[])


def test_constant_field_clean_failure(tmp_path, capsys):
    code = main(["compare", "--field", "2", "--lambda", "10,20", "--out", str(tmp_path)])
    assert code == 2
    assert GROWTH_FAILURE in capsys.readouterr().err
    summary = json.loads(read(tmp_path / "summary.json"))
    assert summary["failures"] == 2
    assert all(r["error"] == GROWTH_FAILURE for r in summary["results"])


def test_run_compare_constant_rows():
    rows = run_compare(RunConfig(field="unit", lambdas=[5.0]))
    assert rows == [{"lambda": 5.0, "error": GROWTH_FAILURE, "bottle_check": rows[0]["bottle_check"]}]


def test_empty_report_rejected(tmp_path):
    with pytest.raises(ValueError):
        emit_report([], tmp_path)


def test_one_row_report(tmp_path):
    assert emit_report([{"lambda": 3.0, "N": 4, "weyl_main": 4.5, "ratio": 4 / 4.5}], tmp_path) == 0
    lines = read(tmp_path / "results.csv").splitlines()
    assert lines[0] == "lambda,N,N_err_domain,N_err_mesh,weyl_main,weyl_lo,weyl_hi,ratio"
    assert len(lines) == 2


def test_compare_is_deterministic_and_config_overridable(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"field": "bottle-j1", "lambda": [6, 8], "kappa": 3.0, "C": 0.5}))
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["compare", "--config", str(cfg), "--kappa", "2", "--out", str(a), "--seed", "3"]) == 0
    assert main(["compare", "--config", str(cfg), "--kappa", "2", "--out", str(b), "--seed", "3",
                 "--jobs", "2"]) == 0
    assert (a / "results.csv").read_bytes() == (b / "results.csv").read_bytes()
    summary = json.loads(read(a / "summary.json"))
    assert summary["config"]["kappa"] == 2.0
    assert summary["config"]["C"] == 0.5
    lines = read(a / "results.csv").splitlines()
    assert [line.split(",")[0] for line in lines[1:]] == ["6", "8"]
    row = [float(v) for v in lines[1].split(",")]
    assert row[5] <= row[4] <= row[6]


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"lamda": [5]}))
    assert main(["compare", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "unknown config keys" in capsys.readouterr().err


def test_syntax_error_exit(tmp_path, capsys):
    assert main(["count", "--field", "(x/", "--lambda", "5", "--out", str(tmp_path)]) == 2
    assert "column 4" in capsys.readouterr().err


def test_landau_table(capsys):
    assert main(["landau", "--b", "3"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out == ["b,j,level,threshold", "3,0,3,9.25", "3,1,7,9.25", "3,2,9,9.25"]


def test_fiber_command(capsys):
    assert main(["fiber", "--b", "3", "--xi", "-1"]) == 0
    assert capsys.readouterr().out.strip() == "index,eigenvalue"


def test_check_command(capsys):
    assert main(["check", "--field", "bottle-j1"]) == 0
    assert json.loads(capsys.readouterr().out)["growth_ok"] is True
    assert main(["check", "--field", "strip"]) == 2


def test_count_and_dump(tmp_path, capsys):
    assert main(["count", "--field", "bottle-j1", "--lambda", "5", "--out", str(tmp_path), "--dump-matrix"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "lambda,N,N_err_domain,N_err_mesh,n,h"
    assert int(out[1].split(",")[1]) > 0
    assert (tmp_path / "matrix_5.coo").exists()


def test_weyl_command(tmp_path, capsys):
    assert main(["weyl", "--field", "bottle-j1", "--lambda", "20", "--C", "1", "--out", str(tmp_path)]) == 0
    row = capsys.readouterr().out.splitlines()[1].split(",")
    assert float(row[1]) == pytest.approx(81.026, rel=1e-4)
    assert (tmp_path / "weyl.csv").exists()


def test_rect_command(tmp_path, capsys):
    assert main(["rect", "--b", "1", "--lambda", "4", "--R", "5", "--out", str(tmp_path)]) == 0
    assert capsys.readouterr().out.splitlines()[1].split(",")[5] == "5"
