import csv
import io
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from hconsist import cli, risk as R

CP = R.ConditionalPoint


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def parse(text, command):
    lines = text.splitlines()
    assert lines[0] == f"# hconsist.{command}/v1"
    rows = list(csv.reader(io.StringIO("\n".join(lines[1:]))))
    assert rows[0] == cli.COLUMNS[command]
    return rows[1:]


def test_transform_scalar_example(capsys):
    code, out, _ = run(capsys, "transform", "--family", "binary-linear", "--loss", "hinge", "--B", "0.5", "--t", "0.4")
    assert code == 0 and float(out) == pytest.approx(0.2, abs=1e-12)


def test_transform_grid_csv(capsys):
    code, out, _ = run(capsys, "transform", "--family", "comp-sum", "--tau", "1", "--n", "3", "--t-grid", "11")
    assert code == 0
    rows = parse(out, "transform")
    assert len(rows) == 11
    t, T, G = (np.array([float(r[i]) for r in rows]) for i in range(3))
    assert T[-1] == pytest.approx(math.log(2), abs=1e-12)
    assert np.allclose(G, t, atol=1e-8)


def test_invert_scalar(capsys):
    code, out, _ = run(capsys, "invert", "--family", "binary-linear", "--loss", "hinge", "--B", "0.5", "--s", "0.2")
    assert code == 0 and float(out) == pytest.approx(0.4, abs=1e-9)


def test_witness_examples(capsys):
    code, out, _ = run(capsys, "witness", "--kind", "adversarial-convex", "--phi", "hinge")
    assert code == 0 and out.strip() == "(0.5, 0)"
    code, out, _ = run(capsys, "witness", "--kind", "max-loss", "--phi", "exponential", "--n", "3")
    assert code == 0 and out.strip() == "(0.5, 0)"


def test_solve_rows_match_closed_form(capsys):
    code, out, _ = run(capsys, "solve", "--family", "comp", "--phi", "neg_log", "--n", "3", "--t-grid", "11")
    assert code == 0
    rows = parse(out, "solve")
    assert max(float(r[3]) for r in rows) <= 1e-6


def test_growth_summary_row(capsys):
    code, out, _ = run(capsys, "growth", "--curve", "binary-hinge", "--points", "11")
    assert code == 0
    rows = parse(out, "growth")
    assert len(rows) == 12 and rows[-1][0] == "summary"
    assert float(rows[-1][1]) == pytest.approx(1.0, abs=1e-3)


def test_gap_rows(capsys):
    code, out, _ = run(capsys, "gap", "--Lam", "1", "--n", "3", "--R-star", "0.5")
    assert code == 0
    rows = parse(out, "gap")
    assert [float(r[0]) for r in rows] == [0.0, 1.0, 1.5, 2.0]
    assert all(r[3] == "1" for r in rows)


def test_tightness_rows(capsys):
    code, out, _ = run(capsys, "tightness", "--kind", "comp-sum", "--tau", "0", "--n", "3", "--beta", "0.6")
    assert code == 0
    (row,) = parse(out, "tightness")
    assert float(row[4]) == pytest.approx(0.2, abs=1e-9)
    assert abs(float(row[6])) <= 1e-6


def test_verify_from_files(tmp_path, capsys):
    dist = R.DiscreteDistribution(np.array([0.5, 0.5]), (CP.binary(0.8, 1.0, 1.0), CP.binary(0.3, 1.0, -1.0)))
    (tmp_path / "d.csv").write_text(dist.to_text())
    (tmp_path / "h.csv").write_text("# one score per point\n0.4\n-0.2\n")
    out = tmp_path / "v.csv"
    code, _, _ = run(capsys, "verify", "--quad", "binary/hinge/Linear", "--dist", str(tmp_path / "d.csv"),
                     "--hyp", str(tmp_path / "h.csv"), "--out", str(out))
    assert code == 0
    (row,) = parse(out.read_text(), "verify")
    assert row[0] == "binary/hinge/Linear"
    assert float(row[7]) >= -1e-9


def test_verify_list_and_unknown(capsys):
    code, out, _ = run(capsys, "verify", "--list")
    assert code == 0 and "binary/hinge/Linear" in out.split()
    code, _, err = run(capsys, "verify", "--quad", "nope")
    assert code == 1 and "unregistered" in err


def test_simulate_rows(capsys):
    code, out, _ = run(capsys, "simulate", "--sigma", "0.1", "--samples", "20000", "--shards", "2")
    assert code == 0
    rows = parse(out, "simulate")
    assert len(rows) == 3 and all(float(r[0]) == 0.1 for r in rows)


def test_atomic_write_leaves_no_temp(tmp_path, capsys):
    out = tmp_path / "t.csv"
    out.write_text("old")
    code, _, _ = run(capsys, "transform", "--family", "comp-sum", "--t", "0.5", "--out", str(out))
    assert code == 0
    assert out.read_text().startswith("# hconsist.transform/v1")
    assert [p.name for p in tmp_path.iterdir()] == ["t.csv"]


def test_atomic_write_cleans_up_on_failure(tmp_path, monkeypatch):
    def boom(*a):
        raise OSError("no rename")
    monkeypatch.setattr(os, "replace", boom)
    with pytest.raises(OSError):
        cli.write_atomic(str(tmp_path / "x.csv"), "data")
    assert list(tmp_path.iterdir()) == []


def test_config_file_and_flag_override(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("# shared\nB = 0.5\n[transform]\nfamily = binary-linear\nloss = hinge\nt = 0.4\n[growth]\npoints = 3\n")
    code, out, _ = run(capsys, "transform", "--config", str(cfg))
    assert code == 0 and float(out) == pytest.approx(0.2)
    code, out, _ = run(capsys, "transform", "--config", str(cfg), "--B", "0.25")
    assert code == 0 and float(out) == pytest.approx(0.1)


def test_config_unknown_key_is_usage_error(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("family = comp-sum\nbogus = 1\n")
    code, _, err = run(capsys, "transform", "--config", str(cfg))
    assert code == 1 and "unknown key" in err
    cfg.write_text("family comp-sum\n")
    code, _, err = run(capsys, "transform", "--config", str(cfg))
    assert code == 1 and "key=value" in err
    code, _, _ = run(capsys, "transform", "--config", str(tmp_path / "missing.cfg"))
    assert code == 1


def test_usage_errors_exit_one(capsys):
    assert run(capsys)[0] == 1
    assert run(capsys, "transform")[0] == 1
    assert run(capsys, "transform", "--family", "comp-sum", "--t", "abc")[0] == 1
    assert run(capsys, "transform", "--family", "comp-sum", "--t", "1.5")[0] == 1
    assert run(capsys, "selftest", "--only", "99")[0] == 1
    assert run(capsys, "--version")[0] == 0


def test_selftest_pass_and_fail_codes(capsys, monkeypatch):
    from hconsist import acceptance as A
    code, out, _ = run(capsys, "selftest", "--only", "2")
    assert code == 0 and "criterion 2" in out and "PASS" in out
    monkeypatch.setattr(A, "CRITERIA", [(2, "forced", lambda ctx: (False, "forced failure"))])
    code, out, err = run(capsys, "selftest", "--only", "2")
    assert code == 2 and "FAIL" in out and "criterion 2" in err


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "hconsist", "transform", "--family", "binary-linear", "--loss", "hinge",
                          "--B", "0.5", "--t", "0.4"], capture_output=True, text=True)
    assert res.returncode == 0 and float(res.stdout) == pytest.approx(0.2)
