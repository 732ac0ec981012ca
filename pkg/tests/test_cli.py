import csv
import json
import os
import subprocess
import sys

import pytest

from liplab.cli import main


def write_config(tmp_path, d, name="c.json"):
    p = tmp_path / name
    p.write_text(json.dumps(d))
    return str(p)


SMALL = {"N": 3, "exhaustion": {"radius": 1.0, "counts": [4, 8, 12]}, "sample_points": 12}


def test_approximate_writes_certificate(tmp_path, capsys):
    cfg = write_config(tmp_path, SMALL)
    out = tmp_path / "out"
    assert main(["approximate", "--config", cfg, "--out", str(out)]) == 0
    assert "PASS" in capsys.readouterr().out
    cert = json.loads((out / "certificate.json").read_text())
    assert cert["passed"]
    rows = list(csv.DictReader((out / "certificate.csv").open(newline="")))
    assert len(rows) == 3 * 12
    assert list(rows[0])[:3] == ["n", "point", "in_K"]
    assert b"\r\n" not in (out / "certificate.csv").read_bytes()
    assert not [p for p in out.iterdir() if p.name.startswith(".")]


def test_csv_is_byte_identical_across_runs_and_threads(tmp_path, monkeypatch):
    cfg = write_config(tmp_path, SMALL)
    main(["approximate", "--config", cfg, "--out", str(tmp_path / "a"), "--quiet"])
    monkeypatch.setenv("LIPLAB_THREADS", "3")
    main(["approximate", "--config", cfg, "--out", str(tmp_path / "b"), "--quiet"])
    a = (tmp_path / "a" / "certificate.csv").read_bytes()
    assert a == (tmp_path / "b" / "certificate.csv").read_bytes()


def test_seed_override_changes_samples(tmp_path):
    cfg = write_config(tmp_path, SMALL)
    main(["approximate", "--config", cfg, "--out", str(tmp_path / "a"), "--quiet"])
    main(["approximate", "--config", cfg, "--out", str(tmp_path / "b"), "--quiet", "--seed", "18446744073709551615"])
    a = json.loads((tmp_path / "a" / "certificate.json").read_text())
    b = json.loads((tmp_path / "b" / "certificate.json").read_text())
    assert b["seed"] == 2**64 - 1
    assert a["rows"][0]["f"] != b["rows"][0]["f"]


@pytest.mark.parametrize("d,msg", [({"N": 0}, "empty index range"), ({"eps": 0}, "eps"),
                                   ({"measure": {"points": [[0.0]], "weights": [-1.0]}}, "nonnegative")])
def test_config_errors_exit_2(tmp_path, capsys, d, msg):
    cfg = write_config(tmp_path, d)
    assert main(["approximate", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert msg in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_usage_errors_exit_2(capsys):
    assert main([]) == 2
    assert main(["nope"]) == 2
    assert main(["approximate", "--seed", "-3"]) == 2
    assert main(["approximate", "--config", "/nonexistent/c.json"]) == 2


def test_bv_rejected_for_approximate(tmp_path, capsys):
    cfg = write_config(tmp_path, {"space": {"kind": "lp", "dim": 1, "p": 2},
                                  "function": {"family": "indicator", "a": 0.5, "b": 1.0}})
    assert main(["approximate", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "bv subcommand" in capsys.readouterr().err


def test_mapop_identity_and_single_cell(tmp_path):
    cfg = write_config(tmp_path, {"mapop": {"instances": 5, "max_vectors": 3, "max_labels": 300, "eps": 0.1}})
    out = tmp_path / "o"
    assert main(["mapop", "--config", cfg, "--out", str(out), "--quiet"]) == 0
    rows = {r["case"]: r for r in csv.DictReader((out / "mapop.csv").open(newline=""))}
    assert len(rows) == 12
    assert int(rows["identity"]["rank"]) == int(rows["identity"]["labels"]) == 300
    assert int(rows["single-cell"]["rank"]) == 1
    assert all(r["pass"] == "1" for r in rows.values())
    assert json.loads((out / "operator.json").read_text())["labels"]


def test_sobolev_writes_one_report_per_p(tmp_path):
    cfg = write_config(tmp_path, {"space": {"kind": "lp", "dim": 1, "p": 2},
                                  "function": {"family": "kink", "center": [0.5]},
                                  "measure": {"lows": [0.0], "highs": [1.0], "counts": [200]}, "p": [1, 2]})
    out = tmp_path / "o"
    assert main(["sobolev", "--config", cfg, "--out", str(out), "--quiet"]) == 0
    for tag in ("1", "2"):
        rep = json.loads((out / f"sobolev_p{tag}.json").read_text())
        assert rep["passed"] and len(rep["rows"]) == 32
        assert (out / f"sobolev_p{tag}.csv").exists()


def test_bv_interval(tmp_path):
    cfg = write_config(tmp_path, {"space": {"kind": "lp", "dim": 1, "p": 2},
                                  "function": {"family": "indicator", "a": 0.5, "b": 1.0},
                                  "measure": {"lows": [0.0], "highs": [1.0], "counts": [400]},
                                  "bv": {"w0": 0.64, "w_min": 0.02, "M": 6, "N": 12}})
    out = tmp_path / "o"
    assert main(["bv", "--config", cfg, "--out", str(out), "--quiet"]) == 0
    rep = json.loads((out / "bv.json").read_text())
    assert rep["oracle"] == 1.0 and rep["passed"]
    assert abs(rep["rows"][-1]["energy"] - 1) < 0.02


def test_failing_check_exits_1(tmp_path, capsys):
    # a single ramp cannot bring the energy within 2% of the variation
    cfg = write_config(tmp_path, {"space": {"kind": "lp", "dim": 1, "p": 2},
                                  "function": {"family": "indicator", "a": 0.5, "b": 1.0},
                                  "measure": {"lows": [0.0], "highs": [1.0], "counts": [100]},
                                  "bv": {"w0": 0.64, "w_min": 0.64, "M": 1, "N": 2}})
    assert main(["bv", "--config", cfg, "--out", str(tmp_path / "o"), "--quiet"]) == 1
    assert "bv" in capsys.readouterr().err


def test_verify_small(tmp_path, capsys):
    cfg = write_config(tmp_path, {"verify": {"instances": 2, "pairs": 200},
                                  "mapop": {"instances": 3, "max_vectors": 3, "max_labels": 200, "eps": 0.1}})
    out = tmp_path / "o"
    assert main(["verify", "--config", cfg, "--out", str(out)]) == 0
    rep = json.loads((out / "verify.json").read_text())
    assert rep["passed"]
    assert {s["name"] for s in rep["suites"]} >= {"normed_space", "map_operator", "pipeline", "sobolev_bv"}
    assert "suite" in capsys.readouterr().out


def test_module_entry_point(tmp_path):
    env = dict(os.environ, LIPLAB_THREADS="1")
    r = subprocess.run([sys.executable, "-m", "liplab", "--help"], capture_output=True, text=True, env=env)
    assert r.returncode == 0 and "approximate" in r.stdout
    r = subprocess.run([sys.executable, "-m", "liplab", "approximate", "--config", write_config(tmp_path, {"N": 0})],
                       capture_output=True, text=True, env=env)
    assert r.returncode == 2 and "empty index range" in r.stderr
