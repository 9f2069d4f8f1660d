import csv
import json
import math
import re
import subprocess
import sys

import pytest

from nelsonmc.cli import main


def run(tmp_path, *argv):
    return main([*argv[:1], "--out", str(tmp_path), *argv[1:]]) if argv[0] in (
        "estimate", "gamma") else main(list(argv))


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def check_errors(text):
    return [float(m) for m in re.findall(r"rel_err=(\S+)", text)]


@pytest.mark.parametrize("argv", [
    ["kernels", "--kernel", "W", "--at", "0,0", "--eps", "1"],
    ["kernels", "--kernel", "rho", "--at", "0,0", "--d", "2", "--eps", "0"],
])
def test_kernel_checks(argv, capsys):
    assert main(argv) == 0
    errs = check_errors(capsys.readouterr().out)
    assert errs and max(errs) < 1e-10


def test_kernel_W_eps0_value(capsys):
    assert main(["kernels", "--kernel", "W", "--at", "0,1", "--eps", "0"]) == 0
    value = float(capsys.readouterr().out.split("\n")[0].split("=")[-1])
    assert value == pytest.approx(4 * math.pi / math.e, rel=1e-12)


def test_kernel_polaron_value(capsys):
    assert main(["kernels", "--kernel", "polaron", "--at", "1,0", "--eps", "0"]) == 0
    value = float(capsys.readouterr().out.split("=")[-1])
    assert value == pytest.approx(3.9251891539869, rel=1e-12)


def test_kernel_csv(tmp_path, capsys):
    out = tmp_path / "w.csv"
    assert main(["kernels", "--kernel", "W", "--csv", str(out), "--r-range", "0.1,2,5",
                 "--t-values", "0,0.5"]) == 0
    data = rows(out)
    assert len(data) == 10


def test_unknown_key_exit_2(tmp_path, capsys):
    assert run(tmp_path, "estimate", "--set", "model.foo=1") == 2
    assert "model.foo" in capsys.readouterr().err


def test_bad_config_file_exit_2(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"schema_version": 1, "mc": {"n_path": 10}}))
    assert run(tmp_path, "estimate", "--config", str(cfg)) == 2
    assert "mc.n_path" in capsys.readouterr().err


def test_free_estimate(tmp_path):
    assert run(tmp_path, "estimate", "--g", "0", "--P", "1,0,0", "--n-paths", "20000",
               "--dt", "0.25", "--prefix", "free") == 0
    s = json.loads((tmp_path / "free.json").read_text())
    assert s["status"] == "ok"
    assert abs(s["mean_re"] - math.exp(-1.0)) <= 3 * s["std_error"]
    assert s["weight_cap_hits"] == 0


def test_eps_sweep_csv(tmp_path):
    assert run(tmp_path, "estimate", "--g", "0.5", "--sweep", "eps=0.5,0.25,0",
               "--n-paths", "64", "--dt", "0.125", "--prefix", "sw") == 0
    data = rows(tmp_path / "sw.csv")
    assert [r["value"] for r in data] == ["0.5", "0.25", "0"]
    assert all(r["status"] == "ok" and float(r["mean_im"]) == 0.0 for r in data)
    for i in range(3):
        s = json.loads((tmp_path / f"sw_{i:03d}.json").read_text())
        assert s["master_seed"] == 0


def test_diamagnetic_sweep(tmp_path):
    assert run(tmp_path, "estimate", "--g", "0.5", "--sweep",
               "P=0,0,0;0.5,0,0;1,0,0;0,2,0;1,1,1", "--n-paths", "200", "--dt", "0.25",
               "--prefix", "dia") == 0
    data = rows(tmp_path / "dia.csv")
    assert len(data) == 5
    assert all(r["ok"] == "True" for r in data)
    v0 = float(data[0]["modulus"])
    assert all(float(r["modulus"]) <= v0 for r in data)


def test_gamma_2d_bound(tmp_path):
    assert run(tmp_path, "gamma", "--d", "2", "--g", "1", "--eps", "0", "--sweep", "T=0.5,1",
               "--n-paths", "200", "--dt", "0.125", "--prefix", "gam") == 0
    data = rows(tmp_path / "gam.csv")
    for r in data:
        assert float(r["lower_bound"]) == pytest.approx(math.exp(-2 * math.pi), rel=1e-14)
        assert r["bound_satisfied"] == "True"


def test_gamma_free_is_one(tmp_path):
    assert run(tmp_path, "gamma", "--g", "0", "--n-paths", "50", "--dt", "0.25",
               "--prefix", "g0") == 0
    assert float(rows(tmp_path / "g0.csv")[0]["gamma"]) == 1.0


def test_gamma_with_momentum_exit_2(tmp_path):
    assert run(tmp_path, "gamma", "--P", "1,0,0", "--n-paths", "10") == 2


def test_overflow_exit_4(tmp_path):
    assert run(tmp_path, "estimate", "--g", "60", "--mode", "direct", "--n-paths", "16",
               "--dt", "0.25", "--prefix", "big") == 4
    s = json.loads((tmp_path / "big.json").read_text())
    assert s["status"] == "error" and s["weight_cap_hits"] > 0


def test_polaron_estimate(tmp_path):
    assert run(tmp_path, "estimate", "--model", "polaron", "--lambda", "0", "--eps", "0",
               "--g", "0.2", "--T", "0.5", "--n-paths", "128", "--dt", "0.0625",
               "--prefix", "pol") == 0
    r = rows(tmp_path / "pol.csv")[0]
    assert r["collision_events"] == "0"
    assert float(r["mean_re"]) > 1.0


def test_rerun_from_summary_is_byte_identical(tmp_path):
    assert run(tmp_path, "estimate", "--g", "0.5", "--sweep", "eps=0.5,0.25", "--no-crn",
               "--n-paths", "100", "--dt", "0.25", "--prefix", "e") == 0
    first = json.loads((tmp_path / "e_001.json").read_text())
    assert first["master_seed"] == 1
    assert run(tmp_path, "estimate", "--config", str(tmp_path / "e_001.json"),
               "--prefix", "again") == 0
    second = json.loads((tmp_path / "again.json").read_text())
    for key in ("mean_re", "mean_im", "std_error", "master_seed"):
        assert repr(first[key]) == repr(second[key])
    assert first["config"]["model"] == second["config"]["model"]


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "nelsonmc", "--help"], capture_output=True,
                          text=True)
    assert proc.returncode == 0
    assert "estimate" in proc.stdout
