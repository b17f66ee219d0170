import csv
import json
import subprocess
import sys

import pytest

from stokescyl import cli
from stokescyl.errors import ConfigError
from stokescyl.report import Reporter, config_hash


def test_defaults_validate():
    c = cli.load_config()
    assert c["grid.Nx"] == 16 and c["rates.beta"] == 0.5


def test_file_then_flags(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"grid": {"Nx": 8, "Ny": 8}, "seed": 3, "mode.xi": 0.25}))
    c = cli.load_config(p, ["grid.Nx=12", "grid.Ny=12"])
    assert c["grid.Nx"] == 12 and c["seed"] == 3 and c["mode.xi"] == 0.25


@pytest.mark.parametrize(
    "override,path",
    [
        ("grid.Nx=abc", "grid.Nx"),
        ("grid.Nx=2", "grid.Nx"),
        ("grid.Ny=20", "grid.Ny"),
        ("axial.M=24", "axial.M"),
        ("exponents.q=1", "exponents.q"),
        ("resolvent.ensemble=4", "resolvent.ensemble"),
        ("weight.omega=gauss", "weight.omega"),
        ("nope.key=1", "nope.key"),
    ],
)
def test_config_errors_name_the_field(override, path):
    with pytest.raises(ConfigError) as exc:
        cli.load_config(None, [override])
    assert exc.value.path == path


def test_hash_ignores_output_section():
    a = cli.load_config(None, ["output.dir=/tmp/a"])
    b = cli.load_config(None, ["output.dir=/tmp/b"])
    assert config_hash(cli.hashed_config(a)) == config_hash(cli.hashed_config(b))
    c = cli.load_config(None, ["seed=1"])
    assert config_hash(cli.hashed_config(a)) != config_hash(cli.hashed_config(c))


def test_degenerate_mode_exit_code(tmp_path, capsys):
    code = cli.main(["mode-solve", f"--output={tmp_path}", "--rates.beta=0", "--mode.xi=0"])
    assert code == 2
    assert "eta = 0" in capsys.readouterr().err


def test_bad_flag_exit_code(tmp_path):
    assert cli.main(["eig", f"--output={tmp_path}", "stray"]) == 2
    assert cli.main(["eig", f"--output={tmp_path}", "--grid.Nx=x"]) == 2


def test_eig_report(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path))
    assert cli.main(["eig", "--eig.counts=16,32,64", "--grid.Nx=64", "--grid.Ny=64"]) == 0
    out = json.loads((tmp_path / "eig" / "thresholds.json").read_text())
    assert out["grid"] == [64, 64]
    assert out["alpha0"] == pytest.approx(2.0, rel=3e-3)
    assert out["alpha1"] == pytest.approx(1.0, rel=3e-3)
    assert out["alpha_bar"] == pytest.approx(1.0, rel=3e-3)
    assert len(out["config_hash"]) == 16 and out["seed"] == 0
    with open(tmp_path / "eig" / "thresholds.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert {r["config_hash"] for r in rows} == {out["config_hash"]}
    assert (tmp_path / "eig" / "thresholds.png").stat().st_size > 0


def test_plot_script_runs(tmp_path):
    rep = Reporter(tmp_path, "abc", 0)
    rep.csv("t.csv", ["x", "y", "g"], [[1.0, 2.0, "a"], [2.0, 3.0, "a"], [1.0, 1.0, "b"]])
    rep.plot_script("plot_t.py", "t.csv", "x", ["y"], logy=True, group="g")
    subprocess.run([sys.executable, "plot_t.py"], cwd=tmp_path, check=True)
    assert (tmp_path / "plot_t.png").exists()


def test_reporter_formats(tmp_path):
    rep = Reporter(tmp_path, "h", 7, figures=False)
    rep.csv("a.csv", ["v"], [[0.1], [float("nan")], [True]])
    raw = (tmp_path / "a.csv").read_bytes()
    assert raw.startswith(b"v,config_hash,seed\r\n0.1,h,7\r\nnan,h,7\r\ntrue,h,7\r\n")
    rep.json("a.json", {"z": complex(1, 2), "inf": float("inf")})
    data = json.loads((tmp_path / "a.json").read_text())
    assert data == {"config_hash": "h", "seed": 7, "z": [1.0, 2.0], "inf": "inf"}
    assert rep.figure("x.png", lambda ax: None) is None


def test_console_entry_point():
    out = subprocess.run([sys.executable, "-m", "stokescyl.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "resolvent-sweep" in out.stdout
