import json
import shutil
import subprocess
import sys
from pathlib import Path

import pytest

from eaem.cli import rerun_manifest, run
from eaem.specimen import data_dir


@pytest.fixture
def cwd(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def out_json(capsys):
    return json.loads(capsys.readouterr().out)


def test_params(cwd, capsys):
    assert run(["params", "--energy", "300"]) == 0
    d = out_json(capsys)
    assert d["wavenumber_per_nm"] == pytest.approx(3.2e3, rel=0.01)
    assert d["theta_E_rad"] == pytest.approx(41e-6, rel=0.02)


def test_params_to_file_has_manifest(cwd):
    assert run(["params", "--out", "p.json"]) == 0
    man = json.loads((cwd / "p.manifest.json").read_text())
    assert man["subcommand"] == "params"
    assert man["outputs"] == ["p.json"]
    assert man["seed"] is None


def test_usage_errors(cwd):
    assert run(["nosuch"]) == 2
    assert run(["params", "--bogus"]) == 2
    assert run([]) == 2


def test_domain_error_exit_1(cwd, capsys):
    assert run(["params", "--energy", "-5"]) == 1
    assert "kinetic energy" in capsys.readouterr().err


def test_inelastic_analytic_only(cwd, capsys):
    assert run(["inelastic", "--energy", "300", "--eloss", "20", "--samples", "0", "--seed", "1"]) == 0
    d = json.loads((cwd / "inelastic_summary.json").read_text())
    assert set(d) >= {"theta_E_rad", "theta_cut_rad", "b_max_nm", "median_rad", "mean_rad"}
    assert "sample_mean_rad" not in d
    assert not (cwd / "inelastic_histogram.csv").exists()


def test_generated_seed_printed_and_recorded(cwd, capsys):
    assert run(["inelastic", "--samples", "100"]) == 0
    err = capsys.readouterr().err
    seed = int(err.split("seed:")[1].split()[0])
    man = json.loads((cwd / "inelastic.manifest.json").read_text())
    assert man["seed"] == seed
    assert "--seed" in man["argv"]


def test_composition_and_xsec(cwd, capsys):
    assert run(["composition", "--derive"]) == 0
    assert out_json(capsys)["density_per_nm3"]["O"] == pytest.approx(27.7, rel=0.01)
    assert run(["xsec", "--amplitudes", "tabulated"]) == 0
    d = out_json(capsys)
    assert d["p_d"] == pytest.approx(0.0522, rel=1e-3)
    assert d["p_inner_shell"] == pytest.approx(8.6e-4, rel=1e-12)
    assert d["p_inel_rounded"] == 0.1


def test_data_dir_environment(cwd, capsys, monkeypatch):
    alt = cwd / "data"
    shutil.copytree(data_dir(), alt)
    (alt / "inner_shell_default.csv").write_text("element,sigma_nm2\nH,0\nC,0\nN,0\nO,0\nS,1e-3\n")
    monkeypatch.setenv("EAEM_DATA_DIR", str(alt))
    assert run(["xsec"]) == 0
    assert out_json(capsys)["p_inner_shell"] == pytest.approx(0.067 * 30 * 1e-3)
    monkeypatch.setenv("EAEM_DATA_DIR", str(cwd / "missing"))
    assert run(["xsec"]) == 1


def test_speckle_outputs(cwd, capsys):
    assert run(["speckle", "--amplitudes", "analytic", "--n-theta", "20", "--seed", "3"]) == 0
    d = json.loads((cwd / "speckle_summary.json").read_text())
    assert d["theta_c_rad"] == pytest.approx(0.07798213092, rel=1e-5)
    assert d["epsilon"] == pytest.approx(0.0174, rel=0.01)
    header = (cwd / "speckle_curves.csv").read_text().splitlines()[0]
    assert header == "theta_rad,transmitted_intensity,mean_scattered_intensity,H"
    assert run(["speckle", "--mode", "focused", "--amplitudes", "analytic", "--mc-configs", "50",
                "--seed", "1", "--out-prefix", "f/sp"]) == 0
    assert json.loads((cwd / "f/sp_summary.json").read_text())["monte_carlo"]["n_configs"] == 50


def test_protocol_json(cwd, capsys):
    assert run(["protocol", "--k", "10", "--n", "100000", "--delta-phi", "0.001", "--pfail", "0.01",
                "--seed", "2", "--replicates", "20", "--policy", "discard", "--estimator", "linear"]) == 0
    d = out_json(capsys)
    for key in ("estimate", "stderr", "empirical_variance", "spoil_rate"):
        assert key in d
    assert d["n_processes"] == 10000


def test_image_rerun_bit_exact(cwd, capsys):
    argv = ["image", "--phantom", "disc", "--size", "30", "--dose", "400", "--k", "36", "--pinel", "0.1",
            "--pfail", "0.0054", "--d01", "30", "--sigma-inner", "0.15", "--sigma-outer", "0.75",
            "--seed", "9", "--smooth-sigma", "0.3", "--filter", "laplacian", "--out-prefix", "img/run"]
    assert run(argv) == 0
    man = json.loads((cwd / "img/run.manifest.json").read_text())
    before = {f: Path(f).read_bytes() for f in man["outputs"]}
    assert any(f.endswith(".pgm") for f in before)
    for f in before:
        Path(f).unlink()
    assert rerun_manifest(cwd / "img/run.manifest.json") == 0
    assert {f: Path(f).read_bytes() for f in man["outputs"]} == before


def test_image_from_map_file(cwd, capsys):
    assert run(["image", "--phantom", "shell", "--size", "20", "--seed", "1", "--out-prefix", "a"]) == 0
    assert run(["image", "--map", "a_truth.pgm", "--seed", "1", "--out-prefix", "b"]) == 0
    assert run(["image", "--map", "a_truth.csv", "--seed", "1", "--out-prefix", "c"]) == 1
    assert run(["image", "--map", "a_truth.csv", "--pixel-size", "0.3", "--seed", "1", "--out-prefix", "c"]) == 0
    assert run(["image", "--phantom", "disc", "--dose", "100", "--seed", "1"]) == 1


def test_reproduce_idempotent(cwd, capsys):
    args = ["reproduce-paper", "--seed", "42", "--only", "1", "2", "3", "7", "8", "10"]
    assert run(args + ["--out-dir", "r1"]) == 0
    assert run(args + ["--out-dir", "r2"]) == 0
    for name in ("report.txt", "report.json"):
        assert (cwd / "r1" / name).read_bytes() == (cwd / "r2" / name).read_bytes()
    assert (cwd / "r1/manifest.json").exists()
    assert "[PASS] C1" in (cwd / "r1/report.txt").read_text()
    assert run(args + ["--out-dir", "r3", "--strict"]) == 1


def test_module_entry_point(cwd):
    r = subprocess.run([sys.executable, "-m", "eaem", "params"], capture_output=True, text=True)
    assert r.returncode == 0
    assert "wavenumber_per_nm" in r.stdout


def test_counts_accept_scientific_notation(cwd, capsys):
    assert run(["protocol", "--n", "1e3", "--k", "10", "--seed", "1", "--out", "p.json"]) == 0
    assert json.loads((cwd / "p.json").read_text())["n_electrons"] == 1000
    assert run(["protocol", "--n", "1.5e0", "--seed", "1"]) == 2
