import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from refocus import __version__
from refocus.cli import main
from refocus.envelope import BeamProfile, QubitLattice, build_addressing_matrix, solve_envelope_exact


def run(*argv):
    try:
        return main(list(argv))
    except SystemExit as exc:
        return exc.code


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


ENVELOPE = ("envelope", "--beam", "gaussian", "--width", "1.0", "--spacing", "1.0", "--sites", "401", "--target", "200")


def test_envelope_end_to_end(tmp_path):
    assert run(*ENVELOPE, "--out-dir", str(tmp_path)) == 0
    header, rows = read_csv(tmp_path / "envelope.csv")
    assert len(rows) == 401
    side = json.loads((tmp_path / "envelope.json").read_text())
    ref = solve_envelope_exact(build_addressing_matrix(QubitLattice.homogeneous(401), BeamProfile.gaussian(1.0)), 200)
    assert side["f0"] == pytest.approx(ref.f0, rel=1e-12)
    assert side["residual_max"] < 1e-12
    man = json.loads((tmp_path / "envelope.manifest.json").read_text())
    assert man["version"] == __version__
    assert set(man["outputs"]) == {"envelope.csv", "envelope.json"}
    assert man["config"]["sites"] == 401


def test_missing_flag_writes_nothing(tmp_path, capsys):
    assert run("envelope", "--beam", "gaussian", "--out-dir", str(tmp_path)) == 1
    assert "usage" in capsys.readouterr().err.lower()
    assert list(tmp_path.iterdir()) == []


@pytest.mark.parametrize(
    "argv",
    [
        ("envelope", "--beam", "gaussian", "--width", "-1", "--spacing", "1", "--sites", "11", "--target", "5"),
        ("envelope", "--beam", "gaussian", "--width", "1", "--spacing", "1", "--sites", "11", "--target", "11"),
        ("chain", "--ions", "1"),
        ("noise", "--cells", "0"),
        ("envelope", "--bogus"),
        ("nonsense",),
    ],
)
def test_validation_errors(tmp_path, argv):
    assert run(*argv, "--out-dir", str(tmp_path)) == 1
    assert list(tmp_path.iterdir()) == []


def test_numerical_failures_exit_two(tmp_path, capsys):
    assert run("chain", "--ions", "20", "--anisotropy", "2", "--out-dir", str(tmp_path)) == 2
    assert "soft transverse mode" in capsys.readouterr().err
    wide = ("envelope", "--beam", "gaussian", "--width", "4", "--spacing", "1", "--sites", "61", "--target", "30")
    assert run(*wide, "--out-dir", str(tmp_path)) == 2
    assert list(tmp_path.iterdir()) == []


def test_manifest_round_trip(tmp_path):
    first, second = tmp_path / "a", tmp_path / "b"
    assert run("noise", "--cells", "3", "--samples", "200", "--seed", "5", "--out-dir", str(first)) == 0
    assert run("noise", "--config", str(first / "noise.manifest.json"), "--out-dir", str(second)) == 0
    assert (first / "noise.csv").read_bytes() == (second / "noise.csv").read_bytes()


def test_config_file_defaults_yield_to_flags(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"width": 0.5, "spacing": 1.0, "sites": 21, "target": 10, "beam": "gaussian"}))
    assert run("envelope", "--config", str(cfg), "--width", "1.5", "--out-dir", str(tmp_path / "o")) == 0
    man = json.loads((tmp_path / "o" / "envelope.manifest.json").read_text())
    assert man["config"]["width"] == 1.5
    assert man["config"]["sites"] == 21


def test_env_out_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("REFOCUS_OUT_DIR", str(tmp_path))
    assert run("chain", "--ions", "5") == 0
    assert (tmp_path / "chain.json").exists()
    assert (tmp_path / "chain.manifest.json").exists()


def test_precision_flag(tmp_path):
    assert run(*ENVELOPE, "--precision", "4", "--out-dir", str(tmp_path)) == 0
    _, rows = read_csv(tmp_path / "envelope.csv")
    assert all(len(v.replace("-", "").replace(".", "").split("e")[0].lstrip("0")) <= 4 for v in rows[200][1:])


@pytest.mark.parametrize("sub", ["envelope", "chain", "gate", "spectral", "noise", "figures"])
def test_help(sub):
    out = subprocess.run([sys.executable, "-m", "refocus.cli", sub, "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    assert "usage" in out.stdout.lower()


def test_spectral_outputs(tmp_path):
    assert run("spectral", "--ions", "21", "--target", "10", "--grid-points", "501", "--out-dir", str(tmp_path)) == 0
    header, rows = read_csv(tmp_path / "spectral.csv")
    assert header == ["x_over_l", "intensity"] and len(rows) == 501
    side = json.loads((tmp_path / "spectral.json").read_text())
    assert {"kx_l", "re_f", "im_f", "theta_rad"} <= set(side)
    assert len(side["re_f"]) == 21


def test_noise_outputs(tmp_path):
    assert run("noise", "--cells", "3", "--samples", "100", "--thermal", "--out-dir", str(tmp_path)) == 0
    header, rows = read_csv(tmp_path / "noise.csv")
    assert header == ["dr", "dphi", "mean_error", "stderr"] and len(rows) == 9
    assert float(rows[0][2]) == 0.0
    sigma = json.loads((tmp_path / "noise_thermal.json").read_text())
    assert sigma


def test_gate_scan(tmp_path):
    argv = ("gate", "--pair", "9,10", "--mu-min", "9.98", "--mu-max", "9.99", "--mu-steps", "2", "--ncorr", "-1")
    assert run(*argv, "--out-dir", str(tmp_path)) == 0
    header, rows = read_csv(tmp_path / "gate.csv")
    assert header[0] == "mu_over_omega_z" and len(rows) == 2
    summary = json.loads((tmp_path / "gate.json").read_text())
    assert summary["best_mu"] in (9.98, 9.99)
    man = json.loads((tmp_path / "gate.manifest.json").read_text())
    assert "n_corr" in json.dumps(man["notes"])


def test_fig1a(tmp_path):
    assert run("figures", "--which", "fig1a", "--out-dir", str(tmp_path)) == 0
    man = json.loads((tmp_path / "fig1a.manifest.json").read_text())
    assert man["notes"]["figure"] == "fig1a"
    assert len(man["outputs"]) >= 1
    assert sorted(man["outputs"]) == ["fig1a_w0.5.csv", "fig1a_w1.5.csv", "fig1a_w1.csv"]
    for name in man["outputs"]:
        header, rows = read_csv(tmp_path / name)
        assert header == ["offset", "f", "abs_f"] and len(rows) == 401


def test_fig1b(tmp_path):
    assert run("figures", "--which", "fig1b", "--out-dir", str(tmp_path)) == 0
    header, rows = read_csv(tmp_path / "fig1b.csv")
    assert header == ["w_over_a", "f0_exact", "f0_small_w", "f0_large_w"]
    w = np.array([float(r[0]) for r in rows])
    exact = np.array([float(r[1]) for r in rows])
    assert np.all(np.diff(w) > 0) and np.all(np.diff(exact) >= 0)


def test_fig2_and_fig4(tmp_path):
    assert run("figures", "--which", "fig2", "--out-dir", str(tmp_path)) == 0
    outs = json.loads((tmp_path / "fig2.manifest.json").read_text())["outputs"]
    assert any("amplitude" in o for o in outs) and any("intensity" in o for o in outs)
    assert run("figures", "--which", "fig4", "--out-dir", str(tmp_path)) == 0
    header, rows = read_csv(tmp_path / "fig4.csv")
    assert header == ["dr", "dphi", "mean_error", "stderr"] and len(rows) == 441


def test_long_figures_need_confirmation(tmp_path):
    assert run("figures", "--which", "fig3a", "--out-dir", str(tmp_path)) == 1
    assert list(tmp_path.iterdir()) == []


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert run("chain", "--ions", "5", "--out-dir", str(blocker / "sub")) == 1
