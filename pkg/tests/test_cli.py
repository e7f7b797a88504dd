from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from quasiham.approximations import lorentzian_spectrum
from quasiham.cli import main, phase_diagram
from quasiham.config import parse_config
from quasiham.dephasing_exact import envelope_factor
from quasiham.errors import ConfigError

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def read_csv(path):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    out = {}
    for key in rows[0]:
        col = [r[key] for r in rows]
        out[key] = np.array([c == "true" for c in col]) if col[0] in ("true", "false") else np.array(col, dtype=float)
    return out


def write_cfg(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def run_cli(*argv):
    return main([str(a) for a in argv])


def test_weak_coupling_recipe(tmp_path):
    assert run_cli("run", "--config", CONFIGS / "weak_coupling.json", "--out-dir", tmp_path) == 0
    ex = read_csv(tmp_path / "exact.csv")
    ga = read_csv(tmp_path / "gaussian.csv")
    rf = read_csv(tmp_path / "redfield.csv")
    assert list(ex) == ["t", "envelope_exact", "gamma_exact", "txx", "txy"]
    assert np.max(np.abs(ga["envelope_gauss"] - ex["envelope_exact"])) < 0.01
    short = ex["t"] < 1 / 0.2
    red_err = np.abs(rf["envelope_redfield"] - ex["envelope_exact"])[short]
    gau_err = np.abs(ga["envelope_gauss"] - ex["envelope_exact"])[short]
    # Redfield misses the initial quadratic decay that the Gaussian form captures
    assert red_err.max() > 10 * gau_err.max()


def test_strong_coupling_recipe(tmp_path):
    assert run_cli("run", "--config", CONFIGS / "strong_coupling.json", "--out-dir", tmp_path) == 0
    ex = read_csv(tmp_path / "exact.csv")
    eng = read_csv(tmp_path / "engine.csv")
    assert np.sum(np.diff(np.sign(ex["envelope_exact"])) != 0) >= 4
    for name, col in [("gaussian.csv", "envelope_gauss"), ("redfield.csv", "envelope_redfield")]:
        env = read_csv(tmp_path / name)[col]
        assert np.all(env > 0) and np.all(np.diff(env) <= 0)
    np.testing.assert_allclose(eng["txx"], ex["txx"], atol=1e-10)
    np.testing.assert_allclose(eng["txy"], ex["txy"], atol=1e-10)


def test_empty_fluctuator_list(tmp_path):
    cfg = {"fluctuators": [], "b0": 0.0, "time": {"t_max": 10, "n_points": 5},
           "outputs": ["exact", "engine", "gaussian", "redfield"]}
    assert run_cli("run", "--config", write_cfg(tmp_path, cfg), "--out-dir", tmp_path) == 0
    np.testing.assert_array_equal(read_csv(tmp_path / "exact.csv")["envelope_exact"], 1.0)
    np.testing.assert_array_equal(read_csv(tmp_path / "gaussian.csv")["envelope_gauss"], 1.0)
    np.testing.assert_array_equal(read_csv(tmp_path / "redfield.csv")["envelope_redfield"], 1.0)
    np.testing.assert_allclose(read_csv(tmp_path / "engine.csv")["txx"], 1.0)


def test_determinism_and_manifest(tmp_path):
    cfg = CONFIGS / "mc_strong_coupling.json"
    a, b = tmp_path / "a", tmp_path / "b"
    assert run_cli("run", "--config", cfg, "--out-dir", a, "--threads", 1) == 0
    assert run_cli("run", "--config", cfg, "--out-dir", b, "--threads", 4) == 0
    for name in ("exact.csv", "mc.csv", "manifest.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    manifest = json.loads((a / "manifest.json").read_text())
    listed = {f["name"]: f["sha256"] for f in manifest["files"]}
    assert set(listed) == {"exact.csv", "mc.csv"}
    for name, digest in listed.items():
        assert hashlib.sha256((a / name).read_bytes()).hexdigest() == digest
    assert manifest["seeds"] == {"mc": 7}
    assert manifest["config_sha256"] == parse_config(json.loads(cfg.read_text())).sha256()
    assert {"quasiham", "numpy", "scipy", "python"} <= set(manifest["versions"])
    mc = read_csv(a / "mc.csv")
    ex = read_csv(a / "exact.csv")
    ok = mc["mc_stderr"] > 0
    assert np.all(np.abs(mc["mc_mean"] - ex["envelope_exact"])[ok] < 4 * mc["mc_stderr"][ok])


def test_seed_override(tmp_path):
    cfg = CONFIGS / "mc_strong_coupling.json"
    assert run_cli("mc", "--config", cfg, "--out-dir", tmp_path / "s", "--seed", 99) == 0
    manifest = json.loads((tmp_path / "s" / "manifest.json").read_text())
    assert manifest["seeds"] == {"mc": 99}
    assert manifest["command"] == "mc"
    assert [f["name"] for f in manifest["files"]] == ["mc.csv"]


def test_seventeen_digit_round_trip(tmp_path):
    cfg = {"fluctuators": [{"g": 0.37, "gamma": 0.11}], "b0": 0.3, "time": {"t_max": 7, "n_points": 9}}
    assert run_cli("run", "--config", write_cfg(tmp_path, cfg), "--out-dir", tmp_path) == 0
    ex = read_csv(tmp_path / "exact.csv")
    t = np.linspace(0, 7, 9)
    np.testing.assert_array_equal(ex["t"], t)
    np.testing.assert_array_equal(ex["envelope_exact"], envelope_factor(0.37, 0.11, t))


def test_routing_errors(tmp_path, capsys):
    biased = {"fluctuators": [{"g": 0.3, "gamma": 0.2, "delta": 0.4}],
              "time": {"t_max": 5, "n_points": 3}, "outputs": ["exact"]}
    assert run_cli("run", "--config", write_cfg(tmp_path, biased), "--out-dir", tmp_path) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "RoutingError"
    biased["outputs"] = ["engine"]
    assert run_cli("run", "--config", write_cfg(tmp_path, biased), "--out-dir", tmp_path) == 0
    capsys.readouterr()
    pulsed = {"fluctuators": [{"g": 0.3, "gamma": 0.2}], "time": {"t_max": 5, "n_points": 3},
              "pulses": [{"kind": "pi_x", "fraction": 0.5}], "outputs": ["gaussian"]}
    assert run_cli("run", "--config", write_cfg(tmp_path, pulsed), "--out-dir", tmp_path) == 2
    assert json.loads(capsys.readouterr().err)["error"] == "RoutingError"
    pulsed["outputs"] = ["mc"]
    pulsed["mc"] = {"n_traj": 200, "dt": 0.001}
    assert run_cli("run", "--config", write_cfg(tmp_path, pulsed), "--out-dir", tmp_path) == 2
    assert "absolute" in json.loads(capsys.readouterr().err)["message"]


def test_config_errors_list_fields(tmp_path, capsys):
    bad = {"bogus": 1, "time": {"t_max": -1, "n_points": 1}, "phase_diagram": {"threshold": 2}}
    assert run_cli("run", "--config", write_cfg(tmp_path, bad)) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "ConfigError"
    assert {"bogus", "time.t_max", "time.n_points", "phase_diagram.threshold"} <= set(err["fields"])
    assert run_cli("run", "--config", tmp_path / "missing.json") == 2
    with pytest.raises(ConfigError):
        parse_config({"pulses": [{"kind": "pi_x"}]})
    with pytest.raises(ConfigError):
        parse_config({"phase_diagram": {"n_g": 4}})


def test_engine_echo_via_cli(tmp_path):
    cfg = {"fluctuators": [{"g": 1.0, "gamma": 1e-6}], "time": {"t_max": 10, "n_points": 11},
           "pulses": [{"kind": "pi_x", "fraction": 0.5}], "outputs": ["engine"]}
    assert run_cli("run", "--config", write_cfg(tmp_path, cfg), "--out-dir", tmp_path) == 0
    eng = read_csv(tmp_path / "engine.csv")
    assert np.all(np.hypot(eng["txx"], eng["txy"]) > 0.999)


def test_mc_with_absolute_pulse(tmp_path):
    cfg = {"fluctuators": [{"g": 1.0, "gamma": 0.2}], "time": {"t_max": 3, "n_points": 4},
           "pulses": [{"kind": "pi_x", "time": 1.5}], "mc": {"n_traj": 2000, "seed": 3, "dt": 0.005},
           "outputs": ["engine", "mc"]}
    assert run_cli("run", "--config", write_cfg(tmp_path, cfg), "--out-dir", tmp_path) == 0
    eng = read_csv(tmp_path / "engine.csv")
    mc = read_csv(tmp_path / "mc.csv")
    assert np.all(np.abs(mc["mc_mean"] - eng["txx"]) < 4 * mc["mc_stderr"] + 2e-3)


def test_spectrum_command(tmp_path):
    single = {"fluctuators": [{"g": 0.3, "gamma": 0.2}], "spectrum": {"omega_min": 1e-3, "omega_max": 10, "n_points": 20}}
    assert run_cli("spectrum", "--config", write_cfg(tmp_path, single), "--out-dir", tmp_path / "a") == 0
    s = read_csv(tmp_path / "a" / "spectrum.csv")
    np.testing.assert_allclose(s["S_cl"], 0.09 * 0.4 / (0.16 + s["omega"] ** 2) / np.pi, rtol=1e-14)
    assert run_cli("spectrum", "--config", CONFIGS / "spectrum_1f.json", "--out-dir", tmp_path / "b") == 0
    s = read_csv(tmp_path / "b" / "spectrum.csv")
    mid = (s["omega"] > 2e-3) & (s["omega"] < 2.0)
    ws = s["S_cl"][mid] * s["omega"][mid]
    assert ws.max() / ws.min() < 1.1
    empty = {"spectrum": {"n_points": 5}}
    assert run_cli("spectrum", "--config", write_cfg(tmp_path, empty), "--out-dir", tmp_path / "c") == 0
    np.testing.assert_array_equal(read_csv(tmp_path / "c" / "spectrum.csv")["S_cl"], 0.0)


def test_phase_diagram_command(tmp_path):
    assert run_cli("phase-diagram", "--config", CONFIGS / "validity_map.json", "--out-dir", tmp_path) == 0
    pd = read_csv(tmp_path / "phase_diagram.csv")
    assert list(pd) == ["g_over_gamma", "t", "envelope_exact", "envelope_gauss", "envelope_redfield",
                        "gauss_valid", "redfield_valid", "exact_dead"]
    assert len(pd["t"]) == 32 * 32
    np.testing.assert_array_equal(pd["gauss_valid"], np.abs(pd["envelope_gauss"] - pd["envelope_exact"]) < 0.01)
    np.testing.assert_array_equal(pd["exact_dead"], np.abs(pd["envelope_exact"]) < 0.01)


def test_phase_diagram_sample_points():
    pd = phase_diagram([0.05], [20.0])
    assert pd.gauss_valid[0, 0] and pd.redfield_valid[0, 0]
    gamma = 1.0
    g = 5 * gamma
    lam = np.sqrt(g * g - gamma * gamma)
    t0 = (np.pi - np.arctan(lam / gamma)) / lam
    pd = phase_diagram([g], [t0])
    assert not pd.gauss_valid[0, 0] and not pd.redfield_valid[0, 0]
    grid = phase_diagram(np.geomspace(0.01, 100, 16), np.geomspace(0.01, 100, 16), threshold=1.0)
    assert grid.gauss_valid.all() and grid.redfield_valid.all()


def test_phase_diagram_rejects_small_grid():
    with pytest.raises(ConfigError):
        parse_config({"phase_diagram": {"n_t": 7}})


def test_published_schema_up_to_date():
    from quasiham.config import config_schema
    path = Path(__file__).resolve().parents[1] / "docs" / "config_schema.json"
    assert json.loads(path.read_text()) == json.loads(json.dumps(config_schema()))
