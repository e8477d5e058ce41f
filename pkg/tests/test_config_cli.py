import json
import subprocess
import sys
import textwrap

import numpy as np
import pytest

from dispersive_sme import cli
from dispersive_sme.config import ConfigError, from_mapping, parse_config, schema_text, system_state
from dispersive_sme.records import read_series_csv, read_state_dump

SMALL = """
system = "qubit"
{seed}

[physics]
kappa = 1.0
chi = 0.6
efficiency = {eta}

[drive]
kind = "constant"
u0 = 0.2

[truncation]
N = 6

[initial]
system = "plus"
alpha0 = 0.3

[numerics]
dt = {dt}
T = {T}
scheme = "{scheme}"
"""


def write_cfg(tmp_path, name="run.toml", seed="seed = 4", eta=0.4, dt=1e-3, T=0.2, scheme="kraus-positive"):
    p = tmp_path / name
    p.write_text(SMALL.format(seed=seed, eta=eta, dt=dt, T=T, scheme=scheme))
    return p


def manifest(out):
    return json.loads((out / "manifest.json").read_text())


# --- configuration -----------------------------------------------------------


def test_minimal_config_defaults(tmp_path):
    cfg = parse_config(write_cfg(tmp_path))
    assert cfg.system == "qubit" and cfg.seed == 4
    assert cfg["numerics"]["n_traj"] >= 1
    assert cfg["tolerances"]["photon_max"] == 1e-6
    assert cfg.n_levels == 2 and cfg.n_modes == 1 and cfg.truncations == (6,)
    assert np.allclose(system_state(cfg), np.full((2, 2), 0.5))


def test_digest_is_stable_and_tracks_overrides(tmp_path):
    a, b = parse_config(write_cfg(tmp_path)), parse_config(write_cfg(tmp_path, "b.toml"))
    assert a.digest() == b.digest()
    assert a.override("numerics", "dt", 2e-3).digest() != a.digest()


def test_efficiency_out_of_range_names_the_key(tmp_path):
    with pytest.raises(ConfigError, match="efficiency"):
        parse_config(write_cfg(tmp_path, eta=1.5))


def test_unknown_key_suggests_spelling():
    with pytest.raises(ConfigError, match="did you mean 'kappa'"):
        from_mapping({"system": "qubit", "physics": {"kapa": 1.0}})


def test_class_specific_requirements():
    with pytest.raises(ConfigError, match="chis"):
        from_mapping({"system": "qudit", "physics": {"kappa": 1.0}})
    with pytest.raises(ConfigError, match="kappas"):
        from_mapping({"system": "multicavity", "physics": {"chis": [[0.1], [0.2]]}})


def test_T_must_be_grid_multiple(tmp_path):
    with pytest.raises(ConfigError, match="dt"):
        parse_config(write_cfg(tmp_path, T=0.2005))


def test_initial_state_presets():
    base = {"system": "qudit", "physics": {"chis": [0.1, 0.2, 0.3]}, "truncation": {"N": 4}}
    for spec, expected in [("uniform", np.full((3, 3), 1 / 3)), ("mixed", np.eye(3) / 3),
                           ("level:2", np.diag([0, 0, 1.0]))]:
        cfg = from_mapping({**base, "initial": {"system": spec}})
        assert np.allclose(system_state(cfg), expected)


def test_schema_lists_every_section():
    text = schema_text()
    for sec in ("[physics]", "[numerics]", "[tolerances]"):
        assert sec in text


# --- command line -------------------------------------------------------------


def test_print_schema(capsys):
    assert cli.main(["print-schema"]) == 0
    assert "efficiency" in capsys.readouterr().out


def test_bad_command_is_usage_error():
    assert cli.main(["no-such-command"]) == 2


def test_simulate_reduced_without_amplitudes_exits_2(tmp_path, capsys):
    out = tmp_path / "o"
    assert cli.main(["simulate-reduced", "--config", str(write_cfg(tmp_path)), "--out", str(out)]) == 2
    assert "amplitude" in capsys.readouterr().err
    assert manifest(out)["exit_code"] == 2


def test_bad_config_exits_2_and_writes_manifest(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["simulate-full", "--config", str(write_cfg(tmp_path, eta=1.5)), "--out", str(out)]) == 2
    assert "efficiency" in manifest(out)["error"]


def test_verify_without_seed_exits_2(tmp_path):
    out = tmp_path / "o"
    cfg = write_cfg(tmp_path, seed="")
    assert cli.main(["verify-invariance", "--config", str(cfg), "--out", str(out)]) == 2
    assert "seed" in manifest(out)["error"]


def test_coarse_em_invariance_fails_with_metric(tmp_path, capsys):
    out = tmp_path / "o"
    cfg = write_cfg(tmp_path, eta=1.0, dt=0.05, T=5.0, scheme="euler-maruyama")
    assert cli.main(["verify-invariance", "--config", str(cfg), "--out", str(out)]) == 1
    line = capsys.readouterr().out
    assert "FAIL" in line and "min_eigenvalue" in line
    m = manifest(out)
    assert m["passed"] is False and m["exit_code"] == 1
    report = json.loads((out / "report.json").read_text())
    assert report["metrics"]["min_eigenvalue"] < -1e-10


def test_pipeline_displaced_reduced_reconstruct(tmp_path):
    cfg = write_cfg(tmp_path)
    d, r, x = tmp_path / "d", tmp_path / "r", tmp_path / "x"
    assert cli.main(["simulate-displaced", "--config", str(cfg), "--out", str(d)]) == 0
    amp = d / "amplitudes.csv"
    assert cli.main(["simulate-reduced", "--config", str(cfg), "--out", str(r), "--amplitudes", str(amp)]) == 0
    # same seed drives both frames: records agree and the displaced run stays in vacuum
    td, tr = read_series_csv(d / "trajectory.csv"), read_series_csv(r / "trajectory.csv")
    assert np.max(np.abs(td["n_mode0"])) <= 1e-12
    assert np.nanmax(np.abs(td["dy"] - tr["dy"])) <= 1e-12
    assert read_state_dump(r / "states.bin").dims == (2,)
    assert cli.main(["reconstruct", "--config", str(cfg), "--out", str(x), "--amplitudes", str(amp),
                     "--states", str(r / "states.bin")]) == 0
    red = read_series_csv(x / "reduced.csv")
    assert np.allclose(red["pop_level0"] + red["pop_level1"], 1.0, atol=1e-12)
    m = manifest(x)
    assert m["outputs"] == ["reduced.csv"] and m["exit_code"] == 0
    assert len(m["config_sha256"]) == 64


def test_reconstruct_from_displaced_dump(tmp_path):
    cfg = write_cfg(tmp_path)
    d, x = tmp_path / "d", tmp_path / "x"
    assert cli.main(["simulate-displaced", "--config", str(cfg), "--out", str(d)]) == 0
    assert cli.main(["reconstruct", "--config", str(cfg), "--out", str(x), "--amplitudes",
                     str(d / "amplitudes.csv"), "--states", str(d / "states.bin")]) == 0
    assert "cavity_photons" in read_series_csv(x / "reduced.csv")


def test_amplitude_grid_mismatch_is_usage_error(tmp_path):
    cfg = write_cfg(tmp_path)
    a = tmp_path / "a"
    assert cli.main(["amplitudes", "--config", str(cfg), "--out", str(a)]) == 0
    out = tmp_path / "o"
    code = cli.main(["simulate-reduced", "--config", str(cfg), "--out", str(out), "--dt", "2e-3",
                     "--amplitudes", str(a / "amplitudes.csv")])
    assert code == 2 and "grid step" in manifest(out)["error"]


def test_console_script_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "dispersive_sme.cli", "print-schema"], capture_output=True, text=True)
    assert r.returncode == 0 and "[numerics]" in r.stdout


def test_default_dt_scales_with_fastest_decay():
    cfg = from_mapping({"system": "qubit", "physics": {"kappa": 1.3}, "numerics": {"T": 2.0}})
    dt = cfg["numerics"]["dt"]
    assert dt <= 1e-3 / 1.3 and round(2.0 / dt) * dt == pytest.approx(2.0, abs=1e-12)
    multi = from_mapping({"system": "multicavity", "physics": {"kappas": [1.0, 4.0], "chis": [[0.1, 0.2], [0.3, 0.4]]}})
    assert multi["numerics"]["dt"] == pytest.approx(2.5e-4)
