import json
import textwrap

import numpy as np
import pytest

from viscous_midpoint.cli import (
    EXIT_BUDGET,
    EXIT_CONFIG,
    EXIT_MODEL,
    EXIT_OK,
    EXIT_USAGE,
    load_config,
    main,
)
from viscous_midpoint.exceptions import ConfigError
from viscous_midpoint.io import fmt, read_csv

WAVE = """
[model]
kind = wave
n = {n}
xi = 1/2
alpha = 1.0

[run]
scheme = viscous_damped
dt = 0.01
dt_list = 0.1, 0.05, 0.02, 0.01
T = {T}
z0_policy = smooth
seed = 3

[certify]
hautus = yes
hautus_points = 201
transfer = yes
beta_list = 1.0, 2.0
transfer_points = 101
gramian_variants = discrete_viscous, filtered
gramian_dt_list = 0.05, 0.025
gramian_T = 2
delta = 1
forced = yes
forced_dt_list = 0.1, 0.05
forced_T = 2
forced_samples = 6
"""


def write_cfg(tmp_path, text=None, **kw):
    params = {"n": 20, "T": 10}
    params.update(kw)
    path = tmp_path / "wave.cfg"
    path.write_text(textwrap.dedent(text if text is not None else WAVE.format(**params)))
    return path


def run(args, capsys):
    code = main([str(a) for a in args])
    out, err = capsys.readouterr()
    return code, out, err


def test_simulate_writes_trajectory(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    code, _, err = run(["simulate", cfg, "--out", tmp_path / "o"], capsys)
    assert code == EXIT_OK, err
    header, data = read_csv(tmp_path / "o" / "trajectory.csv")
    assert header == ["k", "t", "E", "E_tilde", "damp", "visc3", "visc6", "stage_residual"]
    assert data.shape[0] == 1001
    assert data[:, 7].max() <= 1e-9
    np.testing.assert_array_equal(data[:, 0], np.arange(1001))


def test_sweep_writes_one_row_per_dt(tmp_path, capsys):
    cfg = write_cfg(tmp_path, T=4)
    code, _, err = run(["sweep", "--config", cfg, "--out", tmp_path / "o", "--threads", "2"], capsys)
    assert code == EXIT_OK, err
    header, data = read_csv(tmp_path / "o" / "sweep.csv")
    assert header == ["dt", "nu_hat", "mu_hat", "r2", "rho_running"]
    assert data.shape == (4, 5)
    np.testing.assert_allclose(data[:, 0], [0.1, 0.05, 0.02, 0.01])
    assert np.all(data[:, 1] > 0)


def test_certify_writes_every_table(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    out = tmp_path / "o"
    code, _, err = run(["certify", cfg, "--out", out], capsys)
    assert code == EXIT_OK, err
    lines = (out / "gramian.csv").read_text().splitlines()
    assert lines[0] == "variant,dt,T,lambda_min,lambda_max,term_b,term_a1,term_a2"
    assert [ln.split(",")[0] for ln in lines[1:]] == ["discrete_viscous"] * 2 + ["filtered"] * 2
    _, hautus = read_csv(out / "hautus.csv")
    assert hautus.shape[1] == 2 and hautus[:, 1].min() > 0
    header, transfer = read_csv(out / "transfer.csv")
    assert header == ["beta", "omega", "hnorm"]
    assert transfer.shape == (202, 3)
    _, forced = read_csv(out / "forced.csv")
    assert forced.shape == (2, 4)


def test_spectrum_and_plots(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    out = tmp_path / "o"
    code, _, err = run(["spectrum", cfg, "--out", out, "--emit-plots"], capsys)
    assert code == EXIT_OK, err
    header, data = read_csv(out / "spectrum.csv")
    assert header == ["index", "mu", "residual"]
    assert data.shape == (40, 3)
    assert (out / "spectrum.gnuplot").read_text().count("spectrum.csv") == 1
    assert (out / "spectrum.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_sweep_plots(tmp_path, capsys):
    cfg = write_cfg(tmp_path, T=2)
    out = tmp_path / "o"
    assert run(["sweep", cfg, "--out", out, "--emit-plots"], capsys)[0] == EXIT_OK
    for name in ("decay.gnuplot", "decay.png", "sweep_energies.csv"):
        assert (out / name).exists()
    assert "sweep_energies.csv" in (out / "decay.gnuplot").read_text()


def test_reruns_are_byte_identical(tmp_path, capsys):
    cfg = write_cfg(tmp_path, T=2)
    text = cfg.read_text().replace("z0_policy = smooth", "z0_policy = random-seeded")
    cfg.write_text(text)
    for name in ("a", "b"):
        assert run(["simulate", cfg, "--out", tmp_path / name], capsys)[0] == EXIT_OK
        assert run(["certify", cfg, "--out", tmp_path / name], capsys)[0] == EXIT_OK
    for f in ("trajectory.csv", "gramian.csv", "hautus.csv", "transfer.csv", "forced.csv", "summary.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    run(["simulate", cfg, "--out", tmp_path / "c", "--seed", "4"], capsys)
    assert (tmp_path / "c" / "trajectory.csv").read_bytes() != (tmp_path / "a" / "trajectory.csv").read_bytes()


def test_numbers_round_trip():
    for x in (0.1, 1 / 3, 2.0**-1074, 1e308, -7.25):
        assert float(fmt(x)) == x
    assert fmt(0.1) == "0.10000000000000001"
    assert fmt(3) == "3" and fmt(None) == "nan"


def test_model_info(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    code, out, _ = run(["model-info", cfg], capsys)
    assert code == EXIT_OK
    info = json.loads(out)
    assert info["dim_state"] == 40
    assert info["damping_node"] == 10
    assert info["gram_bandwidth"] == [1, 1]
    assert info["validation"]["passed"] is True


def _error(err):
    lines = err.strip().splitlines()
    assert len(lines) == 1
    return json.loads(lines[0])


def test_usage_errors(tmp_path, capsys):
    code, _, err = run(["explode", "x.cfg"], capsys)
    assert code == EXIT_USAGE and _error(err)["code"] == EXIT_USAGE
    code, _, err = run(["simulate"], capsys)
    assert code == EXIT_USAGE


def test_config_errors(tmp_path, capsys):
    code, _, err = run(["simulate", tmp_path / "missing.cfg"], capsys)
    assert code == EXIT_CONFIG and _error(err)["error"] == "ConfigError"
    bad = write_cfg(tmp_path, "[model]\nkind = wave\nxi = 2/4\n")
    assert run(["simulate", bad], capsys)[0] == EXIT_CONFIG
    bad = write_cfg(tmp_path, "[model]\nkind = wave\n[run]\ndt_list = 0.1, 0.1, 0.05\n")
    assert run(["sweep", bad], capsys)[0] == EXIT_CONFIG
    bad = write_cfg(tmp_path, "[model]\nkind = wave\n[run]\nbogus = 1\n")
    assert run(["simulate", bad], capsys)[0] == EXIT_CONFIG
    bad = write_cfg(tmp_path, "no sections here\n")
    assert run(["simulate", bad], capsys)[0] == EXIT_CONFIG


def test_model_build_error(tmp_path, capsys):
    cfg = write_cfg(tmp_path, n=21)
    code, _, err = run(["simulate", cfg, "--out", tmp_path / "o"], capsys)
    assert code == EXIT_MODEL
    assert _error(err)["error"] == "GridAlignmentError"


def test_step_budget_error(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    code, _, err = run(["simulate", cfg, "--out", tmp_path / "o", "--max-steps", "10"], capsys)
    assert code == EXIT_BUDGET
    assert _error(err)["error"] == "StepBudgetExceeded"
    assert not (tmp_path / "o" / "trajectory.csv").exists()


def test_help_lists_exit_codes(capsys):
    with pytest.raises(SystemExit) as info:
        main(["--help"])
    assert info.value.code == 0
    assert "exit codes" in capsys.readouterr().out


def test_load_config_defaults(tmp_path):
    cfg = load_config(write_cfg(tmp_path, "[model]\nkind = beam\nn = 40\n"))
    assert cfg.kind == "beam" and cfg.delta == 1.0 and cfg.max_steps == 10**6
    with pytest.raises(ConfigError):
        load_config(write_cfg(tmp_path, "[run]\ndt = 0.1\n"))
