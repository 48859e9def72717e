import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from loglog_euler import experiments as ex
from loglog_euler.cli import main
from loglog_euler.experiments import ConfigError, ExperimentConfig

QUICK = dict(n=256, T=0.1, quick=True)


@settings(max_examples=60, deadline=None)
@given(scenario=st.sampled_from(ex.SCENARIOS), n=st.sampled_from([16, 64, 256, 1024]),
       eps=st.floats(0.01, 0.99), alpha=st.floats(0.01, 0.99), beta=st.floats(1.01, 1.99),
       r=st.lists(st.floats(1e-12, 0.1), min_size=1, max_size=6),
       T=st.one_of(st.none(), st.floats(0.01, 1.0)), seed=st.integers(0, 2**31))
def test_config_roundtrip(scenario, n, eps, alpha, beta, r, T, seed):
    cfg = ExperimentConfig(scenario=scenario, n=n, epsilon=eps, alpha=alpha, beta=beta,
                           r_list=tuple(r), T=T, seed=seed)
    assert ExperimentConfig.from_json(cfg.to_json()) == cfg
    assert ExperimentConfig.from_json(cfg.to_json()).config_hash() == cfg.config_hash()


@pytest.mark.parametrize("bad", [dict(alpha=1.5), dict(beta=2.5), dict(beta=1.0), dict(n=1000),
                                 dict(epsilon=1.0), dict(r_list=(0.2,)), dict(scenario="x"),
                                 dict(T=2.0)])
def test_config_validation(bad):
    with pytest.raises(ConfigError):
        ExperimentConfig(**bad)


def test_unknown_config_key_rejected():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"scenario": "conservation", "gamma": 1})


def test_breakdown_horizon_covers_t_r():
    cfg = ExperimentConfig(scenario="breakdown")
    assert cfg.horizon == pytest.approx(0.62)
    assert cfg.with_quick().horizon == pytest.approx(0.62)
    assert ExperimentConfig(scenario="conservation").with_quick().horizon == 0.1


def test_zero_data_conservation_trivially_passes(tmp_path):
    cfg = ExperimentConfig(n=64, T=0.05, amplitude=0.0, output_dir=str(tmp_path))
    rep = ex.run_conservation(cfg)
    assert rep.verdict == "PASS" and rep.exit_code == 0
    series = rep.tables["conservation_series"][1]
    assert all(row[1] == 0.0 for row in series)


def test_conservation_quick(quick_run):
    rep = ex.run_conservation(ExperimentConfig(**QUICK), run=quick_run)
    assert rep.verdict == "PASS", rep.summary
    assert "config_hash" in rep.manifest and "K" in json.dumps(rep.manifest)


def test_breakdown_zero_data_is_degenerate(zero_run):
    cfg = ExperimentConfig(scenario="breakdown", n=64, amplitude=0.0, r_list=(1e-8,), T=0.5)
    rep = ex.run_breakdown(cfg, run=zero_run)
    assert rep.verdict == "DEGENERATE" and rep.exit_code == ex.EXIT_FAIL
    assert rep.summary["statistics"] == [0.0]


def test_oracles_quick_pass(quick_run):
    rep = ex.run_oracles(ExperimentConfig(scenario="oracle-suite", **QUICK), run=quick_run)
    assert rep.verdict == "PASS", ex.format_matrix(rep)
    assert rep.exit_code == 0


def test_corrupted_green_table_fails(quick_run, quick_grid):
    cfg = ExperimentConfig(scenario="oracle-suite", **QUICK)
    rep = ex.run_oracles(cfg, table=ex.corrupted_table(quick_grid), run=quick_run)
    res = rep.summary["results"]
    assert not res["direct_vs_fft_biot_savart"]["passed"]
    assert rep.verdict == "FAIL" and rep.exit_code != 0


def test_write_csv_is_exact(tmp_path):
    path = ex.write_csv(tmp_path / "a.csv", "x,y", [(0.1, 1 / 3), (1e-300, "ok")])
    lines = path.read_text().splitlines()
    assert lines[0] == "x,y"
    assert float(lines[1].split(",")[1]) == 1 / 3


def _cli(tmp_path, *argv, env_dir=None, monkeypatch=None):
    if env_dir is not None:
        monkeypatch.setenv(ex.OUTPUT_ENV, str(env_dir))
    return main(list(argv) + ["--output-dir", str(tmp_path)])


def test_cli_rejects_bad_config(tmp_path, capsys):
    assert _cli(tmp_path, "conservation", "--alpha", "1.5") == ex.EXIT_ERROR
    assert "alpha" in capsys.readouterr().err
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"beta": 2.5}))
    assert _cli(tmp_path, "breakdown", "--config", str(bad)) == ex.EXIT_ERROR
    with pytest.raises(SystemExit):
        main(["nonsense"])


def test_cli_build_data(tmp_path):
    assert _cli(tmp_path, "build-data", "--n", "256", "--plot-data") == 0
    summary = json.loads((tmp_path / "build_data.json").read_text())
    assert summary["hyperbolicity"]["K"] > 0
    assert (tmp_path / "axis_profile.csv").exists() and (tmp_path / "axis_profile.dat").exists()
    cfg = ExperimentConfig.from_json((tmp_path / "config.json").read_text())
    assert cfg.n == 256


def test_cli_env_output_dir_wins(tmp_path, monkeypatch):
    env = tmp_path / "env"
    assert _cli(tmp_path / "flag", "build-data", "--n", "64", env_dir=env, monkeypatch=monkeypatch) == 0
    assert (env / "build_data.json").exists()
    assert not (tmp_path / "flag" / "build_data.json").exists()


def test_cli_solve_trace_and_reuse(tmp_path, capsys):
    out = tmp_path / "solve"
    assert _cli(out, "solve", "--quick", "--n", "64") == 0
    run_dir = out / "run"
    assert (run_dir / "manifest.json").exists()
    assert _cli(tmp_path / "tr", "trace", "--quick", "--n", "64", "--T", "0.1", "--r", "1e-8",
                "--run-dir", str(run_dir), "--plot-data") == 0
    csv = (tmp_path / "tr" / "trajectory_r1e-08.csv").read_text().splitlines()
    assert csv[0] == "r,t,x1,x2,radius,ug1,ug2,forcing,g"
    # the saved run is too short for the breakdown horizon
    assert _cli(tmp_path / "bd", "breakdown", "--quick", "--n", "64", "--run-dir", str(run_dir)) \
        == ex.EXIT_ERROR


def test_cli_oracles_quick_and_deterministic_outputs(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert _cli(a, "oracles", "--quick", "--n", "128") == 0
    assert _cli(b, "oracles", "--quick", "--n", "128", "--threads", "1") == 0
    assert (a / "oracle-suite_report.json").exists()
    assert (a / "oracles.csv").read_bytes() == (b / "oracles.csv").read_bytes()


def test_cli_conservation_deterministic_across_threads(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    args = ("conservation", "--quick", "--n", "64", "--T", "0.05")
    assert _cli(a, *args, "--threads", "1") == 0
    assert _cli(b, *args, "--threads", "2") == 0
    assert (a / "conservation_series.csv").read_bytes() == (b / "conservation_series.csv").read_bytes()


def test_cli_diagnostics_quick(tmp_path, capsys):
    assert _cli(tmp_path, "diagnostics", "--quick", "--n", "64", "--T", "0.05") == 0
    summary = json.loads((tmp_path / "diagnostics_report.json").read_text())["summary"]
    assert summary["N"] > 0
    assert np.isfinite(summary["grad_normalized_max"])
