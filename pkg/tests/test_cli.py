import json
import os

import numpy as np
import pytest

from fedminimax.cli import (
    ConfigError,
    build_problem,
    cmd_run,
    cmd_sweep,
    cmd_verify,
    main,
    parse_config,
    resolve_hyperparams,
    serialize_config,
    trace_filename,
)
from fedminimax.fedopt import trace_from_csv

MINIMAL = json.dumps({
    "algorithm": "nsgda-m", "problem": "saddle", "T": 10, "N": 2, "p": 1,
    "schedule": "theorem1", "seed": 1,
})

SMALL = {
    "algorithm": "nsgda-m",
    "problem": {"kind": "saddle", "d_x": 4, "d_y": 4, "hetero": 0.5, "seed": 3},
    "T": 6, "N": 2, "p": 2, "seed": 1, "schedule": "theorem1",
    "noise": {"family": "symmetrized-pareto", "s": 1.5, "sigma": 1.0},
}


def test_parse_minimal_config_fills_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.algorithm == "nsgda-m"
    assert cfg.T == 10 and cfg.N == 2 and cfg.p == 1
    assert cfg.seeds == (1,)
    assert cfg.schedule == "theorem1"
    assert cfg.noise.family == "none"
    assert cfg.tau == 0.1
    assert cfg.problem.d_x == 10  # saddle defaults


def test_parse_rejects_schedule_plus_explicit_rate():
    text = json.dumps({"schedule": "theorem1", "gamma_x": 0.01})
    with pytest.raises(ConfigError, match="mutually exclusive"):
        parse_config(text)


def test_parse_rejects_beta_out_of_range():
    rates = dict(gamma_x=0.1, gamma_y=1.0, eta_x=0.01, eta_y=0.01, beta_x=1.5, beta_y=0.5)
    with pytest.raises(ConfigError, match="beta_x"):
        parse_config(json.dumps(rates))


def test_parse_collects_all_errors():
    text = json.dumps({"algorithm": "sgd", "T": 0, "bogus": 1,
                       "noise": {"family": "gaussian", "s": 1.5, "sigma": 1.0}})
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    msgs = "\n".join(exc.value.errors)
    assert "algorithm" in msgs and "T" in msgs and "bogus" in msgs and "noise" in msgs
    assert len(exc.value.errors) >= 4


def test_parse_rejects_gaussian_with_low_s():
    text = json.dumps({"noise": {"family": "gaussian", "s": 1.5, "sigma": 1.0}})
    with pytest.raises(ConfigError, match="gaussian"):
        parse_config(text)


def test_parse_seed_and_seeds_exclusive():
    with pytest.raises(ConfigError, match="mutually exclusive"):
        parse_config(json.dumps({"seed": 1, "seeds": [1, 2]}))


def test_round_trip_schedule_config():
    cfg = parse_config(MINIMAL)
    assert parse_config(serialize_config(cfg)) == cfg


def test_round_trip_explicit_and_auc_config():
    text = json.dumps({
        "algorithm": "muon-da",
        "problem": {"kind": "auc", "n_per_client": 100, "ratios": [0.2, 0.3],
                    "dim": 4, "separation": 1.5},
        "N": 2, "p": 2, "T": 5, "seeds": [2, 4],
        "gamma_x": 0.05, "gamma_y": 0.5, "eta_x": 0.01, "eta_y": 0.01,
        "beta_x": 0.4, "beta_y": 0.4,
        "noise": {"family": "student-t", "s": 1.5, "sigma": 0.5, "tail_exponent": 1.9},
    })
    cfg = parse_config(text)
    assert cfg.schedule is None and cfg.explicit["gamma_x"] == 0.05
    assert parse_config(serialize_config(cfg)) == cfg


def test_resolve_hyperparams_schedule_and_baseline_beta():
    cfg = parse_config(json.dumps(SMALL))
    problem = build_problem(cfg)
    hp = resolve_hyperparams(cfg, problem)
    assert hp.N == 2 and hp.p == 2 and hp.T == 6
    assert hp.gamma_y == (10.0 * problem.smooth.kappa) * hp.gamma_x
    import dataclasses
    clip_cfg = dataclasses.replace(cfg, algorithm="sgda-clip")
    assert resolve_hyperparams(clip_cfg, problem).beta_x == 0.9


def test_cmd_run_writes_csv_with_t_rows(tmp_path):
    cfg = parse_config(json.dumps({**SMALL, "T": 3}))
    assert cmd_run(cfg, out=str(tmp_path)) == 0
    path = tmp_path / trace_filename("nsgda-m", 1)
    lines = path.read_text().splitlines()
    assert len(lines) == 4  # header + 3 data rows
    assert lines[0].startswith("round,algo,seed,grad_phi_norm")
    assert lines[1].split(",")[12] == ""  # auc column empty for non-AUC problems


def test_cmd_run_byte_identical_and_parallel_equal(tmp_path):
    cfg = parse_config(json.dumps(SMALL))
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert cmd_run(cfg, out=str(a)) == 0
    assert cmd_run(cfg, out=str(b)) == 0
    assert cmd_run(cfg, out=str(c), parallel=True) == 0
    name = trace_filename("nsgda-m", 1)
    blob = (a / name).read_bytes()
    assert blob == (b / name).read_bytes()
    assert blob == (c / name).read_bytes()


def test_cmd_sweep_grid_cardinality(tmp_path):
    cfg = parse_config(json.dumps({**SMALL, "T": 4}))
    axes = {"algorithm": ["nsgda-m", "muon-da"], "seed": [1, 2, 3]}
    assert cmd_sweep(cfg, axes, out=str(tmp_path)) == 0
    lines = (tmp_path / "sweep_summary.csv").read_text().splitlines()
    assert lines[0].startswith("algorithm,p,T,N,s,seed")
    assert len(lines) == 1 + 6


def test_cmd_sweep_single_cell_matches_run(tmp_path):
    cfg = parse_config(json.dumps(SMALL))
    assert cmd_run(cfg, out=str(tmp_path / "run")) == 0
    assert cmd_sweep(cfg, {"seed": [1]}, out=str(tmp_path / "sweep")) == 0
    trace = trace_from_csv(tmp_path / "run" / trace_filename("nsgda-m", 1))
    norms = [r.grad_phi_norm for r in trace.records]
    w = max(1, len(norms) // 10)
    row = (tmp_path / "sweep" / "sweep_summary.csv").read_text().splitlines()[1].split(",")
    assert float(row[6]) == pytest.approx(np.mean(norms[:w]), rel=1e-12)
    assert float(row[7]) == pytest.approx(np.mean(norms[-w:]), rel=1e-12)


def test_cmd_sweep_rejects_bad_axes(tmp_path):
    cfg = parse_config(json.dumps(SMALL))
    with pytest.raises(ConfigError):
        cmd_sweep(cfg, {}, out=str(tmp_path))
    with pytest.raises(ConfigError):
        cmd_sweep(cfg, {"flavor": [1]}, out=str(tmp_path))


def test_cmd_verify_fresh_trace_passes(tmp_path):
    cfg = parse_config(json.dumps(SMALL))
    assert cmd_run(cfg, out=str(tmp_path)) == 0
    assert cmd_verify(str(tmp_path / trace_filename("nsgda-m", 1)), cfg) == 0


def test_cmd_verify_flags_tampered_drift(tmp_path, capsys):
    cfg = parse_config(json.dumps(SMALL))
    cmd_run(cfg, out=str(tmp_path))
    path = tmp_path / trace_filename("nsgda-m", 1)
    lines = path.read_text().splitlines()
    parts = lines[2].split(",")
    parts[7] = "999.0"  # inflate max_drift_x
    lines[2] = ",".join(parts)
    tampered = tmp_path / "tampered.csv"
    tampered.write_text("\n".join(lines) + "\n")
    assert cmd_verify(str(tampered), cfg) == 2
    assert "drift_x" in capsys.readouterr().out


def test_main_end_to_end(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(SMALL))
    out = tmp_path / "out"
    assert main(["run", "--config", str(cfg_path), "--out", str(out)]) == 0
    trace = out / trace_filename("nsgda-m", 1)
    assert trace.exists()
    assert main(["verify", "--trace", str(trace), "--config", str(cfg_path)]) == 0
    truncated = tmp_path / "trunc.csv"
    truncated.write_text(trace.read_text().rsplit(",", 1)[0])  # chop the last field
    assert main(["verify", "--trace", str(truncated), "--config", str(cfg_path)]) == 1
    assert main(["sweep", "--config", str(cfg_path), "--axes",
                 '{"T": [3, 4]}', "--out", str(out)]) == 0
    assert (out / "sweep_summary.csv").exists()


def test_main_bad_config_exit_code(tmp_path):
    cfg_path = tmp_path / "bad.json"
    cfg_path.write_text("{\"algorithm\": \"sgd\"}")
    assert main(["run", "--config", str(cfg_path)]) == 1


def test_cmd_sweep_noise_axis(tmp_path):
    cfg = parse_config(json.dumps({**SMALL, "T": 3}))
    assert cmd_sweep(cfg, {"s": [1.2, 1.8]}, out=str(tmp_path)) == 0
    rows = (tmp_path / "sweep_summary.csv").read_text().splitlines()[1:]
    assert [r.split(",")[4] for r in rows] == ["1.2", "1.8"]


def test_main_io_error_exit_code(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(SMALL))
    blocker = tmp_path / "blocked"
    blocker.write_text("")  # a file where the output directory should go
    assert main(["run", "--config", str(cfg_path), "--out", str(blocker)]) == 3


def test_outdir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("FEDMINIMAX_OUTDIR", str(tmp_path / "env_out"))
    cfg = parse_config(json.dumps({**SMALL, "T": 2}))
    assert cmd_run(cfg) == 0
    assert (tmp_path / "env_out" / trace_filename("nsgda-m", 1)).exists()
