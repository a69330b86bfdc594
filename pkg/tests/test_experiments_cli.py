import json
from pathlib import Path

import numpy as np
import pytest

from brancolab.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_OK, main
from brancolab.config import ConfigError, config_from_dict
from brancolab.experiments import (
    run_bounds_suite,
    run_duality_experiment,
    run_invariant_convergence_experiment,
    run_poissonization_experiment,
    run_thinning_experiment,
)

SMALL = {
    "lattice.n": 3,
    "sim.replicates": 3000,
    "sim.master_seed": 42,
    "sim.chunk": 1024,
    "sim.t_grid": [0.0, 0.4],
    "experiment.phi_panel": [0.3, 0.6],
    "sde.h": 2e-3,
}


def test_duality_small_run_passes_and_t0_exact():
    rep = run_duality_experiment(config_from_dict(SMALL))
    assert rep.passed
    # at t = 0 both sides are the same deterministic number
    t0_rows = [r for r in rep.rows if r.panel_key.startswith("t=0|")]
    assert t0_rows
    for row in t0_rows:
        assert row.se < 1e-15 and row.ref_se < 1e-15
        assert row.estimate == pytest.approx(row.reference, abs=1e-12)


def test_duality_threads_give_identical_report():
    one = run_duality_experiment(config_from_dict(SMALL), threads=1)
    four = run_duality_experiment(config_from_dict(SMALL), threads=4)
    assert one.csv_lines() == four.csv_lines()


def test_thinning_alpha_zero_is_identity():
    cfg = config_from_dict({**SMALL, "rates.a": 0.0, "rates.c": 2.0, "sim.t_grid": [0.3]})
    rep = run_thinning_experiment(cfg)
    assert rep.extras["thin_probability"] == pytest.approx(1.0)
    assert rep.passed


def test_thinning_beta_must_not_exceed_alpha():
    cfg = config_from_dict({**SMALL, "thinning.beta": 0.9})  # alpha = 0.5 by default
    with pytest.raises(ConfigError):
        run_thinning_experiment(cfg)


def test_poissonization_small_run():
    cfg = config_from_dict(
        {
            **SMALL,
            "resem.r": 2.0,
            "resem.s": 4.5,
            "resem.m": 1.5,
            "duality.alpha": 0.5,
            "experiment.phi0": 0.4,
        }
    )
    rep = run_poissonization_experiment(cfg)
    assert rep.passed
    assert rep.extras["kappa"] == pytest.approx(1.5)
    assert rep.extras["rates"] == {"a": 1.0, "b": 3.0, "c": 1.0, "d": 0.0}


def test_poissonization_rejects_infeasible_mutation():
    cfg = config_from_dict(
        {**SMALL, "resem.r": 1.0, "resem.s": 4.0, "resem.m": 0.5, "duality.alpha": 1.0}
    )
    with pytest.raises((ConfigError, ValueError)):
        run_poissonization_experiment(cfg)


def test_invariant_short_horizon_is_inconclusive():
    # a horizon short enough that absorption inflow has not stalled must
    # yield an inconclusive verdict, not a false pass/fail
    cfg = config_from_dict(
        {
            "lattice.n": 4,
            "init.kind": "bernoulli",
            "init.value": 0.5,
            "sim.replicates": 1500,
            "sim.chunk": 512,
            "sim.master_seed": 7,
            "sim.t_grid": [4.0],
            "experiment.phi_panel": [0.5],
            "experiment.phi_site": 0,
            "extinction.t_max": 8.0,
            "extinction.h": 4e-3,
        }
    )
    rep = run_invariant_convergence_experiment(cfg)
    assert rep.rows[0].verdict == "inconclusive"
    assert rep.inconclusive and not rep.passed


def test_bounds_small_run():
    cfg = config_from_dict(
        {
            "lattice.n": 3,
            "sim.master_seed": 3,
            "sim.chunk": 512,
            "bounds.replicates": 1500,
            "bounds.infinity_replicates": 120,
            "bounds.subdu_t": [0.5],
            "bounds.subdu_phi": [0.3],
            "bounds.kmom_t": [0.5],
            "bounds.explicit_t": [0.5],
        }
    )
    rep = run_bounds_suite(cfg)
    assert rep.passed
    keys = [r.panel_key for r in rep.rows]
    assert any(k.startswith("kmom|") for k in keys)
    assert any(k.startswith("explicit|rzero") for k in keys)
    assert any(k.startswith("subdu|") for k in keys)


def _write_small_config(path: Path, seed: int = 42) -> Path:
    cfg = path / "exp.cfg"
    cfg.write_text(
        "lattice.type = torus1d\n"
        "lattice.n = 3\n"
        "sim.replicates = 2000\n"
        "sim.chunk = 512\n"
        f"sim.master_seed = {seed}\n"
        "sim.t_grid = 0.3\n"
        "experiment.phi_panel = 0.3, 0.6\n"
        "sde.h = 2e-3\n"
    )
    return cfg


def test_cli_validate_pass_and_fail(tmp_path, capsys):
    assert main(["validate", "--lattice", "torus1d:4"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "max_exit_rate" in out and "True" in out
    # disconnected custom lattice fails
    edges = tmp_path / "edges.txt"
    edges.write_text("0 1 1.0\n1 0 1.0\n2 3 1.0\n3 2 1.0\n")
    assert main(["validate", "--lattice", f"custom:{edges}"]) == EXIT_FAIL


def test_cli_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("sim.replicate = 10\n")
    assert main(["duality", "--config", str(bad)]) == EXIT_CONFIG


def test_cli_oracle_distribution_sums_to_one(tmp_path, capsys):
    out = tmp_path / "run"
    code = main(["oracle", "--cap", "6", "--site-count", "1", "--t", "0.8", "--x0", "2", "--out", str(out)])
    assert code == EXIT_OK
    lines = (tmp_path / "run_oracle.csv").read_text().strip().splitlines()
    assert lines[0] == "state_index,probability"
    total = sum(float(line.split(",")[1]) for line in lines[1:])
    assert abs(total - 1.0) < 1e-10


def test_cli_duality_deterministic_across_threads(tmp_path):
    cfg = _write_small_config(tmp_path)
    out1 = tmp_path / "a"
    out2 = tmp_path / "b"
    assert main(["duality", "--config", str(cfg), "--out", str(out1), "--threads", "1"]) == EXIT_OK
    assert main(["duality", "--config", str(cfg), "--out", str(out2), "--threads", "4"]) == EXIT_OK
    csv1 = (tmp_path / "a_duality.csv").read_bytes()
    csv2 = (tmp_path / "b_duality.csv").read_bytes()
    assert csv1 == csv2


def test_cli_seed_override_changes_output(tmp_path):
    cfg = _write_small_config(tmp_path)
    out1 = tmp_path / "s1"
    out2 = tmp_path / "s2"
    main(["duality", "--config", str(cfg), "--out", str(out1), "--seed", "1"])
    main(["duality", "--config", str(cfg), "--out", str(out2), "--seed", "2"])
    assert (tmp_path / "s1_duality.csv").read_bytes() != (tmp_path / "s2_duality.csv").read_bytes()


def test_cli_summary_json_structure(tmp_path):
    cfg = _write_small_config(tmp_path)
    out = tmp_path / "run"
    assert main(["duality", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    payload = json.loads((tmp_path / "run_summary.json").read_text())
    assert payload["all_passed"] is True
    rows = payload["experiments"]["duality"]["rows"]
    assert all({"estimate", "se", "reference", "verdict"} <= set(r) for r in rows)


def test_cli_simulate_writes_trajectories(tmp_path):
    cfg = tmp_path / "sim.cfg"
    cfg.write_text("lattice.n = 2\nsim.replicates = 5\nsim.t_grid = 0.2, 0.6\n")
    out = tmp_path / "traj"
    assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    lines = (tmp_path / "traj_trajectories.csv").read_text().strip().splitlines()
    assert lines[0] == "replicate,t,site,count"
    assert len(lines) == 1 + 5 * 2 * 2
