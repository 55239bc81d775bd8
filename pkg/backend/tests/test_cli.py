from __future__ import annotations

import argparse

import pytest

from app.cli import _resolve, build_parser, main
from app.config import settings
from app.core.export_service import read_csv, read_dump
from app.services import experiment_service
from app.services.config_service import load_config, parse_config

PDE = """
experiment: pde
name: mode
field:
  kind: constant
  alpha: 0.5
pde:
  x_min: -3.141592653589793
  x_max: 3.141592653589793
  n_x: 32
  T: 0.5
  dt: 0.05
  initial:
    name: cos
output:
  formats: [csv, dump]
  solution_every: 2
"""

SIMULATE = """
experiment: simulate
field:
  kind: two_level
  alpha_in: 0.3
  alpha_out: 0.7
sim:
  dt: 0.01
  t_final: 2.0
  n_paths: 5
  n_times: 20
"""

OCCUPATION = """
experiment: occupation
field:
  kind: two_level
  alpha_in: 0.3
  alpha_out: 0.7
sim:
  dt: 0.01
  x0: 0.5
  t_final: 10.0
  n_paths: 20
  n_times: 30
"""


def _run(path, out, *extra) -> int:
    command = load_config(path).experiment
    return main([command, "--config", str(path), "--out", str(out), *extra])


def test_pde_run_is_byte_reproducible(write_config, tmp_path, capsys):
    config = write_config(PDE)
    assert _run(config, tmp_path / "a") == 0
    assert _run(config, tmp_path / "b", "--threads", "4") == 0
    first = (tmp_path / "a" / "mode_solution.csv").read_bytes()
    assert first == (tmp_path / "b" / "mode_solution.csv").read_bytes()
    out = capsys.readouterr().out
    assert "mild residual" in out and "eigenmode error" in out and "exit 0" in out

    meta, table = read_csv(tmp_path / "a" / "mode_solution.csv")
    assert meta["experiment"] == "pde"
    assert meta["config_sha256"] == experiment_service.experiment_hash(load_config(config))
    assert sorted(table["t"].unique()) == pytest.approx([0.0, 0.1, 0.2, 0.3, 0.4, 0.5])
    header, records = read_dump(tmp_path / "a" / "mode_solution.bin")
    assert header["kind"] == 2 and records.shape == (11, 33)
    assert header["config_hash"] == meta["config_sha256"]


def test_simulate_writes_path_tables(write_config, tmp_path):
    assert _run(write_config(SIMULATE), tmp_path) == 0
    _, path = read_csv(tmp_path / "simulate_path.csv")
    assert list(path.columns) == ["s", "b", "sigma"]
    assert path["sigma"].is_monotonic_increasing
    _, sample = read_csv(tmp_path / "simulate_sample.csv")
    assert len(sample) == 20
    _, finals = read_csv(tmp_path / "simulate_finals.csv")
    assert (finals["status"] == "complete").all() and len(finals) == 5


def test_seed_flag_changes_results(write_config, tmp_path):
    config = write_config(OCCUPATION)
    assert _run(config, tmp_path / "a") == 0
    assert _run(config, tmp_path / "b", "--seed", "99") == 0
    a = (tmp_path / "a" / "occupation_occupation.csv").read_bytes()
    b = (tmp_path / "b" / "occupation_occupation.csv").read_bytes()
    assert a != b
    meta, table = read_csv(tmp_path / "b" / "occupation_occupation.csv")
    assert meta["seed"] == "99"
    assert table["occ_mean"].between(0, 1).all()


def test_critical_regime_is_inconclusive(write_config, tmp_path, capsys):
    body = """
    experiment: regime
    field:
      kind: two_level
      alpha_in: 0.35
      alpha_out: 0.7
    """
    assert _run(write_config(body), tmp_path) == 3
    assert "Critical" in capsys.readouterr().out
    assert not list(tmp_path.glob("*.csv"))


def test_config_error_exit_names_key(write_config, tmp_path, capsys):
    config = write_config(OCCUPATION + "alpah: 0.3\n")
    assert main(["occupation", "--config", str(config), "--out", str(tmp_path)]) == 1
    err = capsys.readouterr().err
    assert "alpah" in err and "line 12" in err


def test_command_must_match_config(write_config, tmp_path):
    assert main(["pde", "--config", str(write_config(OCCUPATION)), "--out", str(tmp_path)]) == 1


def test_missing_config_file(tmp_path):
    assert main(["validate", "--config", str(tmp_path / "missing.yaml")]) == 1


def test_execution_error_exit(write_config, tmp_path, capsys):
    body = OCCUPATION.replace("n_paths: 20", "n_paths: 4\n  max_steps: 3")
    assert _run(write_config(body), tmp_path) == 1
    assert "ExperimentAborted" in capsys.readouterr().err


def test_thread_and_output_precedence(write_config):
    cfg = parse_config({"experiment": "validate", "threads": 3})
    args = argparse.Namespace(threads=None, seed=None, out=None)
    resolved = _resolve(cfg, args)
    assert resolved.threads == 3
    assert resolved.output.directory == settings.SUBDIFF_OUTPUT_DIR
    flagged = _resolve(cfg, argparse.Namespace(threads=5, seed=2, out="x"))
    assert (flagged.threads, flagged.sim.seed, flagged.output.directory) == (5, 2, "x")
    default = _resolve(parse_config({"experiment": "validate"}), args)
    assert default.threads == settings.SUBDIFF_THREADS


def test_hash_ignores_threads_and_output_location():
    base = parse_config({"experiment": "validate"})
    same = base.model_copy(update={"threads": 8, "output": base.output.model_copy(update={"directory": "y"})})
    assert experiment_service.experiment_hash(base) == experiment_service.experiment_hash(same)
    other = base.model_copy(update={"sim": base.sim.model_copy(update={"seed": 1})})
    assert experiment_service.experiment_hash(base) != experiment_service.experiment_hash(other)


def test_parser_lists_every_experiment():
    parser = build_parser()
    for name in ("simulate", "occupation", "growth", "regime", "pde", "validate", "compare"):
        args = parser.parse_args([name, "--config", "c.yaml"])
        assert args.command == name


@pytest.mark.slow
def test_validate_suite_passes(write_config, tmp_path):
    assert _run(write_config("experiment: validate\n"), tmp_path) == 0
    _, table = read_csv(tmp_path / "validate_validation.csv")
    assert table["passed"].all()


@pytest.mark.slow
def test_growth_experiment_reports_slopes(write_config, tmp_path):
    body = """
    experiment: growth
    field:
      kind: constant
      alpha: 0.5
    sim:
      dt: 0.1
      n_paths: 100
      target: real_line
      growth:
        t_min: 10
        t_max: 1000
        n_points: 20
        quantities: [sigma]
    """
    code = _run(write_config(body), tmp_path)
    assert code in (0, 2)
    _, fits = read_csv(tmp_path / "growth_growth.csv")
    assert fits.loc[0, "nominal"] == 2.0
    assert fits.loc[0, "slope"] == pytest.approx(2.0, abs=0.3)
