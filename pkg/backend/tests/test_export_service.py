from __future__ import annotations

import numpy as np
import pandas as pd
import pytest

from app import __version__
from app.core.alpha_field import two_level_field
from app.core.errors import DomainError
from app.core.export_service import (
    build_ensemble_frame,
    build_solution_frame,
    config_hash,
    dump_path,
    read_csv,
    read_dump,
    write_csv,
)
from app.core.pde_solver import Grid1D, solve_fde
from app.core.random_streams import RandomStream
from app.core.simulator import SimConfig, simulate_coupled
from app.schemas.report import EnsembleSummary


def test_config_hash_is_canonical():
    assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})


def test_csv_metadata_and_table(tmp_path):
    df = pd.DataFrame({"t": [0.1, 1 / 3], "value": [1.0, np.pi]})
    target = write_csv(tmp_path / "nested" / "out.csv", df, cfg_hash="abc", meta={"seed": 3})
    text = target.read_text()
    assert text.startswith("# tool: subdiff-lab")
    meta, table = read_csv(target)
    assert meta["config_sha256"] == "abc" and meta["seed"] == "3"
    assert table["value"].tolist() == [1.0, np.pi]
    assert table["t"].tolist() == [0.1, 1 / 3]


def test_ensemble_frame_clips_intervals():
    summary = EnsembleSummary(
        n_paths=4, t_grid=[1.0, 2.0], occ_mean=[0.95, 0.5], occ_ci_halfwidth=[0.1, 0.1],
        hit_prob=[1.0, 0.0], hit_ci_halfwidth=[0.0, 0.0], extra_hit_prob={"escape": [0.0, 0.5]},
    )
    df = build_ensemble_frame(summary)
    assert df["occ_ci_high"].tolist() == [1.0, pytest.approx(0.6)]
    assert "hit_prob_escape" in df.columns


def test_solution_frame_keeps_last_level():
    grid = Grid1D(0.0, 1.0, 8)
    solution = solve_fde(0.5, grid, np.ones(8), T=0.5, dt=0.1)
    df = build_solution_frame(solution, every=2)
    assert sorted(df["t"].unique()) == pytest.approx([0.0, 0.2, 0.4, 0.5])
    assert len(df) == 4 * 8


def test_path_dump_header(tmp_path):
    field = two_level_field(0.3, 0.7)
    path = simulate_coupled(field, SimConfig(dt=0.01, target_external_time=1.0), RandomStream(seed=0, stream_id=0))
    header, records = read_dump(dump_path(tmp_path / "p.bin", path, cfg_hash=config_hash({"seed": 0})))
    assert header["field_hash"] == field.fingerprint()
    assert header["dt"] == 0.01 and header["kind"] == 1
    assert header["version"] == 2 and header["tool_version"] == __version__
    assert header["config_hash"] == config_hash({"seed": 0})
    assert np.array_equal(records, path.steps)


def test_foreign_file_is_not_a_dump(tmp_path):
    bogus = tmp_path / "x.bin"
    bogus.write_bytes(b"\x00" * 128)
    with pytest.raises(DomainError):
        read_dump(bogus)
