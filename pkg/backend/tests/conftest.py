from __future__ import annotations

import textwrap
from pathlib import Path

import numpy as np
import pytest

from app.core.alpha_field import two_level_field
from app.core.simulator import SimConfig, TimeChangedSample


@pytest.fixture
def localize_field():
    return two_level_field(0.3, 0.7)


@pytest.fixture
def write_config(tmp_path: Path):
    def _write(body: str, name: str = "experiment.yaml") -> Path:
        path = tmp_path / name
        path.write_text(textwrap.dedent(body).lstrip(), encoding="utf-8")
        return path

    return _write


def make_sim(*, dt: float = 0.01, target: float = 1.0, **kwargs) -> SimConfig:
    return SimConfig(dt=dt, target_external_time=target, **kwargs)


def make_sample(*, times, positions) -> TimeChangedSample:
    times = np.asarray(times, dtype=float)
    positions = np.asarray(positions, dtype=float)
    nan = np.full(times.shape, np.nan)
    return TimeChangedSample(
        external_times=times,
        positions=positions,
        l_values=nan,
        g_values=nan,
        h_values=nan,
        age=nan,
    )
