from __future__ import annotations

import textwrap
from pathlib import Path

import pytest

from kolmo.app.config import AppSettings
from kolmo.app.initial_conditions import random_field
from kolmo.app.spectral import make_grid


@pytest.fixture
def grid():
    return make_grid(1.0, 32, 32)


@pytest.fixture
def rect_grid():
    return make_grid(1.5, 32, 32)


@pytest.fixture
def noise(grid):
    return random_field(grid, seed=7, k0=4.0)


@pytest.fixture
def settings(tmp_path: Path) -> AppSettings:
    return AppSettings(
        repo_root=tmp_path,
        project_dir=tmp_path,
        outputs_dir=tmp_path / "outputs",
        logs_dir=tmp_path / "logs",
        manifest_filename="manifest.json",
        series_filename="series.csv",
        summary_filename="summary.json",
        snapshots_dirname="snapshots",
        fft_workers=1,
        cfl_safety=0.4,
        dealias_fraction=2.0 / 3.0,
        zero_tol_rel=1e-8,
        cluster_radius_rel=1e-6,
        unstable_floor=1e-6,
        calibration_alpha=2.0,
        default_dt=0.01,
        default_sample_every=0.1,
        default_envelope_k0=4.0,
        default_parallel=1,
    )


@pytest.fixture
def write_config(tmp_path: Path):
    """Escribe un TOML de experimento en el directorio temporal."""

    def _write(body: str, name: str = "experiment.toml") -> Path:
        path = tmp_path / name
        path.write_text(textwrap.dedent(body), encoding="utf-8")
        return path

    return _write
