from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
from typer.testing import CliRunner

from kolmo.app import cli, services
from kolmo.app.config import InitialSection, apply_overrides, load_experiment_config
from kolmo.app.dynamics import EvolutionModel, ModelTag
from kolmo.app.errors import ArtifactMissingError, ConfigurationError, FieldValidationError, NumericalAbortError
from kolmo.app.initial_conditions import build_initial, project_to_subspace, random_field
from kolmo.app.services import ExperimentService
from kolmo.app.spectral import P1, FieldKind, complement, l2_norm, make_grid, mode_field, project
from kolmo.app.storage import load_series, load_snapshot, read_json, save_snapshot, write_json

RECIPES_DIR = Path(__file__).resolve().parents[1] / "kolmo" / "recipes"

HEAT_CONFIG = """
[experiment]
kind = "simulate"
name = "heat"

[grid]
alpha = 1.0
nx = 16
ny = 16

[model]
tag = "LNSBar"
nu = 0.05
dt = 0.01
t_end = 0.5
sample_every = 0.1

[initial]
kind = "named"
modes = [{ k = 0, m = 2, part = "cos", amplitude = 1.0 }]

[probes]
list = ["l2", "dissipation"]
"""

RANDOM_CONFIG = """
[experiment]
kind = "simulate"
name = "random"
seed = 3

[grid]
alpha = 1.5
nx = 16
ny = 16

[model]
tag = "LNSBar"
nu = 0.05
dt = 0.01
t_end = 0.3
sample_every = 0.1

[initial]
kind = "random"
subspace = "nonshear"
k0 = 3.0
"""

SWEEP_CONFIG = """
[experiment]
kind = "sweep"
name = "sweep"
seed = 2

[grid]
alpha = 1.5
nx = 16
ny = 16

[model]
tag = "LNSBar"
nu_list = {nu_list}
tau = 0.5
dt = 0.01
sample_every = 0.1

[initial]
kind = "random"
subspace = "nonshear"
k0 = 3.0
"""


@pytest.fixture
def service(settings):
    return ExperimentService(settings)


class TestExperimentConfig:
    def test_missing_file(self, tmp_path):
        with pytest.raises(ArtifactMissingError):
            load_experiment_config(tmp_path / "nope.toml")

    def test_missing_experiment_section(self, write_config):
        path = write_config("[grid]\nalpha = 1.0\n")
        with pytest.raises(ConfigurationError, match=r"\[experiment\]"):
            load_experiment_config(path)

    def test_bad_type_names_the_key(self, write_config):
        path = write_config(HEAT_CONFIG.replace("nx = 16", 'nx = "dieciseis"'))
        with pytest.raises(ConfigurationError, match=r"grid\.nx"):
            load_experiment_config(path)

    def test_unknown_key_names_the_key(self, write_config):
        path = write_config(HEAT_CONFIG.replace("nu = 0.05", "nu = 0.05\nviscosity = 0.1"))
        with pytest.raises(ConfigurationError, match=r"model\.viscosity"):
            load_experiment_config(path)

    def test_simulation_needs_end_time(self, write_config):
        path = write_config(HEAT_CONFIG.replace("t_end = 0.5\n", ""))
        with pytest.raises(ConfigurationError, match=r"model\.t_end"):
            load_experiment_config(path)

    def test_missing_snapshot(self, write_config):
        body = HEAT_CONFIG.replace('kind = "named"', 'kind = "snapshot"\npath = "missing.json"')
        with pytest.raises(ArtifactMissingError, match=r"initial\.path"):
            load_experiment_config(write_config(body))

    def test_snapshot_path_is_relative_to_config(self, tmp_path, write_config):
        save_snapshot(tmp_path / "start.json", mode_field(make_grid(1.0, 16, 16), 1, 1), time=0.0)
        body = HEAT_CONFIG.replace('kind = "named"', 'kind = "snapshot"\npath = "start.json"')
        config = load_experiment_config(write_config(body))
        assert config.initial.path == (tmp_path / "start.json").resolve()

    def test_overrides(self, write_config, tmp_path):
        config = load_experiment_config(write_config(HEAT_CONFIG))
        updated = apply_overrides(config, out=tmp_path / "elsewhere", seed=42)
        assert updated.experiment.seed == 42
        assert updated.output.dir == tmp_path / "elsewhere"
        assert config.experiment.seed == 0
        with pytest.raises(ConfigurationError, match="seed"):
            apply_overrides(config, seed=-1)

    @pytest.mark.parametrize("recipe", sorted(RECIPES_DIR.glob("*.toml")), ids=lambda path: path.stem)
    def test_bundled_recipes_are_valid(self, recipe):
        config = load_experiment_config(recipe)
        assert config.experiment.name == recipe.stem


class TestSnapshots:
    def test_physical_layout(self, tmp_path):
        grid = make_grid(1.0, 16, 8)
        field = mode_field(grid, 1, 0) + mode_field(grid, 0, 2, part="sin", amplitude=0.5)
        sidecar = save_snapshot(tmp_path / "state.json", field, time=1.25)
        assert read_json(sidecar) == {
            "alpha": 1.0,
            "nx": 16,
            "ny": 8,
            "kind": "vorticity",
            "time": 1.25,
            "endianness": "little",
        }
        raw = np.fromfile(tmp_path / "state.bin", dtype="<f8")
        assert raw.size == 8 * 16
        rows = raw.reshape(8, 16)
        np.testing.assert_allclose(rows[0], np.cos(2.0 * np.pi * np.arange(16) / 16), atol=1e-12)
        np.testing.assert_array_equal(rows, field.to_physical())

        loaded = load_snapshot(tmp_path / "state.bin")
        assert loaded.grid == grid
        assert loaded.kind is FieldKind.vorticity
        np.testing.assert_allclose(loaded.coeffs, field.coeffs, atol=1e-14)

    def test_stream_snapshot_starts_from_its_vorticity(self, tmp_path):
        grid = make_grid(1.0, 16, 16)
        psi = mode_field(grid, 1, 1)
        save_snapshot(tmp_path / "psi.json", psi.with_coeffs(psi.coeffs, FieldKind.stream), time=0.0)
        section = InitialSection(kind="snapshot", path=tmp_path / "psi.json")
        omega = build_initial(section, grid, seed=0, default_k0=4.0)
        assert omega.kind is FieldKind.vorticity
        np.testing.assert_allclose(omega.coeffs, 2.0 * psi.coeffs, atol=1e-13)

    def test_only_little_endian_is_read(self, tmp_path):
        sidecar = save_snapshot(tmp_path / "state.json", mode_field(make_grid(1.0, 8, 8), 1, 1), time=0.0)
        meta = read_json(sidecar)
        write_json(sidecar, {**meta, "endianness": "big"})
        with pytest.raises(FieldValidationError, match="little"):
            load_snapshot(sidecar)

    def test_truncated_binary(self, tmp_path):
        sidecar = save_snapshot(tmp_path / "state.json", mode_field(make_grid(1.0, 8, 8), 1, 1), time=0.0)
        np.zeros(10, dtype="<f8").tofile(tmp_path / "state.bin")
        with pytest.raises(FieldValidationError, match="8×8"):
            load_snapshot(sidecar)

    def test_simulation_restarts_from_its_last_snapshot(self, service, write_config, tmp_path):
        service.run(write_config(HEAT_CONFIG + "\n[output]\nsnapshots_every = 0.25\n"), out=tmp_path / "first")
        snapshots = sorted((tmp_path / "first" / "snapshots").glob("snapshot_*.json"))
        assert len(snapshots) == 3
        manifest = read_json(tmp_path / "first" / "manifest.json")
        assert "snapshots/snapshot_00002.bin" in manifest["outputs"]

        body = HEAT_CONFIG.replace('kind = "named"', f'kind = "snapshot"\npath = "{snapshots[-1].as_posix()}"')
        service.run(write_config(body, name="restart.toml"), out=tmp_path / "second")
        first = load_series(tmp_path / "first" / "series.csv").column("l2")
        second = load_series(tmp_path / "second" / "series.csv").column("l2")
        assert second[0] == pytest.approx(first[-1], rel=1e-12)


class TestInitialData:
    def test_x1_restriction_of_the_low_modes(self):
        grid = make_grid(1.0, 16, 16)
        noise = random_field(grid, seed=6, k0=3.0)
        lowest = project_to_subspace(noise, "pn", pn_n=2)
        assert l2_norm(complement(lowest, P1)) == pytest.approx(0.0, abs=1e-14)
        on_x1 = project_to_subspace(noise, "pn_x1", pn_n=2)
        assert l2_norm(project(on_x1, P1)) == pytest.approx(0.0, abs=1e-14)
        assert l2_norm(on_x1) > 1e-3


class TestExperimentService:
    def test_simulate_writes_artifacts(self, service, write_config, tmp_path):
        result = service.run(write_config(HEAT_CONFIG), out=tmp_path / "run")
        manifest = read_json(tmp_path / "run" / "manifest.json")
        assert manifest["status"] == "ok"
        assert {"series.csv", "summary.json"} <= set(manifest["outputs"])
        assert manifest["config"]["grid"]["nx"] == 16
        assert result.summary["samples"] == 6
        assert result.summary["dissipation_residual_max_relative"] <= 5e-3
        record = load_series(tmp_path / "run" / "series.csv")
        assert record.times[-1] == pytest.approx(0.5)
        assert "Experimento heat" in (tmp_path / "run" / "run.log").read_text(encoding="utf-8")

    def test_default_output_dir(self, service, settings, write_config):
        result = service.run(write_config(HEAT_CONFIG))
        assert result.output_dir == settings.outputs_dir / "heat"

    def test_runs_are_deterministic(self, service, write_config, tmp_path):
        path = write_config(RANDOM_CONFIG)
        service.run(path, out=tmp_path / "a")
        service.run(path, out=tmp_path / "b")
        service.run(path, out=tmp_path / "c", seed=4)
        first = (tmp_path / "a" / "series.csv").read_bytes()
        assert first == (tmp_path / "b" / "series.csv").read_bytes()
        assert first != (tmp_path / "c" / "series.csv").read_bytes()

    def test_command_must_match_kind(self, service, write_config):
        with pytest.raises(ConfigurationError, match="experiment.kind"):
            service.run(write_config(HEAT_CONFIG), expected_kind="sweep")

    def test_empty_sweep(self, service, write_config, tmp_path):
        result = service.run(write_config(SWEEP_CONFIG.format(nu_list="[]")), out=tmp_path / "sweep")
        assert result.summary["rows"] == []
        assert result.summary["failures"] == []
        header = (tmp_path / "sweep" / "sweep.csv").read_text(encoding="utf-8").strip()
        assert header == "nu,status,ratio,initial_norm,final_norm,z_decay_rate,error"

    @pytest.mark.slow
    def test_parallel_sweep_matches_serial(self, service, write_config, tmp_path):
        path = write_config(SWEEP_CONFIG.format(nu_list="[0.5, 0.2]"))
        serial = service.run(path, out=tmp_path / "serial", parallel=1)
        service.run(path, out=tmp_path / "parallel", parallel=2)
        assert [row["nu"] for row in serial.summary["rows"]] == [0.2, 0.5]
        assert all(row["status"] == "ok" for row in serial.summary["rows"])
        assert (tmp_path / "serial" / "sweep.csv").read_bytes() == (
            tmp_path / "parallel" / "sweep.csv"
        ).read_bytes()

    def test_unexpected_error_stays_in_its_row(self, service, write_config, tmp_path, monkeypatch):
        damping_run = services._damping_run

        def _singular_at_small_nu(config, settings, nu, series_path):
            if nu == 0.2:
                raise np.linalg.LinAlgError("matriz singular")
            return damping_run(config, settings, nu, series_path)

        monkeypatch.setattr(services, "_damping_run", _singular_at_small_nu)
        path = write_config(SWEEP_CONFIG.format(nu_list="[0.5, 0.2]"))
        result = service.run(path, out=tmp_path / "sweep", parallel=1)
        rows = {row["nu"]: row for row in result.summary["rows"]}
        assert rows[0.2]["status"] == "failed"
        assert "LinAlgError" in rows[0.2]["error"]
        assert rows[0.5]["status"] == "ok"
        assert result.summary["failures"] == [0.2]
        assert result.manifest.status == "ok"

    def test_growth_prediction_is_skipped_above_the_critical_ratio(self):
        model = EvolutionModel(ModelTag.lin_euler_bar)
        assert services._predicted_growth_rate(model, make_grid(2.0, 4, 64), floor=1e-8) == 0.0
        assert services._predicted_growth_rate(model, make_grid(0.5, 4, 64), floor=1e-8) > 1e-2

    def test_stability_table(self, service, write_config, tmp_path):
        body = """
        [experiment]
        kind = "stability"
        name = "index"

        [stability]
        alphas = [0.3, 1.2]
        l_max = 2
        n = 64
        """
        result = service.run(write_config(body), out=tmp_path / "index")
        assert result.summary["passed"]
        table = (tmp_path / "index" / "stability.csv").read_text(encoding="utf-8").strip().splitlines()
        assert len(table) == 1 + 4


@pytest.mark.slow
class TestAcceptanceRuns:
    def _run(self, service, tmp_path, recipe, **kwargs):
        return service.run(RECIPES_DIR / f"{recipe}.toml", out=tmp_path / recipe, **kwargs).summary

    def test_linearized_energy_is_conserved(self, service, tmp_path):
        summary = self._run(service, tmp_path, "conservation_lineuler")
        assert summary["inner_l_drift_relative"] <= 1e-6

    def test_damping_ratio_shrinks_with_viscosity(self, service, tmp_path):
        summary = self._run(service, tmp_path, "damping_sweep", parallel=1)
        assert summary["failures"] == []
        assert summary["all_below_one"]
        assert summary["monotone_in_nu"]

    def test_small_perturbation_of_the_viscous_bar(self, service, tmp_path):
        summary = self._run(service, tmp_path, "nse_metastability")
        assert summary["ratio"] <= 0.5
        assert summary["liapunov_ratio"] <= 10.0

    @pytest.mark.parametrize("recipe", ["rage_lineuler", "rage_lineuler_square"])
    def test_low_modes_average_out(self, service, tmp_path, recipe):
        summary = self._run(service, tmp_path, recipe)
        assert summary["rage_ratio"] <= 0.2
        assert summary["rage_passed"]

    @pytest.mark.parametrize("recipe", ["inviscid_damping_velocity", "inviscid_damping_unstable"])
    def test_velocity_average_decays(self, service, tmp_path, recipe):
        summary = self._run(service, tmp_path, recipe)
        assert summary["velocity_ratio"] <= 0.25
        assert summary["velocity_passed"]

    def test_unprojected_growth_follows_the_unstable_eigenvalue(self, service, tmp_path):
        summary = self._run(service, tmp_path, "unstable_growth")
        predicted = summary["predicted_growth_rate"]
        assert predicted > 1e-2
        assert summary["l2_growth_rate"] == pytest.approx(predicted, rel=0.1)
        assert summary["growth_rate_matches"]

    def test_z_norm_rate_scales_like_root_nu(self, service, tmp_path):
        summary = self._run(service, tmp_path, "beck_wayne_sweep", parallel=1)
        assert summary["failures"] == []
        assert summary["z_rate_nu_exponent"] == pytest.approx(0.5, abs=0.15)


class TestCli:
    @pytest.fixture(autouse=True)
    def _patch_service(self, monkeypatch, service):
        monkeypatch.setattr(cli, "_service", lambda: service)

    def test_simulate(self, write_config, tmp_path):
        result = CliRunner().invoke(
            cli.app, ["simulate", "--config", str(write_config(HEAT_CONFIG)), "--out", str(tmp_path / "cli")]
        )
        assert result.exit_code == 0
        assert (tmp_path / "cli" / "manifest.json").exists()

    def test_invalid_config_exits_with_validation_code(self, tmp_path):
        result = CliRunner().invoke(cli.app, ["simulate", "--config", str(tmp_path / "nope.toml")])
        assert result.exit_code == cli.EXIT_VALIDATION

    def test_numerical_abort_exits_with_numerical_code(self, monkeypatch, service, write_config):
        def _abort(*args, **kwargs):
            raise NumericalAbortError("estado no finito", time=0.25)

        monkeypatch.setattr(service, "run", _abort)
        result = CliRunner().invoke(cli.app, ["simulate", "--config", str(write_config(HEAT_CONFIG))])
        assert result.exit_code == cli.EXIT_NUMERICAL

    def test_settings(self):
        result = CliRunner().invoke(cli.app, ["settings"])
        assert result.exit_code == 0
