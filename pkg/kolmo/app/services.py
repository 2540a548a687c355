"""Capa de servicios que orquesta experimentos, barridos y tablas de estabilidad."""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any

import numpy as np
import scipy.fft as sfft
from loguru import logger

from kolmo.conf import (
    FIT_TRANSIENT_WINDOW,
    GROWTH_RATE_REL_TOL,
    RAGE_RATIO_MAX,
    STABILITY_CSV_COLUMNS,
    VELOCITY_RATIO_MAX,
)
from kolmo.app.config import (
    AppSettings,
    ExperimentConfig,
    FlowSection,
    apply_overrides,
    load_experiment_config,
    load_settings,
)
from kolmo.app.diagnostics import (
    ProbeContext,
    dissipation_residual,
    enhanced_damping_metric,
    is_square_torus,
    liapunov_ratio,
    rage_average,
    validate_probes,
    value_at,
    velocity_damping_average,
    z_norm_decay_rate,
)
from kolmo.app.dynamics import INVISCID_TAGS, LINEAR_SHEAR_TAGS, EvolutionModel, FieldMap, ModelTag, SimState, evolve
from kolmo.app.errors import ConfigurationError, InvalidParameterError, KolmoLabError, NumericalAbortError
from kolmo.app.flows import BaseFlow, FlowKind, dipole_flow, kolmogorov_flow, shear_flow
from kolmo.app.initial_conditions import build_initial
from kolmo.app.logging_utils import configure_logging, run_log
from kolmo.app.models import RunManifest, SweepRow, TimeSeriesRecord
from kolmo.app.profiles import Domain, builtin_profile, load_profile_csv
from kolmo.app.rayleigh import rayleigh_refine
from kolmo.app.spectral import P1, PNEQ0, TorusGrid, complement, make_grid, project
from kolmo.app.stability import (
    alpha_max,
    center_space,
    center_space_projector,
    embedded_eigenvalue_scan,
    energy_casimir_report,
    index_check,
)
from kolmo.app.storage import save_series, save_snapshot, save_table, write_json
from kolmo.app.utils import code_version, fit_exponential_rate, fit_power_growth, sha256_of_file, utc_now_iso

DAMPING_PROBES = ("l2", "nonshear_l2", "nonshear_x1free_l2")
RAGE_PROBES = ("pn_x_sq", "velocity_sq", "velocity_sq_x1free", "l2")
SWEEP_COLUMNS = ("nu", "status", "ratio", "initial_norm", "final_norm", "z_decay_rate", "error")
# Resolución vertical de L₀ para decidir si el flujo tiene modos inestables
PREDICTION_RESOLUTION = 128


@dataclass(frozen=True, slots=True)
class RunResult:
    manifest: RunManifest
    output_dir: Path
    summary: dict[str, Any]


def build_flow(section: FlowSection, alpha: float) -> BaseFlow:
    """Flujo base descrito por la sección `[flow]`."""

    match section.kind:
        case "KolmogorovBar":
            return kolmogorov_flow(alpha)
        case "Dipole":
            return dipole_flow(alpha)
    domain = Domain.torus() if section.domain == "torus" else Domain.channel(section.y1, section.y2)
    if section.csv is not None:
        profile = load_profile_csv(section.csv, domain)
    else:
        profile = builtin_profile(section.profile, domain, section.params)
    return shear_flow(profile, u_s=section.u_s, alpha=alpha)


def build_model(config: ExperimentConfig, *, nu: float | None = None) -> EvolutionModel:
    tag = config.model.tag
    flow = build_flow(config.flow, config.grid.alpha) if tag is ModelTag.lin_euler_shear else None
    return EvolutionModel(
        tag=tag,
        nu=config.model.nu if nu is None else nu,
        time_dependent_factor=config.model.time_dependent_factor,
        flow=flow,
    )


def build_grid(config: ExperimentConfig, settings: AppSettings) -> TorusGrid:
    return make_grid(
        config.grid.alpha,
        config.grid.nx,
        config.grid.ny,
        dealias_fraction=settings.dealias_fraction,
    )


def build_projector(
    config: ExperimentConfig, model: EvolutionModel, grid: TorusGrid, *, floor: float
) -> FieldMap | None:
    match config.model.projector:
        case "center":
            return center_space_projector(model, grid, floor=floor)
        case "x1":
            return lambda omega: complement(project(omega, PNEQ0), P1)
    return None


class _SnapshotWriter:
    """Guarda una instantánea cada `every` unidades de tiempo."""

    def __init__(self, directory: Path, every: float) -> None:
        self.directory = directory
        self.every = every
        self.next_time = 0.0
        self.written: list[Path] = []

    def __call__(self, state: SimState) -> None:
        if state.time + 1e-12 < self.next_time:
            return
        path = self.directory / f"snapshot_{len(self.written):05d}.json"
        self.written.append(save_snapshot(path, state.omega, time=state.time))
        self.next_time = (math.floor(state.time / self.every + 1e-9) + 1) * self.every


def _integrate(
    config: ExperimentConfig,
    settings: AppSettings,
    *,
    nu: float | None = None,
    t_end: float | None = None,
    extra_probes: tuple[str, ...] = (),
    snapshots_dir: Path | None = None,
) -> tuple[TimeSeriesRecord, EvolutionModel, TorusGrid]:
    grid = build_grid(config, settings)
    model = build_model(config, nu=nu)
    probes = validate_probes([*config.probes.names, *extra_probes])
    context = ProbeContext.for_model(
        model, grid, rage_n=config.probes.rage_n, rage_on_x1=config.probes.rage_on_x1
    )
    omega = build_initial(
        config.initial,
        grid,
        seed=config.experiment.seed,
        default_k0=settings.default_envelope_k0,
        model=model,
    )
    on_sample = None
    if snapshots_dir is not None and config.output.snapshots_every is not None:
        on_sample = _SnapshotWriter(snapshots_dir, config.output.snapshots_every)
    record = evolve(
        SimState(omega, 0.0, model),
        t_end if t_end is not None else config.model.t_end,
        config.model.sample_every or settings.default_sample_every,
        probes,
        dt=config.model.dt or settings.default_dt,
        context=context,
        projector=build_projector(config, model, grid, floor=settings.unstable_floor),
        cfl_safety=settings.cfl_safety,
        on_sample=on_sample,
    )
    return record, model, grid


def _damping_horizon(config: ExperimentConfig, nu: float) -> float:
    if not nu > 0:
        raise InvalidParameterError(f"El amortiguamiento reforzado necesita ν > 0 (recibido {nu})")
    tau = config.model.tau
    horizon = tau / nu if tau is not None else 0.0
    return max(horizon, config.model.t_end or 0.0)


def _damping_run(config: ExperimentConfig, settings: AppSettings, nu: float, series_path: Path | None):
    """Una ejecución de amortiguamiento; devuelve el registro y el informe."""

    started = time.perf_counter()
    record, model, grid = _integrate(
        config, settings, nu=nu, t_end=_damping_horizon(config, nu), extra_probes=DAMPING_PROBES
    )
    if series_path is not None:
        save_series(series_path, record)
    tau = config.model.tau or nu * config.model.t_end
    report = enhanced_damping_metric(
        record,
        nu=nu,
        tau=tau,
        square=is_square_torus(grid),
        metadata={"model": model.describe(), "grid": grid.to_dict()},
    )
    report.runtime_seconds = time.perf_counter() - started
    return record, report


def _sweep_task(payload: tuple[ExperimentConfig, AppSettings, float, str]) -> dict[str, Any]:
    """Tarea de un proceso del barrido; los fallos quedan en la fila."""

    config, settings, nu, series_path = payload
    with sfft.set_workers(settings.fft_workers):
        try:
            record, report = _damping_run(config, settings, nu, Path(series_path))
        except NumericalAbortError as exc:
            if exc.record is not None:
                save_series(Path(series_path), exc.record)
            logger.warning("Barrido: ν={} abortado en t={:.6g}", nu, exc.time)
            return SweepRow(nu=nu, status="aborted", error=str(exc)).to_dict()
        except KolmoLabError as exc:
            logger.warning("Barrido: ν={} fallido: {}", nu, exc)
            return SweepRow(nu=nu, status="failed", error=str(exc)).to_dict()
        except Exception as exc:
            # LinAlgError, FloatingPointError...: el resto del barrido sigue.
            logger.opt(exception=exc).error("Barrido: ν={} fallido por {}", nu, type(exc).__name__)
            return SweepRow(nu=nu, status="failed", error=f"{type(exc).__name__}: {exc}").to_dict()
    return SweepRow(
        nu=nu,
        status="ok",
        ratio=report.ratio,
        initial_norm=report.initial_norm,
        final_norm=report.final_norm,
        z_decay_rate=_sweep_z_rate(record),
    ).to_dict()


def _predicted_growth_rate(model: EvolutionModel, grid: TorusGrid, *, floor: float) -> float:
    """Mayor Re λ del operador de Galerkin; 0 si α ≥ α_max o el flujo es de clase 1."""

    flow = model.base_flow(grid.alpha)
    if flow.kind is FlowKind.shear_no_inflection or grid.alpha >= alpha_max(flow, PREDICTION_RESOLUTION):
        return 0.0
    return center_space_projector(model, grid, floor=floor).max_growth_rate


def _sweep_z_rate(record: TimeSeriesRecord) -> float:
    if "z_norm" not in record.columns:
        return float("nan")
    try:
        rate, _ = z_norm_decay_rate(record)
    except InvalidParameterError:
        return float("nan")
    return rate


def _stability_task(payload: tuple[ExperimentConfig, AppSettings, float]) -> dict[str, Any]:
    """Tabla del índice y comprobaciones espectrales para un α."""

    config, settings, alpha = payload
    section = config.stability
    flow = build_flow(config.flow, alpha)
    if not flow.is_shear:
        raise InvalidParameterError("La tabla de estabilidad necesita un flujo de cizalla")
    tolerances = {
        "floor": settings.unstable_floor,
        "calibration_alpha": settings.calibration_alpha,
        "zero_tol_rel": settings.zero_tol_rel,
    }
    result: dict[str, Any] = {"alpha": alpha}
    report = index_check(
        flow, alpha, section.l_max, section.n, section.bc, cluster_rel=settings.cluster_radius_rel, **tolerances
    )
    result["index"] = report.to_dict()
    result["rows"] = [row.to_dict() for row in report.rows]
    if section.cross_check_n is not None:
        check = index_check(
            flow,
            alpha,
            section.l_max,
            section.cross_check_n,
            section.bc,
            cluster_rel=settings.cluster_radius_rel,
            **tolerances,
        )
        result["cross_check"] = {
            "n": section.cross_check_n,
            "k_ul": [row.k_ul for row in check.rows],
            "agrees": [row.k_ul for row in check.rows] == [row.k_ul for row in report.rows],
        }
    if section.resolutions:
        result["scans"] = [
            embedded_eigenvalue_scan(flow, alpha, l, section.resolutions, section.bc).to_dict()
            for l in range(1, section.l_max + 1)
        ]
    if section.center_space:
        result["center_space"] = [
            center_space(flow, alpha, row.l, section.n, section.bc, **tolerances).to_dict()
            for row in report.rows
            if row.k_ul > 0
        ]
    if section.shoot:
        shots = []
        for row in report.rows:
            for speed in _unstable_speeds(report, row.l):
                if speed.imag <= 0:
                    continue
                refined = rayleigh_refine(flow, alpha, row.l, speed)
                shots.append({"l": row.l, **refined.to_dict()})
        result["rayleigh"] = shots
    result["energy_casimir"] = energy_casimir_report(flow, alpha, section.l_max, section.n, section.bc)
    return result


def _unstable_speeds(report, l: int) -> list[complex]:
    # phase_speeds se acumulan por filas en el orden de l.
    speeds: list[complex] = []
    offset = 0
    for row in report.rows:
        if row.l == l:
            speeds = list(report.phase_speeds[offset : offset + row.k_ul])
            break
        offset += row.k_ul
    return speeds


class ExperimentService:
    """Fachada principal: carga configuraciones, ejecuta y persiste artefactos."""

    def __init__(self, settings: AppSettings | None = None) -> None:
        self.settings = settings or load_settings()
        configure_logging(self.settings.logs_dir)

    def load(
        self,
        config_path: Path,
        *,
        out: Path | None = None,
        seed: int | None = None,
        expected_kind: str | None = None,
    ) -> ExperimentConfig:
        config = apply_overrides(load_experiment_config(config_path), out=out, seed=seed)
        if expected_kind is not None and config.experiment.kind != expected_kind:
            raise ConfigurationError(
                f"experiment.kind: el fichero declara '{config.experiment.kind}' y la orden es '{expected_kind}'"
            )
        return config

    def output_dir(self, config: ExperimentConfig) -> Path:
        directory = config.output.dir or self.settings.outputs_dir / config.experiment.name
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        return directory

    def run(
        self,
        config_path: Path,
        *,
        out: Path | None = None,
        parallel: int | None = None,
        seed: int | None = None,
        expected_kind: str | None = None,
    ) -> RunResult:
        """Ejecuta el experimento descrito en `config_path` y escribe sus artefactos."""

        config = self.load(config_path, out=out, seed=seed, expected_kind=expected_kind)
        return self.run_config(config, parallel=parallel)

    def run_config(self, config: ExperimentConfig, *, parallel: int | None = None) -> RunResult:
        parallel = parallel or self.settings.default_parallel
        if parallel < 1:
            raise ConfigurationError(f"--parallel debe ser ≥ 1 (recibido {parallel})")
        directory = self.output_dir(config)
        manifest = RunManifest(
            kind=config.experiment.kind,
            name=config.experiment.name,
            seed=config.experiment.seed,
            config=config.resolved(),
            code_version=code_version(),
            started_at=utc_now_iso(),
        )
        manifest.config["numerics"] = {
            "cfl_safety": self.settings.cfl_safety,
            "dealias_fraction": self.settings.dealias_fraction,
            "zero_tol_rel": self.settings.zero_tol_rel,
            "cluster_radius_rel": self.settings.cluster_radius_rel,
            "unstable_floor": self.settings.unstable_floor,
            "fft_workers": self.settings.fft_workers,
        }
        with run_log(directory):
            logger.info("Experimento {} ({}) en {}", config.experiment.name, config.experiment.kind, directory)
            started = time.perf_counter()
            outputs: list[Path] = []
            try:
                with sfft.set_workers(self.settings.fft_workers):
                    match config.experiment.kind:
                        case "simulate":
                            summary = self._simulate(config, directory, outputs)
                        case "damping":
                            summary = self._damping(config, directory, outputs)
                        case "rage":
                            summary = self._rage(config, directory, outputs)
                        case "sweep":
                            summary = self._sweep(config, directory, outputs, parallel)
                        case "stability":
                            summary = self._stability(config, directory, outputs, parallel)
            except NumericalAbortError as exc:
                if exc.record is not None:
                    series_path = directory / self.settings.series_filename
                    save_series(series_path, exc.record)
                    outputs.append(series_path)
                manifest.status = "aborted"
                manifest.abort_time = exc.time
                self._finish(manifest, directory, outputs, started)
                raise
            manifest.status = "ok"
            summary_path = directory / self.settings.summary_filename
            write_json(summary_path, summary)
            outputs.append(summary_path)
            self._finish(manifest, directory, outputs, started)
            return RunResult(manifest=manifest, output_dir=directory, summary=summary)

    def _finish(self, manifest: RunManifest, directory: Path, outputs: list[Path], started: float) -> None:
        manifest.finished_at = utc_now_iso()
        manifest.wall_seconds = time.perf_counter() - started
        manifest.outputs = {
            str(path.relative_to(directory)): sha256_of_file(path) for path in outputs if path.exists()
        }
        write_json(directory / self.settings.manifest_filename, manifest.to_dict())
        logger.info("Manifiesto {} ({}, {:.2f}s)", manifest.name, manifest.status, manifest.wall_seconds)

    def _snapshots_dir(self, directory: Path) -> Path:
        return directory / self.settings.snapshots_dirname

    def _simulate(self, config: ExperimentConfig, directory: Path, outputs: list[Path]) -> dict[str, Any]:
        snapshots = self._snapshots_dir(directory)
        record, model, grid = _integrate(config, self.settings, snapshots_dir=snapshots)
        series_path = directory / self.settings.series_filename
        save_series(series_path, record)
        outputs.append(series_path)
        if snapshots.exists():
            outputs.extend(sorted(snapshots.glob("snapshot_*")))

        summary: dict[str, Any] = {
            "model": model.describe(),
            "grid": grid.to_dict(),
            "samples": len(record),
            "t_final": record.times[-1],
            "final": {name: values[-1] for name, values in record.columns.items()},
        }
        if "diss_inner_l" in record.columns and len(record) >= 3:
            residual = dissipation_residual(record, model.nu)
            summary["dissipation_residual_max_relative"] = residual.max_relative
        if "inner_l" in record.columns:
            energy = record.column("inner_l")
            scale = max(abs(float(energy[0])), 1e-300)
            summary["inner_l_drift_relative"] = float(np.max(np.abs(energy - energy[0]))) / scale
        if "h1" in record.columns and model.tag in INVISCID_TAGS and record.times[-1] > FIT_TRANSIENT_WINDOW:
            summary["h1_growth_exponent"] = fit_power_growth(
                record.time_array, record.column("h1"), t_min=FIT_TRANSIENT_WINDOW
            )
        if "non_p2_l2" in record.columns and "l2" in record.columns:
            summary["liapunov_ratio"] = liapunov_ratio(record)
        if "z_norm" in record.columns:
            rate, r2 = z_norm_decay_rate(record)
            summary["z_norm_decay_rate"] = rate
            summary["z_norm_fit_r2"] = r2
        return summary

    def _damping(self, config: ExperimentConfig, directory: Path, outputs: list[Path]) -> dict[str, Any]:
        series_path = directory / self.settings.series_filename
        record, report = _damping_run(config, self.settings, config.model.nu, series_path)
        outputs.append(series_path)
        summary = report.to_dict()
        if "non_p2_l2" in record.columns:
            summary["liapunov_ratio"] = liapunov_ratio(record)
        return summary

    def _rage(self, config: ExperimentConfig, directory: Path, outputs: list[Path]) -> dict[str, Any]:
        record, model, grid = _integrate(config, self.settings, extra_probes=RAGE_PROBES)
        series_path = directory / self.settings.series_filename
        save_series(series_path, record)
        outputs.append(series_path)

        t_final = record.times[-1]
        t_ref = config.probes.reference_time or t_final / 20.0
        rage = rage_average(record)
        velocity = velocity_damping_average(
            record, "velocity_sq" if not is_square_torus(grid) else "velocity_sq_x1free"
        )
        summary: dict[str, Any] = {
            "model": model.describe(),
            "grid": grid.to_dict(),
            "reference_time": t_ref,
            "t_final": t_final,
            "rage_reference": value_at(record, rage, t_ref),
            "rage_final": float(rage[-1]),
            "velocity_reference": value_at(record, velocity, t_ref),
            "velocity_final": float(velocity[-1]),
        }
        summary["rage_ratio"] = _safe_ratio(summary["rage_final"], summary["rage_reference"])
        summary["velocity_ratio"] = _safe_ratio(summary["velocity_final"], summary["velocity_reference"])
        summary["rage_passed"] = summary["rage_ratio"] <= RAGE_RATIO_MAX
        summary["velocity_passed"] = summary["velocity_ratio"] <= VELOCITY_RATIO_MAX
        rate, r2 = fit_exponential_rate(record.time_array, record.column("l2"), t_min=t_final / 2.0)
        summary["l2_growth_rate"] = rate
        summary["l2_fit_r2"] = r2
        if model.tag in LINEAR_SHEAR_TAGS and config.model.projector == "none":
            predicted = _predicted_growth_rate(model, grid, floor=self.settings.unstable_floor)
            summary["predicted_growth_rate"] = predicted
            if predicted > 0.0:
                summary["growth_rate_matches"] = abs(rate - predicted) <= GROWTH_RATE_REL_TOL * predicted
        return summary

    def _sweep(
        self, config: ExperimentConfig, directory: Path, outputs: list[Path], parallel: int
    ) -> dict[str, Any]:
        nus = sorted(config.model.nu_list)
        payloads = [
            (config, self.settings, nu, str(directory / f"series_nu={nu:.6g}.csv")) for nu in nus
        ]
        if parallel == 1 or len(payloads) <= 1:
            rows = [_sweep_task(payload) for payload in payloads]
        else:
            with ProcessPoolExecutor(max_workers=parallel) as executor:
                rows = list(executor.map(_sweep_task, payloads))
        table_path = directory / "sweep.csv"
        save_table(table_path, rows, SWEEP_COLUMNS)
        outputs.append(table_path)
        outputs.extend(Path(payload[3]) for payload in payloads)

        ratios = [row["ratio"] for row in rows if row["status"] == "ok"]
        monotone = len(ratios) == len(rows) and all(a < b for a, b in zip(ratios, ratios[1:]))
        summary = {
            "rows": rows,
            "all_below_one": bool(ratios) and all(ratio < 1.0 for ratio in ratios),
            "monotone_in_nu": monotone,
            "failures": [row["nu"] for row in rows if row["status"] != "ok"],
        }
        # Escalado de Beck–Wayne: rate ∝ ν^{1/2} si hay la sonda z_norm.
        scaling = [(row["nu"], row["z_decay_rate"]) for row in rows if row["z_decay_rate"] > 0]
        if len(scaling) >= 2:
            nu_values, rates = np.log(np.array(scaling)).T
            summary["z_rate_nu_exponent"] = float(np.polyfit(nu_values, rates, 1)[0])
        return summary

    def _stability(
        self, config: ExperimentConfig, directory: Path, outputs: list[Path], parallel: int
    ) -> dict[str, Any]:
        payloads = [(config, self.settings, float(alpha)) for alpha in config.stability.alphas]
        if parallel == 1 or len(payloads) <= 1:
            results = [_stability_task(payload) for payload in payloads]
        else:
            with ProcessPoolExecutor(max_workers=parallel) as executor:
                results = list(executor.map(_stability_task, payloads))

        rows = []
        for result in results:
            for row in result["rows"]:
                rows.append(
                    {
                        "l": row["l"],
                        "alpha": row["alpha"],
                        "n_neg": row["n_neg"],
                        "k_ul": row["k_ul"],
                        "max_Re_lambda": row["max_re_lambda"],
                    }
                )
        table_path = directory / "stability.csv"
        save_table(table_path, rows, STABILITY_CSV_COLUMNS)
        outputs.append(table_path)
        return {
            "flow": build_flow(config.flow, config.stability.alphas[0]).describe() if results else None,
            "results": [_strip_rows(result) for result in results],
            "passed": all(result["index"]["passed"] for result in results),
        }


def _strip_rows(result: dict[str, Any]) -> dict[str, Any]:
    return {key: value for key, value in result.items() if key != "rows"}


def _safe_ratio(numerator: float, denominator: float) -> float:
    return numerator / denominator if denominator > 0 else float("nan")



def describe_settings(settings: AppSettings) -> dict[str, Any]:
    """Configuración efectiva como diccionario plano."""

    return {key: str(value) if isinstance(value, Path) else value for key, value in asdict(settings).items()}
