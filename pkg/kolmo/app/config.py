"""Carga tipada de configuración con Dynaconf, variables de entorno y pydantic."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Any, Literal

from dotenv import load_dotenv
from dynaconf import Dynaconf
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from kolmo.app.dynamics import ModelTag
from kolmo.app.errors import ArtifactMissingError, ConfigurationError

ExperimentKind = Literal["simulate", "sweep", "stability", "rage", "damping"]


@dataclass(frozen=True, slots=True)
class AppSettings:
    """Configuración efectiva de la aplicación."""

    repo_root: Path
    project_dir: Path
    outputs_dir: Path
    logs_dir: Path
    manifest_filename: str
    series_filename: str
    summary_filename: str
    snapshots_dirname: str
    fft_workers: int
    cfl_safety: float
    dealias_fraction: float
    zero_tol_rel: float
    cluster_radius_rel: float
    unstable_floor: float
    calibration_alpha: float
    default_dt: float
    default_sample_every: float
    default_envelope_k0: float
    default_parallel: int


@lru_cache(maxsize=1)
def load_settings() -> AppSettings:
    """Carga la configuración desde `settings.toml` y `.env`."""

    project_dir = Path(__file__).resolve().parents[1]
    repo_root = project_dir.parent
    load_dotenv(project_dir / ".env", override=False)

    dynasettings = Dynaconf(
        envvar_prefix="KOLMO",
        settings_files=[project_dir / "settings.toml"],
        load_dotenv=False,
    )

    outputs_dir = repo_root / dynasettings.paths.outputs_dir
    logs_dir = repo_root / dynasettings.paths.logs_dir
    ensure_runtime_directories(outputs_dir, logs_dir)

    return AppSettings(
        repo_root=repo_root,
        project_dir=project_dir,
        outputs_dir=outputs_dir,
        logs_dir=logs_dir,
        manifest_filename=str(dynasettings.paths.manifest_filename),
        series_filename=str(dynasettings.paths.series_filename),
        summary_filename=str(dynasettings.paths.summary_filename),
        snapshots_dirname=str(dynasettings.paths.snapshots_dirname),
        fft_workers=int(dynasettings.numerics.fft_workers),
        cfl_safety=float(dynasettings.numerics.cfl_safety),
        dealias_fraction=float(dynasettings.numerics.dealias_fraction),
        zero_tol_rel=float(dynasettings.numerics.zero_tol_rel),
        cluster_radius_rel=float(dynasettings.numerics.cluster_radius_rel),
        unstable_floor=float(dynasettings.numerics.unstable_floor),
        calibration_alpha=float(dynasettings.numerics.calibration_alpha),
        default_dt=float(dynasettings.runs.default_dt),
        default_sample_every=float(dynasettings.runs.default_sample_every),
        default_envelope_k0=float(dynasettings.runs.default_envelope_k0),
        default_parallel=int(dynasettings.sweep.default_parallel),
    )


def ensure_runtime_directories(*paths: Path) -> None:
    """Crea directorios de trabajo si no existen."""

    for path in paths:
        path.mkdir(parents=True, exist_ok=True)


# ── Ficheros de experimento ───────────────────────────────────────────────


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class ExperimentSection(_Section):
    kind: ExperimentKind
    name: str = "experiment"
    seed: int = Field(default=0, ge=0, le=2**64 - 1)


class GridSection(_Section):
    alpha: float = Field(default=1.0, gt=0)
    nx: int = Field(default=64, ge=4)
    ny: int = Field(default=64, ge=4)


class ModelSection(_Section):
    tag: ModelTag = ModelTag.lns_bar
    nu: float = Field(default=0.0, ge=0)
    nu_list: list[float] = Field(default_factory=list)
    dt: float | None = Field(default=None, gt=0)
    t_end: float | None = Field(default=None, gt=0)
    tau: float | None = Field(default=None, gt=0)
    sample_every: float | None = Field(default=None, gt=0)
    time_dependent_factor: bool = True
    projector: Literal["none", "center", "x1"] = "none"


class FlowSection(_Section):
    kind: Literal["KolmogorovBar", "Dipole", "Shear"] = "KolmogorovBar"
    profile: str | None = None
    params: dict[str, float] = Field(default_factory=dict)
    csv: Path | None = None
    domain: Literal["torus", "channel"] = "torus"
    y1: float | None = None
    y2: float | None = None
    u_s: float | None = None

    @model_validator(mode="after")
    def _check_source(self) -> "FlowSection":
        if self.kind == "Shear" and (self.profile is None) == (self.csv is None):
            raise ValueError("flow: indica exactamente uno de 'profile' o 'csv' para un flujo Shear")
        if self.domain == "channel" and (self.y1 is None or self.y2 is None or self.y2 <= self.y1):
            raise ValueError("flow: el canal necesita y1 < y2")
        return self


class ModeSpec(_Section):
    k: int = Field(ge=0)
    m: int
    part: Literal["cos", "sin"] = "cos"
    amplitude: float = 1.0


class InitialSection(_Section):
    kind: Literal["named", "random", "snapshot"] = "random"
    modes: list[ModeSpec] = Field(default_factory=list)
    amplitude: float = Field(default=1.0, gt=0)
    k0: float | None = Field(default=None, gt=0)
    subspace: Literal["any", "nonshear", "x1", "center", "pn", "pn_x1"] = "any"
    pn_n: int = Field(default=8, ge=1)
    target_norm: float | None = Field(default=None, gt=0)
    path: Path | None = None

    @model_validator(mode="after")
    def _check_kind(self) -> "InitialSection":
        if self.kind == "named" and not self.modes:
            raise ValueError("initial.modes es obligatorio con kind = 'named'")
        if self.kind == "snapshot" and self.path is None:
            raise ValueError("initial.path es obligatorio con kind = 'snapshot'")
        return self


class ProbesSection(_Section):
    names: list[str] = Field(default_factory=lambda: ["l2", "h1", "inner_l"], alias="list")
    rage_n: int = Field(default=8, ge=1)
    rage_on_x1: bool = False
    reference_time: float | None = Field(default=None, gt=0)


class StabilitySection(_Section):
    alphas: list[float] = Field(default_factory=list)
    l_max: int = Field(default=3, ge=1)
    n: int = Field(default=128, ge=16)
    cross_check_n: int | None = Field(default=None, ge=16)
    bc: Literal["periodic", "dirichlet"] | None = None
    resolutions: list[int] = Field(default_factory=list)
    center_space: bool = False
    shoot: bool = False


class OutputSection(_Section):
    dir: Path | None = None
    snapshots_every: float | None = Field(default=None, gt=0)


class ExperimentConfig(_Section):
    """Fichero de experimento validado; las rutas quedan resueltas."""

    experiment: ExperimentSection
    grid: GridSection = Field(default_factory=GridSection)
    model: ModelSection = Field(default_factory=ModelSection)
    flow: FlowSection = Field(default_factory=FlowSection)
    initial: InitialSection = Field(default_factory=InitialSection)
    probes: ProbesSection = Field(default_factory=ProbesSection)
    stability: StabilitySection = Field(default_factory=StabilitySection)
    output: OutputSection = Field(default_factory=OutputSection)
    source: Path | None = None

    @model_validator(mode="after")
    def _check_kind(self) -> "ExperimentConfig":
        kind = self.experiment.kind
        if kind in {"simulate", "rage"} and self.model.t_end is None:
            raise ValueError(f"model.t_end es obligatorio para experiment.kind = '{kind}'")
        if kind in {"damping", "sweep"} and self.model.tau is None and self.model.t_end is None:
            raise ValueError(f"model.tau es obligatorio para experiment.kind = '{kind}'")
        return self

    def referenced_paths(self) -> list[tuple[str, Path]]:
        paths = []
        if self.flow.csv is not None:
            paths.append(("flow.csv", self.flow.csv))
        if self.initial.kind == "snapshot" and self.initial.path is not None:
            paths.append(("initial.path", self.initial.path))
        return paths

    def resolved(self) -> dict[str, Any]:
        return self.model_dump(mode="json", by_alias=True, exclude={"source"})


def _lower_keys(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(key).lower(): _lower_keys(item) for key, item in value.items()}
    if isinstance(value, list):
        return [_lower_keys(item) for item in value]
    return value


def _format_validation_error(exc: ValidationError) -> str:
    lines = []
    for error in exc.errors():
        key = ".".join(str(part) for part in error["loc"]) or "<raíz>"
        lines.append(f"{key}: {error['msg']}")
    return "; ".join(lines)


def load_experiment_config(path: Path) -> ExperimentConfig:
    """Lee un TOML de experimento con Dynaconf y lo valida con pydantic.

    Las rutas relativas se resuelven respecto al directorio del fichero y
    deben existir en el momento de la carga.
    """

    path = Path(path)
    if not path.is_file():
        raise ArtifactMissingError(f"No existe el fichero de configuración: {path}")
    raw = Dynaconf(
        settings_files=[str(path)],
        envvar_prefix="KOLMO_EXPERIMENT",
        environments=False,
        load_dotenv=False,
    ).as_dict()
    payload = {key: value for key, value in _lower_keys(raw).items() if isinstance(value, dict)}
    if "experiment" not in payload:
        raise ConfigurationError(f"{path}: falta la sección [experiment]")
    try:
        config = ExperimentConfig.model_validate({**payload, "source": path.resolve()})
    except ValidationError as exc:
        raise ConfigurationError(f"{path}: {_format_validation_error(exc)}") from exc

    base = path.resolve().parent
    updates: dict[str, Any] = {}
    if config.flow.csv is not None and not config.flow.csv.is_absolute():
        updates["flow"] = config.flow.model_copy(update={"csv": base / config.flow.csv})
    if config.initial.path is not None and not config.initial.path.is_absolute():
        updates["initial"] = config.initial.model_copy(update={"path": base / config.initial.path})
    config = config.model_copy(update=updates)
    for key, referenced in config.referenced_paths():
        if not referenced.exists():
            raise ArtifactMissingError(f"{key}: no existe {referenced}")
    return config


def apply_overrides(
    config: ExperimentConfig,
    *,
    out: Path | None = None,
    seed: int | None = None,
) -> ExperimentConfig:
    """Aplica las opciones de la línea de órdenes sobre la configuración."""

    experiment = config.experiment
    output = config.output
    if seed is not None:
        if not 0 <= seed < 2**64:
            raise ConfigurationError(f"experiment.seed: fuera de rango ({seed})")
        experiment = experiment.model_copy(update={"seed": seed})
    if out is not None:
        output = output.model_copy(update={"dir": Path(out)})
    return config.model_copy(update={"experiment": experiment, "output": output})
