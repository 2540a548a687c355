"""CLI del laboratorio: una orden por tipo de experimento."""

from __future__ import annotations

from pathlib import Path
from typing import Any

import typer
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from kolmo.app.errors import KolmoLabError, NumericalError
from kolmo.app.services import ExperimentService, RunResult, describe_settings

EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3

console = Console()
app = typer.Typer(
    add_completion=False,
    no_args_is_help=True,
    help="Laboratorio numérico de metaestabilidad en flujos de Kolmogorov y de cizalla.",
)

ConfigOption = typer.Option(..., "--config", "-c", exists=False, help="Fichero TOML del experimento.")
OutOption = typer.Option(None, "--out", "-o", help="Directorio de salida (por defecto outputs/<nombre>).")
ParallelOption = typer.Option(None, "--parallel", "-p", min=1, help="Procesos para barridos y tablas.")
SeedOption = typer.Option(None, "--seed", min=0, help="Semilla que sustituye a experiment.seed.")


def _service() -> ExperimentService:
    return ExperimentService()


def _run_or_die(action) -> None:
    try:
        action()
    except NumericalError as exc:
        console.print(Panel(str(exc), title="Aborto numérico", border_style="red"))
        raise typer.Exit(code=EXIT_NUMERICAL) from exc
    except KolmoLabError as exc:
        console.print(Panel(str(exc), title="Error", border_style="red"))
        raise typer.Exit(code=EXIT_VALIDATION) from exc


def _format(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def _render_summary(result: RunResult, keys: list[str]) -> None:
    table = Table(title=f"{result.manifest.name} ({result.manifest.kind})")
    table.add_column("Magnitud")
    table.add_column("Valor", justify="right")
    for key in keys:
        if key in result.summary:
            table.add_row(key, _format(result.summary[key]))
    console.print(table)
    console.print(
        Panel.fit(
            f"Artefactos en {result.output_dir} ({len(result.manifest.outputs)} ficheros, "
            f"{result.manifest.wall_seconds:.2f}s)",
            title="OK",
            border_style="green",
        )
    )


def _render_rows(title: str, rows: list[dict[str, Any]], columns: list[str]) -> None:
    table = Table(title=title, show_lines=False)
    for column in columns:
        table.add_column(column, justify="right")
    for row in rows:
        table.add_row(*(_format(row.get(column, "")) for column in columns))
    console.print(table)


def _run(kind: str, config: Path, out: Path | None, parallel: int | None, seed: int | None) -> RunResult:
    return _service().run(config, out=out, parallel=parallel, seed=seed, expected_kind=kind)


@app.command("simulate")
def simulate(
    config: Path = ConfigOption,
    out: Path | None = OutOption,
    parallel: int | None = ParallelOption,
    seed: int | None = SeedOption,
) -> None:
    """Integra un modelo y guarda la serie de diagnósticos."""

    def _action() -> None:
        result = _run("simulate", config, out, parallel, seed)
        _render_summary(
            result,
            ["samples", "t_final", "dissipation_residual_max_relative", "liapunov_ratio", "z_norm_decay_rate"],
        )
        final = result.summary.get("final", {})
        if final:
            _render_rows("Valores finales", [final], list(final))

    _run_or_die(_action)


@app.command("damping")
def damping(
    config: Path = ConfigOption,
    out: Path | None = OutOption,
    parallel: int | None = ParallelOption,
    seed: int | None = SeedOption,
) -> None:
    """Cociente de amortiguamiento reforzado a tiempo τ/ν."""

    def _action() -> None:
        result = _run("damping", config, out, parallel, seed)
        _render_summary(
            result, ["nu", "tau", "t_final", "metric", "ratio", "initial_norm", "final_norm", "liapunov_ratio"]
        )

    _run_or_die(_action)


@app.command("sweep")
def sweep(
    config: Path = ConfigOption,
    out: Path | None = OutOption,
    parallel: int | None = ParallelOption,
    seed: int | None = SeedOption,
) -> None:
    """Barrido en ν de ejecuciones de amortiguamiento independientes."""

    def _action() -> None:
        result = _run("sweep", config, out, parallel, seed)
        _render_rows("Barrido en ν", result.summary["rows"], ["nu", "status", "ratio", "initial_norm", "final_norm"])
        _render_summary(result, ["all_below_one", "monotone_in_nu"])

    _run_or_die(_action)


@app.command("stability")
def stability(
    config: Path = ConfigOption,
    out: Path | None = OutOption,
    parallel: int | None = ParallelOption,
    seed: int | None = SeedOption,
) -> None:
    """Tabla del índice `k_{u,l}` frente a `n⁻(L₀ + l²α²)`."""

    def _action() -> None:
        result = _run("stability", config, out, parallel, seed)
        rows = [row for item in result.summary["results"] for row in item["index"]["rows"]]
        _render_rows("Fórmula del índice", rows, ["alpha", "l", "n_neg", "k_ul", "matches", "max_re_lambda"])
        _render_summary(result, ["passed"])

    _run_or_die(_action)


@app.command("rage")
def rage(
    config: Path = ConfigOption,
    out: Path | None = OutOption,
    parallel: int | None = ParallelOption,
    seed: int | None = SeedOption,
) -> None:
    """Promedios temporales tipo RAGE y amortiguamiento no viscoso de la velocidad."""

    def _action() -> None:
        result = _run("rage", config, out, parallel, seed)
        _render_summary(
            result,
            [
                "reference_time",
                "t_final",
                "rage_ratio",
                "velocity_ratio",
                "l2_growth_rate",
                "predicted_growth_rate",
            ],
        )

    _run_or_die(_action)


@app.command("settings")
def settings() -> None:
    """Muestra la configuración efectiva de ejecución."""

    def _action() -> None:
        payload = describe_settings(_service().settings)
        table = Table(title="Configuración efectiva")
        table.add_column("Clave")
        table.add_column("Valor")
        for key, value in payload.items():
            table.add_row(key, _format(value))
        console.print(table)

    _run_or_die(_action)
