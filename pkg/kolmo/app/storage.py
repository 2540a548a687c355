"""Persistencia de manifiestos, series temporales, tablas e instantáneas."""

from __future__ import annotations

import csv
import json
from collections.abc import Sequence
from pathlib import Path
from typing import Any

import numpy as np

from kolmo.app.errors import ArtifactMissingError, FieldValidationError
from kolmo.app.models import TimeSeriesRecord
from kolmo.app.spectral import FieldKind, SpectralField, make_grid

ABORTED_MARKER = "# aborted"
SNAPSHOT_KEYS = frozenset({"alpha", "nx", "ny", "kind", "time", "endianness"})
SNAPSHOT_KINDS = (FieldKind.vorticity, FieldKind.stream)


def write_json(path: Path, payload: dict[str, Any]) -> None:
    """Guarda un JSON UTF-8 con formato legible."""

    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, ensure_ascii=False, indent=2, allow_nan=True), encoding="utf-8")


def read_json(path: Path) -> dict[str, Any]:
    """Lee un JSON desde disco."""

    ensure_artifact(path)
    return json.loads(path.read_text(encoding="utf-8"))


def ensure_artifact(path: Path) -> None:
    """Comprueba que un artefacto exista en disco."""

    if not path.exists():
        raise ArtifactMissingError(
            f"No existe el artefacto requerido: {path}. Ejecuta primero el experimento correspondiente."
        )


def save_series(path: Path, record: TimeSeriesRecord) -> None:
    """Escribe la serie como CSV con 17 cifras significativas.

    Una ejecución abortada añade la línea `# aborted t=<tiempo>` al final.
    """

    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as handler:
        np.savetxt(
            handler,
            record.as_matrix(),
            fmt="%.17g",
            delimiter=",",
            header=",".join(record.header()),
            comments="",
        )
        if record.aborted:
            handler.write(f"{ABORTED_MARKER} t={record.abort_time!r}\n")


def load_series(path: Path) -> TimeSeriesRecord:
    ensure_artifact(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    header = lines[0].split(",")
    record = TimeSeriesRecord()
    for line in lines[1:]:
        if line.startswith(ABORTED_MARKER):
            record.aborted = True
            record.abort_time = float(line.split("t=", 1)[1])
            continue
        values = [float(item) for item in line.split(",")]
        record.append(values[0], dict(zip(header[1:], values[1:])))
    return record


def save_table(path: Path, rows: Sequence[dict[str, Any]], columns: Sequence[str]) -> None:
    """CSV de filas ya ordenadas; las celdas ausentes quedan vacías."""

    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as handler:
        writer = csv.DictWriter(handler, fieldnames=list(columns), extrasaction="ignore", lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({key: _cell(value) for key, value in row.items()})


def _cell(value: Any) -> Any:
    if isinstance(value, float):
        return format(value, ".17g")
    return value


def snapshot_paths(path: Path) -> tuple[Path, Path]:
    """Par `(sidecar .json, binario .bin)` de una instantánea."""

    return path.with_suffix(".json"), path.with_suffix(".bin")


def save_snapshot(path: Path, field: SpectralField, *, time: float) -> Path:
    """Guarda el campo en espacio físico como `<f8` fila a fila más un JSON de metadatos.

    El binario tiene `ny` filas de `nx` valores. Devuelve la ruta del JSON.
    """

    if field.kind not in SNAPSHOT_KINDS:
        raise FieldValidationError(f"Solo se guardan campos de vorticidad o de corriente, no {field.kind.value!r}")
    sidecar, binary = snapshot_paths(path)
    binary.parent.mkdir(parents=True, exist_ok=True)
    grid = field.grid
    field.to_physical().astype("<f8").tofile(binary)
    write_json(
        sidecar,
        {
            "alpha": grid.alpha,
            "nx": grid.nx,
            "ny": grid.ny,
            "kind": field.kind.value,
            "time": float(time),
            "endianness": "little",
        },
    )
    return sidecar


def _snapshot_meta(path: Path) -> dict[str, Any]:
    sidecar, _ = snapshot_paths(path)
    meta = read_json(sidecar)
    missing = SNAPSHOT_KEYS - meta.keys()
    if missing:
        raise FieldValidationError(f"Faltan claves en {sidecar}: {', '.join(sorted(missing))}")
    if meta["endianness"] != "little":
        raise FieldValidationError(f"{sidecar}: solo se admite endianness = 'little'")
    return meta


def load_snapshot(path: Path, *, dealias_fraction: float = 2.0 / 3.0) -> SpectralField:
    """Carga una instantánea guardada con `save_snapshot` (por su `.json` o su `.bin`)."""

    meta = _snapshot_meta(path)
    _, binary = snapshot_paths(path)
    ensure_artifact(binary)
    nx, ny = int(meta["nx"]), int(meta["ny"])
    values = np.fromfile(binary, dtype="<f8")
    if values.size != nx * ny:
        raise FieldValidationError(f"{binary} tiene {values.size} valores; se esperaban {ny}×{nx}")
    kind = next((item for item in SNAPSHOT_KINDS if item.value == meta["kind"]), None)
    if kind is None:
        raise FieldValidationError(f"Tipo de campo desconocido en {path}: {meta['kind']!r}")
    grid = make_grid(float(meta["alpha"]), nx, ny, dealias_fraction=dealias_fraction)
    return SpectralField.from_physical(grid, values.reshape(ny, nx), kind)
