"""Utilidades compartidas del proyecto."""

from __future__ import annotations

from datetime import datetime, timezone
from hashlib import sha256
from importlib import metadata
from pathlib import Path

import numpy as np

from kolmo.app.errors import InvalidParameterError

UTC = timezone.utc


def sha256_of_file(path: Path) -> str:
    """Calcula el hash SHA-256 de un archivo."""

    digest = sha256()
    with path.open("rb") as handler:
        for block in iter(lambda: handler.read(65536), b""):
            digest.update(block)
    return digest.hexdigest()


def utc_now_iso() -> str:
    """Devuelve la hora actual en ISO 8601 con zona UTC."""

    return datetime.now(UTC).isoformat()


def code_version() -> str:
    """Versión instalada del paquete, o `unknown` si se ejecuta desde el árbol."""

    try:
        return metadata.version("kolmo-lab")
    except metadata.PackageNotFoundError:
        return "unknown"


def fit_exponential_rate(
    times: np.ndarray, values: np.ndarray, *, t_min: float = 0.0
) -> tuple[float, float]:
    """Ajusta `values ≈ A·exp(rate·t)` por mínimos cuadrados en escala log.

    Devuelve `(rate, r2)`. Solo usa muestras con `t ≥ t_min` y valor positivo.
    """

    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    mask = (times >= t_min) & (values > 0)
    if mask.sum() < 3:
        raise InvalidParameterError("se necesitan al menos 3 muestras positivas para el ajuste")
    t = times[mask]
    log_v = np.log(values[mask])
    slope, intercept = np.polyfit(t, log_v, 1)
    residual = log_v - (slope * t + intercept)
    total = log_v - log_v.mean()
    ss_tot = float(total @ total)
    r2 = 1.0 - float(residual @ residual) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), r2


def fit_power_growth(
    times: np.ndarray, values: np.ndarray, *, t_min: float = 0.0
) -> float:
    """Pendiente log-log de `values` frente a `1 + t` (exponente de crecimiento)."""

    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    mask = (times >= t_min) & (values > 0)
    if mask.sum() < 3:
        raise InvalidParameterError("se necesitan al menos 3 muestras positivas para el ajuste")
    slope, _ = np.polyfit(np.log1p(times[mask]), np.log(values[mask]), 1)
    return float(slope)
