"""Magnitudes medibles a lo largo de una ejecución.

Las sondas (`PROBES`) se evalúan sobre instantáneas inmutables y devuelven
columnas escalares para el `TimeSeriesRecord`. El resto de funciones son
postprocesos de las series: residuo de la ley de disipación, promedios
temporales tipo RAGE y cocientes de amortiguamiento reforzado.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid

from kolmo.conf import FIT_TRANSIENT_WINDOW, SHEAR_ONLY_TOL
from kolmo.app.errors import InvalidParameterError, ProjectionError
from kolmo.app.flows import BaseFlow
from kolmo.app.models import DampingReport, ResidualSeries, TimeSeriesRecord
from kolmo.app.operators import apply_L, x1_form
from kolmo.app.spectral import (
    P0,
    P1,
    P2,
    PNEQ0,
    ProjectionTag,
    SpectralField,
    TorusGrid,
    complement,
    gradient_norm_sq,
    inner,
    l2_norm,
    pn_basis,
    poisson_solve,
    project,
    velocity_from_vorticity,
)
from kolmo.app.utils import fit_exponential_rate


@dataclass(frozen=True, slots=True)
class ProbeContext:
    """Datos de la ejecución que necesitan las sondas."""

    flow: BaseFlow
    nu: float = 0.0
    rage_n: int = 8
    rage_on_x1: bool = False

    @classmethod
    def for_model(cls, model, grid: TorusGrid, *, rage_n: int = 8, rage_on_x1: bool = False) -> "ProbeContext":
        context = cls(flow=model.base_flow(grid.alpha), nu=model.nu, rage_n=rage_n, rage_on_x1=rage_on_x1)
        context.validate(grid)
        return context

    def validate(self, grid: TorusGrid) -> None:
        available = len(pn_basis(grid, self.rage_on_x1))
        if not 1 <= self.rage_n <= available:
            raise ProjectionError(f"rage_n={self.rage_n} fuera de [1, {available}] para esta malla")


def is_square_torus(grid: TorusGrid) -> bool:
    return math.isclose(grid.alpha, 1.0, rel_tol=0.0, abs_tol=1e-12)


@dataclass(frozen=True, slots=True)
class ComponentSplit:
    """`ω = ω_s1 + ω_s2 + ω_n1 + ω_n2` con las proyecciones P₀, P₂ y P₁."""

    s1: SpectralField
    s2: SpectralField
    n1: SpectralField
    n2: SpectralField
    square: bool

    @property
    def a1(self) -> float:
        """Coeficiente de `cos y` en `ω_s1`."""

        slot = self.s1.grid.mode_slot(0, 1)
        return float(2.0 * self.s1.coeffs[slot].real)

    @property
    def a2(self) -> float:
        """Coeficiente de `sin y` en `ω_s1`."""

        slot = self.s1.grid.mode_slot(0, 1)
        return float(-2.0 * self.s1.coeffs[slot].imag)

    def norms(self) -> dict[str, float]:
        a = l2_norm(self.s1)
        b = l2_norm(self.n1)
        return {
            "s1": a,
            "s2": l2_norm(self.s2),
            "n1": b,
            "n2": l2_norm(self.n2),
            "a": a,
            "b": b,
            "e": a + b,
            "a1": self.a1,
            "a2": self.a2,
        }


def component_decomposition(omega: SpectralField) -> ComponentSplit:
    """Descomposición en partes de cizalla y no cizalla.

    En el toro rectangular no hay modos anómalos: `ω_n1 = 0` y
    `ω_n2 = P_{≠0}ω`.
    """

    shear = project(omega, P0)
    nonshear = project(omega, PNEQ0)
    s1 = project(shear, P2)
    square = is_square_torus(omega.grid)
    n1 = project(nonshear, P1) if square else nonshear * 0.0
    return ComponentSplit(s1=s1, s2=shear - s1, n1=n1, n2=nonshear - n1, square=square)


def z_norm(omega: SpectralField, nu: float, t: float) -> float:
    """Norma Z ponderada por ν (al cuadrado) sobre los modos con k ≠ 0.

    `Σ_k ‖ω_k‖² + √(ν/|k|)‖∂_yω_k‖² + ‖C^kω_k‖²/(√ν|k|^{3/2})` con
    `C^kω_k = −ik e^{νt} cos(y) ω_k` y `k` el número de onda físico αk.
    """

    if not nu > 0:
        raise InvalidParameterError("La norma Z requiere ν > 0")
    grid = omega.grid
    tables = grid.tables
    coeffs = np.where(tables.k_index != 0, omega.coeffs, 0.0)
    kabs = np.abs(tables.kx)
    safe_k = np.where(kabs > 0, kabs, 1.0)

    l2_term = np.abs(coeffs) ** 2
    dy_term = np.sqrt(nu / safe_k) * tables.ky**2 * np.abs(coeffs) ** 2
    # cos y desplaza el índice m en ±1 con peso 1/2.
    cos_y = 0.5 * (np.roll(coeffs, 1, axis=0) + np.roll(coeffs, -1, axis=0))
    c_term = (kabs**2 * math.exp(2.0 * nu * t)) * np.abs(cos_y) ** 2 / (math.sqrt(nu) * safe_k**1.5)
    total = np.where(kabs > 0, l2_term + dy_term + c_term, 0.0)
    return grid.area * float(np.sum(total))


def _pn_x_sq(omega: SpectralField, context: ProbeContext) -> float:
    projected = project(omega, ProjectionTag.pn(context.rage_n, on_x1=context.rage_on_x1))
    return inner(apply_L(context.flow, projected), projected)


def _velocity_sq(omega: SpectralField) -> float:
    return velocity_from_vorticity(omega).kinetic_energy()


def _coupled_energy(omega: SpectralField, context: ProbeContext) -> dict[str, float]:
    """Energía acoplada de cizalla y no cizalla y su tasa de disipación.

    `∫|ω_s2|² − |∂_yψ_s2|² + ‖ω_n‖²_X`, con `ω_n2` en lugar de `ω_n` sobre
    el toro cuadrado.
    """

    split = component_decomposition(omega)
    s2, n = split.s2, split.n2
    psi_s2 = poisson_solve(s2)
    energy = inner(s2, s2) - inner(s2, psi_s2) + inner(apply_L(context.flow, n), n)
    dissipation = gradient_norm_sq(s2) - inner(s2, s2) + x1_form(context.flow, n)
    return {"coupled_energy": energy, "coupled_dissipation": dissipation}


ProbeFn = Callable[[SpectralField, float, ProbeContext], dict[str, float]]

PROBES: dict[str, ProbeFn] = {
    "l2": lambda w, t, c: {"l2": l2_norm(w)},
    "h1": lambda w, t, c: {"h1": math.sqrt(inner(w, w) + gradient_norm_sq(w))},
    "inner_l": lambda w, t, c: {"inner_l": inner(apply_L(c.flow, w), w)},
    "x1_sq": lambda w, t, c: {"x1_sq": x1_form(c.flow, w)},
    "shear_l2": lambda w, t, c: {"shear_l2": l2_norm(project(w, P0))},
    "nonshear_l2": lambda w, t, c: {"nonshear_l2": l2_norm(project(w, PNEQ0))},
    "nonshear_x1free_l2": lambda w, t, c: {
        "nonshear_x1free_l2": l2_norm(complement(project(w, PNEQ0), P1))
    },
    "non_p2_l2": lambda w, t, c: {"non_p2_l2": l2_norm(complement(w, P2))},
    "components": lambda w, t, c: component_decomposition(w).norms(),
    "pn_x_sq": lambda w, t, c: {"pn_x_sq": _pn_x_sq(w, c)},
    "velocity_sq": lambda w, t, c: {"velocity_sq": _velocity_sq(w)},
    "velocity_sq_x1free": lambda w, t, c: {"velocity_sq_x1free": _velocity_sq(complement(w, P1))},
    "z_norm": lambda w, t, c: {"z_norm": z_norm(w, c.nu, t)},
    "dissipation": lambda w, t, c: {
        "diss_inner_l": inner(apply_L(c.flow, w), w),
        "diss_grad_sq": gradient_norm_sq(w),
        "diss_l2_sq": inner(w, w),
    },
    "coupled_energy": lambda w, t, c: _coupled_energy(w, c),
}


def validate_probes(names: Sequence[str]) -> list[str]:
    unknown = [name for name in names if name not in PROBES]
    if unknown:
        raise InvalidParameterError(
            f"Sondas desconocidas {unknown}; disponibles: {', '.join(PROBES)}"
        )
    return list(dict.fromkeys(names))


def sample_probes(
    names: Sequence[str], omega: SpectralField, t: float, context: ProbeContext
) -> dict[str, float]:
    """Evalúa las sondas pedidas en orden y aplana sus columnas."""

    values: dict[str, float] = {}
    for name in validate_probes(names):
        values.update({key: float(value) for key, value in PROBES[name](omega, t, context).items()})
    return values


# ── Postprocesos de series ────────────────────────────────────────────────


def dissipation_residual(
    series: TimeSeriesRecord | Sequence[tuple[float, SpectralField]],
    nu: float,
    *,
    flow: BaseFlow | None = None,
) -> ResidualSeries:
    """Residuo `r = d/dt⟨Lω,ω⟩ + 2ν(‖∇ω‖² − ‖ω‖²)` por diferencias centradas.

    Acepta un registro con la sonda `dissipation` o una lista de pares
    `(t, ω)` junto con el flujo base. El residuo relativo se normaliza con
    `ν‖ω‖²_{H¹}` (o `‖ω‖²_{H¹}` si ν = 0).
    """

    if isinstance(series, TimeSeriesRecord):
        times = series.time_array
        inner_l = series.column("diss_inner_l")
        grad_sq = series.column("diss_grad_sq")
        l2_sq = series.column("diss_l2_sq")
    else:
        if flow is None:
            raise InvalidParameterError("dissipation_residual con instantáneas necesita el flujo base")
        times = np.array([t for t, _ in series], dtype=float)
        inner_l = np.array([inner(apply_L(flow, w), w) for _, w in series])
        grad_sq = np.array([gradient_norm_sq(w) for _, w in series])
        l2_sq = np.array([inner(w, w) for _, w in series])

    if times.size < 3:
        raise InvalidParameterError("El residuo de disipación necesita al menos 3 instantáneas")
    derivative = np.gradient(inner_l, times, edge_order=2)
    raw = derivative + 2.0 * nu * (grad_sq - l2_sq)
    scale = (nu if nu > 0 else 1.0) * (l2_sq + grad_sq)
    relative = np.divide(raw, scale, out=np.zeros_like(raw), where=scale > 0)
    return ResidualSeries(times=times, raw=raw, relative=relative)


def time_average(times: np.ndarray, values: np.ndarray) -> np.ndarray:
    """`(1/T)∫₀^T f dt` acumulado por trapecios; en `T = t₀` vale `f(t₀)`."""

    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    integral = cumulative_trapezoid(values, times, initial=0.0)
    elapsed = times - times[0]
    averages = np.empty_like(values)
    averages[0] = values[0]
    averages[1:] = integral[1:] / elapsed[1:]
    return averages


def rage_average(series: TimeSeriesRecord, column: str = "pn_x_sq") -> np.ndarray:
    """Promedio `A(T) = (1/T)∫₀^T ‖P_Nω(t)‖²_X dt` sobre las muestras."""

    if column not in series.columns:
        raise InvalidParameterError(f"El registro no contiene la columna {column!r} (sonda pn_x_sq)")
    return time_average(series.time_array, series.column(column))


def velocity_damping_average(series: TimeSeriesRecord, column: str = "velocity_sq") -> np.ndarray:
    """Promedio temporal de `‖u(t)‖²_{L²}`."""

    if column not in series.columns:
        raise InvalidParameterError(f"El registro no contiene la columna {column!r}")
    return time_average(series.time_array, series.column(column))


def value_at(series: TimeSeriesRecord, values: np.ndarray, t: float) -> float:
    return float(np.interp(t, series.time_array, values))


def enhanced_damping_metric(
    series: TimeSeriesRecord,
    *,
    nu: float,
    tau: float,
    square: bool,
    metadata: dict | None = None,
) -> DampingReport:
    """Cociente de amortiguamiento a tiempo `τ/ν`.

    Toro rectangular: `‖P_{≠0}ω(τ/ν)‖/‖P_{≠0}ω(0)‖`. Toro cuadrado: ínfimo
    sobre `[0, τ/ν]` de `‖(1−P₁)P_{≠0}ω(t)‖/‖P_{≠0}ω(0)‖`. Si el dato inicial
    es de cizalla pura se usa la norma completa y se marca `shear_only`.
    """

    if not nu > 0 or not tau > 0:
        raise InvalidParameterError(f"Se necesitan ν > 0 y τ > 0 (ν={nu}, τ={tau})")
    times = series.time_array
    t_target = times[0] + tau / nu
    if times[-1] < t_target * (1.0 - 1e-9):
        raise InvalidParameterError(
            f"La ejecución termina en t={times[-1]:.6g}, antes de τ/ν={tau / nu:.6g}"
        )

    full = series.column("l2")
    nonshear = series.column("nonshear_l2")
    shear_only = nonshear[0] <= SHEAR_ONLY_TOL * max(full[0], 1e-300)
    infimum_time = None
    if shear_only:
        initial = float(full[0])
        final = value_at(series, full, t_target)
        metric = "shear_only"
    elif square:
        initial = float(nonshear[0])
        window = times <= t_target * (1.0 + 1e-12)
        reduced = series.column("nonshear_x1free_l2")[window]
        index = int(np.argmin(reduced))
        final = float(reduced[index])
        infimum_time = float(times[window][index])
        metric = "square_x1free_infimum"
    else:
        initial = float(nonshear[0])
        final = value_at(series, nonshear, t_target)
        metric = "rectangular"

    ratio = final / initial if initial > 0 else float("nan")
    return DampingReport(
        nu=nu,
        tau=tau,
        t_final=float(t_target),
        ratio=float(ratio),
        metric=metric,
        initial_norm=initial,
        final_norm=float(final),
        shear_only=bool(shear_only),
        infimum_time=infimum_time,
        metadata=dict(metadata or {}),
    )


def liapunov_ratio(series: TimeSeriesRecord) -> float:
    """`max_t ‖ω(t)‖ / ‖(I−P₂)ω(0)‖`."""

    reference = series.column("non_p2_l2")[0]
    if reference <= 0:
        raise InvalidParameterError("‖(I−P₂)ω(0)‖ = 0: el cociente no está definido")
    return float(np.max(series.column("l2")) / reference)


def z_norm_decay_rate(series: TimeSeriesRecord, *, t_min: float = FIT_TRANSIENT_WINDOW) -> tuple[float, float]:
    """Exponente `M√ν` ajustado a `Z(t) ≈ K e^{−rate·t}` y su R²."""

    rate, r2 = fit_exponential_rate(series.time_array, series.column("z_norm"), t_min=t_min)
    return -rate, r2
