"""Integración temporal de las ecuaciones de evolución sobre el toro.

El término viscoso `νΔ` se integra exactamente con un factor integrante y
la advección con Runge-Kutta de cuarto orden evaluado en los tiempos de
cada etapa.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache

import numpy as np
from loguru import logger

from kolmo.app.diagnostics import ProbeContext, sample_probes
from kolmo.app.errors import CFLViolationError, InvalidParameterError, NumericalAbortError
from kolmo.app.flows import BaseFlow, dipole_flow, grid_tables, kolmogorov_flow
from kolmo.app.models import TimeSeriesRecord
from kolmo.app.spectral import (
    P1,
    SpectralField,
    TorusGrid,
    complement,
    dealias,
    inverse_neg_laplacian,
    multiply_profile,
    partial_x,
    partial_y,
    product,
    validate_field,
    zero_mean,
)

FieldMap = Callable[[SpectralField], SpectralField]


class ModelTag(str, Enum):
    nse = "NSE"
    lns_bar = "LNSBar"
    lns_approx = "LNSApprox"
    lin_euler_bar = "LinEulerBar"
    lin_euler_projected = "LinEulerProjected"
    lns_dipole = "LNSDipole"
    lin_euler_shear = "LinEulerShear"


INVISCID_TAGS = frozenset({ModelTag.lin_euler_bar, ModelTag.lin_euler_projected, ModelTag.lin_euler_shear})
# Modelos lineales con flujo base independiente de x: cada modo horizontal evoluciona por separado.
LINEAR_SHEAR_TAGS = frozenset(
    {
        ModelTag.lns_bar,
        ModelTag.lns_approx,
        ModelTag.lin_euler_bar,
        ModelTag.lin_euler_projected,
        ModelTag.lin_euler_shear,
    }
)


@dataclass(frozen=True, slots=True, eq=False)
class EvolutionModel:
    """Ecuación que aplica cada paso: etiqueta, viscosidad y factor `e^{−νt}`."""

    tag: ModelTag
    nu: float = 0.0
    time_dependent_factor: bool = True
    flow: BaseFlow | None = None

    def __post_init__(self) -> None:
        if not math.isfinite(self.nu) or self.nu < 0:
            raise InvalidParameterError(f"nu debe ser ≥ 0 (recibido {self.nu})")
        if self.tag in INVISCID_TAGS and self.nu != 0.0:
            raise InvalidParameterError(f"{self.tag.value} es un modelo no viscoso; usa nu = 0")
        if self.tag is ModelTag.lin_euler_shear:
            if self.flow is None or not self.flow.is_shear:
                raise InvalidParameterError("LinEulerShear necesita un flujo de cizalla")
            if not self.flow.domain.periodic:
                raise InvalidParameterError("LinEulerShear solo se integra sobre el toro")

    def amplitude(self, t: float) -> float:
        """Amplitud del flujo base a tiempo t."""

        if self.tag in INVISCID_TAGS or not self.time_dependent_factor:
            return 1.0
        return math.exp(-self.nu * t)

    def base_flow(self, alpha: float) -> BaseFlow:
        if self.tag is ModelTag.lin_euler_shear:
            assert self.flow is not None
            return self.flow
        if self.tag is ModelTag.lns_dipole:
            return dipole_flow(alpha)
        return kolmogorov_flow(alpha)

    def describe(self) -> dict[str, object]:
        return {
            "tag": self.tag.value,
            "nu": self.nu,
            "time_dependent_factor": self.time_dependent_factor,
            "flow": self.flow.describe() if self.flow is not None else None,
        }


@dataclass(frozen=True, slots=True)
class SimState:
    omega: SpectralField
    time: float
    model: EvolutionModel = field(compare=False)


def _bar_operator(omega: SpectralField) -> SpectralField:
    """`sin y ∂ₓ(ω − ψ)` desaliasado."""

    psi = inverse_neg_laplacian(omega)
    sin_y = np.sin(omega.grid.tables.y)
    return multiply_profile(sin_y, partial_x(omega - psi))


def advection(model: EvolutionModel, omega: SpectralField, t: float) -> SpectralField:
    """Parte no viscosa del lado derecho."""

    a = model.amplitude(t)
    grid = omega.grid
    match model.tag:
        case ModelTag.nse:
            psi = inverse_neg_laplacian(omega)
            u, v = partial_y(psi), -partial_x(psi)
            transport = product(u, partial_x(omega)) + product(v, partial_y(omega))
            out = -a * _bar_operator(omega) - transport
        case ModelTag.lns_bar | ModelTag.lin_euler_bar:
            out = -a * _bar_operator(omega)
        case ModelTag.lns_approx:
            out = multiply_profile(-a * np.sin(grid.tables.y), partial_x(omega))
        case ModelTag.lin_euler_projected:
            out = -complement(_bar_operator(omega), P1)
        case ModelTag.lns_dipole:
            w = omega - inverse_neg_laplacian(omega)
            out = multiply_profile(a * np.sin(grid.tables.y), partial_x(w)) - multiply_profile(
                a * np.sin(grid.tables.x), partial_y(w)
            )
        case ModelTag.lin_euler_shear:
            tables = grid_tables(model.flow, grid)
            psi = inverse_neg_laplacian(omega)
            out = -(
                multiply_profile(tables["u"] - model.flow.u_s, partial_x(omega))
                + multiply_profile(tables["d2u"], partial_x(psi))
            )
    return zero_mean(out.with_coeffs(out.coeffs, omega.kind))


def rhs(state: SimState) -> SpectralField:
    """Derivada temporal completa `νΔω + N(ω, t)`."""

    omega = validate_field(state.omega, mean_zero=True)
    nonlinear = advection(state.model, omega, state.time)
    viscous = -state.model.nu * omega.grid.tables.lap * omega.coeffs
    return omega.with_coeffs(nonlinear.coeffs + viscous)


def max_velocity(model: EvolutionModel, omega: SpectralField, t: float) -> tuple[float, float]:
    """Cotas `(max|u|, max|v|)` de la velocidad que transporta ω.

    Los modelos lineales en torno a un flujo de cizalla solo advectan en x.
    """

    match model.tag:
        case ModelTag.nse:
            psi = inverse_neg_laplacian(omega)
            u = float(np.max(np.abs(partial_y(psi).to_physical())))
            v = float(np.max(np.abs(partial_x(psi).to_physical())))
            return model.amplitude(t) + u, v
        case ModelTag.lns_dipole:
            return 1.0, 1.0
        case ModelTag.lin_euler_shear:
            u = grid_tables(model.flow, omega.grid)["u"]
            return float(np.max(np.abs(u - model.flow.u_s))), 0.0
    return 1.0, 0.0


def cfl_limit(model: EvolutionModel, omega: SpectralField, t: float, *, safety: float = 0.4) -> float:
    u, v = max_velocity(model, omega, t)
    grid = omega.grid
    rate = u / grid.dx + v / grid.dy
    if rate <= 0.0:
        return math.inf
    return safety / rate


@lru_cache(maxsize=16)
def _integrating_factor(grid: TorusGrid, nu: float, dt: float) -> np.ndarray:
    factor = np.exp(-nu * grid.tables.lap * dt / 2.0)
    factor.setflags(write=False)
    return factor


def step(state: SimState, dt: float, *, cfl_safety: float = 0.4) -> SimState:
    """Un paso de RK4 con factor integrante para `νΔ`."""

    if not dt > 0:
        raise InvalidParameterError(f"dt debe ser positivo (recibido {dt})")
    omega, t, model = state.omega, state.time, state.model
    limit = cfl_limit(model, omega, t, safety=cfl_safety)
    if dt > limit:
        raise CFLViolationError(
            f"dt={dt:.4g} supera la cota CFL {limit:.4g} para {model.tag.value} en t={t:.4g}"
        )

    e = _integrating_factor(omega.grid, model.nu, dt)
    e2 = e * e
    c = omega.coeffs
    k1 = advection(model, omega, t).coeffs
    k2 = advection(model, omega.with_coeffs(e * (c + 0.5 * dt * k1)), t + 0.5 * dt).coeffs
    k3 = advection(model, omega.with_coeffs(e * c + 0.5 * dt * k2), t + 0.5 * dt).coeffs
    k4 = advection(model, omega.with_coeffs(e2 * c + dt * e * k3), t + dt).coeffs
    new = e2 * c + dt / 6.0 * (e2 * k1 + 2.0 * e * (k2 + k3) + k4)
    new[0, 0] = 0.0
    if not np.all(np.isfinite(new)):
        raise NumericalAbortError(f"Valores no finitos en t={t + dt:.6g}", time=t + dt)
    return SimState(omega.with_coeffs(new), t + dt, model)


def evolve(
    state: SimState,
    t_end: float,
    sample_every: float,
    probes: Sequence[str],
    *,
    dt: float,
    context: ProbeContext | None = None,
    projector: FieldMap | None = None,
    cfl_safety: float = 0.4,
    on_sample: Callable[[SimState], None] | None = None,
) -> TimeSeriesRecord:
    """Integra hasta `t_end` muestreando `probes` cada `sample_every`.

    El paso efectivo se ajusta a la baja para caer exactamente en `t_end`.
    Si aparece un NaN se lanza `NumericalAbortError` con el registro parcial.
    """

    if not t_end > state.time:
        raise InvalidParameterError(f"t_end={t_end} debe ser mayor que t={state.time}")
    if not sample_every > 0:
        raise InvalidParameterError(f"sample_every debe ser positivo (recibido {sample_every})")

    n_steps = max(1, math.ceil((t_end - state.time) / dt - 1e-9))
    dt_eff = (t_end - state.time) / n_steps
    stride = max(1, round(sample_every / dt_eff))
    grid = state.omega.grid
    context = context or ProbeContext.for_model(state.model, grid)

    if projector is not None:
        state = SimState(projector(state.omega), state.time, state.model)
    state = SimState(dealias(state.omega), state.time, state.model)

    record = TimeSeriesRecord()
    initial = sample_probes(probes, state.omega, state.time, context)
    if not all(math.isfinite(value) for value in initial.values()):
        record.aborted = True
        record.abort_time = state.time
        record.final_state = state
        raise NumericalAbortError(
            f"Dato inicial no finito en t={state.time:.6g}", time=state.time, record=record
        )
    record.append(state.time, initial)
    if on_sample is not None:
        on_sample(state)
    logger.info(
        "Integrando {} de t={:.4g} a t={:.4g} ({} pasos, dt={:.4g})",
        state.model.tag.value,
        state.time,
        t_end,
        n_steps,
        dt_eff,
    )

    t0 = state.time
    for index in range(1, n_steps + 1):
        try:
            state = step(state, dt_eff, cfl_safety=cfl_safety)
        except NumericalAbortError as exc:
            record.aborted = True
            record.abort_time = exc.time
            record.final_state = state
            logger.warning("Ejecución abortada en t={:.6g}", exc.time)
            raise NumericalAbortError(str(exc), time=exc.time, record=record) from exc
        # Tiempo recalculado desde t0 para no acumular redondeo.
        state = SimState(state.omega, t0 + index * dt_eff, state.model)
        if projector is not None:
            state = SimState(projector(state.omega), state.time, state.model)
        if index % stride == 0 or index == n_steps:
            values = sample_probes(probes, state.omega, state.time, context)
            if not all(math.isfinite(value) for value in values.values()):
                record.aborted = True
                record.abort_time = state.time
                record.final_state = state
                raise NumericalAbortError(
                    f"Diagnóstico no finito en t={state.time:.6g}", time=state.time, record=record
                )
            record.append(state.time, values)
            if on_sample is not None:
                on_sample(state)
            logger.debug("t={:.4g} {}", state.time, values)

    record.final_state = state
    return record
