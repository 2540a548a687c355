"""Datos iniciales: modos con nombre, ruido gaussiano con envolvente o instantánea."""

from __future__ import annotations

import numpy as np
from loguru import logger

from kolmo.app.config import InitialSection
from kolmo.app.dynamics import EvolutionModel
from kolmo.app.errors import GridError, InvalidParameterError
from kolmo.app.spectral import (
    P1,
    PNEQ0,
    FieldKind,
    ProjectionTag,
    SpectralField,
    TorusGrid,
    complement,
    dealias,
    l2_norm,
    mode_field,
    project,
    zero_mean,
)
from kolmo.app.stability import center_space_projector
from kolmo.app.storage import load_snapshot


def random_field(grid: TorusGrid, *, seed: int, k0: float, amplitude: float = 1.0) -> SpectralField:
    """Coeficientes gaussianos hermíticos con envolvente `exp(−(k²α²+m²)/k₀²)`.

    El campo se normaliza a `‖ω‖ = amplitude`.
    """

    rng = np.random.default_rng(seed)
    noise = SpectralField.from_physical(grid, rng.standard_normal(grid.shape))
    tables = grid.tables
    envelope = np.exp(-(tables.kx**2 + tables.ky**2) / k0**2)
    field = dealias(zero_mean(noise.with_coeffs(noise.coeffs * envelope)))
    norm = l2_norm(field)
    if norm == 0.0:
        raise InvalidParameterError("El ruido generado es nulo; revisa k0 y la malla")
    return field * (amplitude / norm)


def named_field(grid: TorusGrid, section: InitialSection) -> SpectralField:
    field = SpectralField.zeros(grid)
    for mode in section.modes:
        field = field + mode_field(grid, mode.k, mode.m, part=mode.part, amplitude=mode.amplitude)
    return field


def project_to_subspace(
    field: SpectralField,
    subspace: str,
    *,
    model: EvolutionModel | None = None,
    pn_n: int = 8,
) -> SpectralField:
    """Restringe el dato al subespacio pedido.

    `nonshear` = rango de P≠0, `x1` además sin P1, `pn` = rango de P_N,
    `pn_x1` = rango de P_N sobre X1 y `center` = E^c del operador
    linealizado del modelo.
    """

    match subspace:
        case "any":
            return field
        case "nonshear":
            return project(field, PNEQ0)
        case "x1":
            return complement(project(field, PNEQ0), P1)
        case "pn":
            return project(field, ProjectionTag.pn(pn_n))
        case "pn_x1":
            return project(field, ProjectionTag.pn(pn_n, on_x1=True))
        case "center":
            if model is None:
                raise InvalidParameterError("El subespacio 'center' necesita el modelo de evolución")
            return center_space_projector(model, field.grid)(project(field, PNEQ0))
    raise InvalidParameterError(f"Subespacio desconocido: {subspace!r}")


def build_initial(
    section: InitialSection,
    grid: TorusGrid,
    *,
    seed: int,
    default_k0: float,
    model: EvolutionModel | None = None,
) -> SpectralField:
    """Dato inicial completo según la sección `[initial]` del experimento."""

    match section.kind:
        case "named":
            field = named_field(grid, section)
        case "random":
            field = random_field(grid, seed=seed, k0=section.k0 or default_k0, amplitude=section.amplitude)
        case "snapshot":
            field = load_snapshot(section.path, dealias_fraction=grid.dealias_fraction)
            if field.grid != grid:
                raise GridError(
                    f"La instantánea {section.path} usa la malla {field.grid.to_dict()}, no {grid.to_dict()}"
                )
            if field.kind is FieldKind.stream:
                field = field.with_coeffs(grid.tables.lap * field.coeffs, FieldKind.vorticity)
    field = project_to_subspace(field, section.subspace, model=model, pn_n=section.pn_n)
    if section.target_norm is not None:
        norm = l2_norm(field)
        if norm == 0.0:
            raise InvalidParameterError("El dato proyectado es nulo; no se puede reescalar a target_norm")
        field = field * (section.target_norm / norm)
    logger.debug("Dato inicial {} en {} con ‖ω‖={:.4e}", section.kind, section.subspace, l2_norm(field))
    return field
