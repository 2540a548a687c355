"""Operadores hamiltonianos J y L de cada flujo base y sus normas de energía."""

from __future__ import annotations

import numpy as np

from kolmo.app.errors import InvalidParameterError
from kolmo.app.flows import BaseFlow, FlowKind, grid_tables
from kolmo.app.models import NormBundle
from kolmo.app.spectral import (
    SpectralField,
    gradient_norm_sq,
    inner,
    inverse_neg_laplacian,
    multiply_profile,
    partial_x,
    partial_y,
    validate_field,
    zero_mean,
)


def _check_flow_grid(flow: BaseFlow, omega: SpectralField) -> None:
    if flow.kind is FlowKind.dipole and not np.isclose(omega.grid.alpha, 1.0):
        raise InvalidParameterError("El dipolo requiere el toro cuadrado (α = 1)")


def _multiply_unaliased(values: np.ndarray, field: SpectralField) -> SpectralField:
    return SpectralField.from_physical(field.grid, np.broadcast_to(values, field.grid.shape) * field.to_physical())


def apply_L(flow: BaseFlow, omega: SpectralField) -> SpectralField:
    """`Lω` según la variante del flujo.

    Barra y dipolo: `ω − ψ`. Clase K⁺: `ω/K₂ − ψ`. Clase 1: `ω/K₁ + ψ`.
    """

    validate_field(omega, mean_zero=True)
    _check_flow_grid(flow, omega)
    psi = inverse_neg_laplacian(omega)
    match flow.kind:
        case FlowKind.kolmogorov_bar | FlowKind.dipole:
            return omega.with_coeffs(omega.coeffs - psi.coeffs)
        case FlowKind.shear_k_plus:
            weighted = _multiply_unaliased(grid_tables(flow, omega.grid)["inv_kernel"], omega)
            return omega.with_coeffs(weighted.coeffs - psi.coeffs)
        case FlowKind.shear_no_inflection:
            weighted = _multiply_unaliased(grid_tables(flow, omega.grid)["inv_kernel"], omega)
            return omega.with_coeffs(weighted.coeffs + psi.coeffs)
    raise AssertionError(flow.kind)


def apply_J(flow: BaseFlow, omega: SpectralField) -> SpectralField:
    """`Jω` pseudoespectral con desaliasado; el resultado tiene media nula."""

    validate_field(omega, mean_zero=True)
    _check_flow_grid(flow, omega)
    grid = omega.grid
    match flow.kind:
        case FlowKind.kolmogorov_bar:
            sin_y = np.sin(grid.tables.y)
            out = multiply_profile(-sin_y, partial_x(omega))
        case FlowKind.dipole:
            sin_y = np.sin(grid.tables.y)
            sin_x = np.sin(grid.tables.x)
            out = multiply_profile(sin_y, partial_x(omega)) - multiply_profile(sin_x, partial_y(omega))
        case FlowKind.shear_k_plus:
            out = multiply_profile(grid_tables(flow, grid)["d2u"], partial_x(omega))
        case FlowKind.shear_no_inflection:
            out = multiply_profile(-grid_tables(flow, grid)["d2u"], partial_x(omega))
    return zero_mean(out.with_coeffs(out.coeffs, omega.kind))


def x1_form(flow: BaseFlow, omega: SpectralField) -> float:
    """Forma `⟨(−Δ)Lω, ω⟩`: `−Δ − 1` en la barra, `−Δ − K₂` en K⁺, `−Δ + K₁` en clase 1."""

    grad_sq = gradient_norm_sq(omega)
    match flow.kind:
        case FlowKind.kolmogorov_bar | FlowKind.dipole:
            return grad_sq - inner(omega, omega)
        case FlowKind.shear_k_plus | FlowKind.shear_no_inflection:
            kernel = grid_tables(flow, omega.grid)["kernel"]
            weighted = omega.grid.area * float(np.mean(kernel * omega.to_physical() ** 2))
            return grad_sq - weighted if flow.kind is FlowKind.shear_k_plus else grad_sq + weighted
    raise AssertionError(flow.kind)


def norms(flow: BaseFlow, omega: SpectralField) -> NormBundle:
    """Normas L², H¹, X, X¹ y la forma `⟨Lω, ω⟩`.

    Si alguna forma cuadrática resulta negativa no se oculta: la norma
    correspondiente vale NaN y `indefinite` queda activado.
    """

    l2_sq = inner(omega, omega)
    h1_sq = l2_sq + gradient_norm_sq(omega)
    inner_l = inner(apply_L(flow, omega), omega)
    x1_sq = x1_form(flow, omega)
    tol = 1e-13 * max(h1_sq, 1e-300)
    indefinite = inner_l < -tol or x1_sq < -tol
    return NormBundle(
        l2=float(np.sqrt(l2_sq)),
        h1=float(np.sqrt(h1_sq)),
        inner_l=float(inner_l),
        x=float(np.sqrt(max(inner_l, 0.0))) if inner_l >= -tol else float("nan"),
        x1=float(np.sqrt(max(x1_sq, 0.0))) if x1_sq >= -tol else float("nan"),
        indefinite=bool(indefinite),
    )
