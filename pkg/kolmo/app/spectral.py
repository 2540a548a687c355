"""Representación de Fourier sobre el toro T_α y cálculo espectral.

Los coeficientes se guardan en un array complejo completo de forma
`(ny, nx)`: el eje 0 recorre el número de onda vertical `m` y el eje 1 el
índice horizontal `k` (número de onda `α·k`). La normalización es la de
`scipy.fft` con `norm="forward"`, de modo que el coeficiente `(0, 0)` es la
media del campo en el espacio físico.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy import fft as sfft

from kolmo.conf import HERMITIAN_TOL, INCOMPRESSIBILITY_TOL, MEAN_ZERO_TOL, MIN_GRID_POINTS
from kolmo.app.errors import FieldValidationError, GridError, ProjectionError


class FieldKind(str, Enum):
    vorticity = "vorticity"
    stream = "stream"
    generic = "generic"


class _GridTables(NamedTuple):
    k_index: np.ndarray
    m_index: np.ndarray
    kx: np.ndarray
    ky: np.ndarray
    kx_deriv: np.ndarray
    ky_deriv: np.ndarray
    lap: np.ndarray
    inv_lap: np.ndarray
    dealias: np.ndarray
    x: np.ndarray
    y: np.ndarray


@lru_cache(maxsize=32)
def _tables(alpha: float, nx: int, ny: int, dealias_fraction: float) -> _GridTables:
    k_index = np.rint(sfft.fftfreq(nx, d=1.0 / nx)).astype(int)[np.newaxis, :]
    m_index = np.rint(sfft.fftfreq(ny, d=1.0 / ny)).astype(int)[:, np.newaxis]
    kx = alpha * k_index.astype(float)
    ky = m_index.astype(float)

    # La columna/fila de Nyquist no tiene pareja hermítica para derivadas impares.
    kx_deriv = np.where(k_index == -nx // 2, 0.0, kx)
    ky_deriv = np.where(m_index == -ny // 2, 0.0, ky)

    lap = kx**2 + ky**2
    inv_lap = np.zeros_like(lap)
    nonzero = lap > 0
    inv_lap[nonzero] = 1.0 / lap[nonzero]

    k_cut = dealias_fraction * (nx // 2)
    m_cut = dealias_fraction * (ny // 2)
    dealias = (np.abs(k_index) <= k_cut) & (np.abs(m_index) <= m_cut)
    dealias = dealias & (k_index != -nx // 2) & (m_index != -ny // 2)

    x = (2.0 * np.pi / alpha) * np.arange(nx)[np.newaxis, :] / nx
    y = 2.0 * np.pi * np.arange(ny)[:, np.newaxis] / ny

    tables = _GridTables(
        k_index=k_index,
        m_index=m_index,
        kx=kx,
        ky=ky,
        kx_deriv=kx_deriv,
        ky_deriv=ky_deriv,
        lap=lap,
        inv_lap=inv_lap,
        dealias=dealias,
        x=x,
        y=y,
    )
    for array in tables:
        array.setflags(write=False)
    return tables


@dataclass(frozen=True, slots=True)
class TorusGrid:
    """Malla de colocación sobre T_α = (0, 2π/α) × (0, 2π)."""

    alpha: float
    nx: int
    ny: int
    dealias_fraction: float = 2.0 / 3.0

    @property
    def tables(self) -> _GridTables:
        return _tables(float(self.alpha), self.nx, self.ny, float(self.dealias_fraction))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def lx(self) -> float:
        return 2.0 * np.pi / self.alpha

    @property
    def ly(self) -> float:
        return 2.0 * np.pi

    @property
    def area(self) -> float:
        return self.lx * self.ly

    @property
    def dx(self) -> float:
        return self.lx / self.nx

    @property
    def dy(self) -> float:
        return self.ly / self.ny

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Coordenadas físicas `(X, Y)` con forma `(ny, nx)`."""

        x, y = self.tables.x, self.tables.y
        return np.broadcast_to(x, self.shape), np.broadcast_to(y, self.shape)

    def mode_slot(self, k: int, m: int) -> tuple[int, int]:
        """Posición `(fila, columna)` del modo `(k, m)` en el array de coeficientes."""

        if not (-self.nx // 2 <= k < self.nx // 2 and -self.ny // 2 <= m < self.ny // 2):
            raise GridError(f"El modo (k={k}, m={m}) no está representado en la malla")
        return (m % self.ny, k % self.nx)

    def to_dict(self) -> dict[str, float | int]:
        return {"alpha": self.alpha, "nx": self.nx, "ny": self.ny}


def make_grid(alpha: float, nx: int, ny: int, *, dealias_fraction: float = 2.0 / 3.0) -> TorusGrid:
    """Construye la malla validando periodo y resoluciones."""

    if not np.isfinite(alpha) or alpha <= 0:
        raise GridError(f"alpha debe ser positivo (recibido {alpha})")
    for name, value in (("nx", nx), ("ny", ny)):
        if int(value) != value or value < MIN_GRID_POINTS or value % 2:
            raise GridError(
                f"{name} debe ser un entero par ≥ {MIN_GRID_POINTS} (recibido {value})"
            )
    if not 0 < dealias_fraction <= 1:
        raise GridError(f"dealias_fraction fuera de (0, 1]: {dealias_fraction}")
    return TorusGrid(alpha=float(alpha), nx=int(nx), ny=int(ny), dealias_fraction=dealias_fraction)


def _mirror(coeffs: np.ndarray) -> np.ndarray:
    """Devuelve `c(−k, −m)` alineado con `c(k, m)`."""

    return np.roll(np.flip(coeffs, axis=(0, 1)), shift=(1, 1), axis=(0, 1))


@dataclass(frozen=True, slots=True)
class SpectralField:
    """Coeficientes de Fourier de un campo escalar real."""

    grid: TorusGrid
    coeffs: np.ndarray
    kind: FieldKind = FieldKind.vorticity

    def __post_init__(self) -> None:
        coeffs = np.array(self.coeffs, dtype=np.complex128, copy=True)
        if coeffs.shape != self.grid.shape:
            raise FieldValidationError(
                f"Coeficientes con forma {coeffs.shape}; la malla espera {self.grid.shape}"
            )
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)

    @classmethod
    def from_physical(
        cls, grid: TorusGrid, values: np.ndarray, kind: FieldKind = FieldKind.vorticity
    ) -> "SpectralField":
        values = np.asarray(values, dtype=float)
        if values.shape != grid.shape:
            raise FieldValidationError(
                f"Valores físicos con forma {values.shape}; la malla espera {grid.shape}"
            )
        return cls(grid, sfft.fft2(values, norm="forward"), kind)

    @classmethod
    def zeros(cls, grid: TorusGrid, kind: FieldKind = FieldKind.vorticity) -> "SpectralField":
        return cls(grid, np.zeros(grid.shape, dtype=np.complex128), kind)

    def to_physical(self) -> np.ndarray:
        return sfft.ifft2(self.coeffs, norm="forward").real

    def with_coeffs(self, coeffs: np.ndarray, kind: FieldKind | None = None) -> "SpectralField":
        return SpectralField(self.grid, coeffs, self.kind if kind is None else kind)

    @property
    def mean(self) -> complex:
        return complex(self.coeffs[0, 0])

    def hermitian_defect(self) -> float:
        scale = max(float(np.max(np.abs(self.coeffs))), 1e-300)
        return float(np.max(np.abs(_mirror(self.coeffs) - np.conj(self.coeffs)))) / scale

    def is_hermitian(self, tol: float = HERMITIAN_TOL) -> bool:
        return self.hermitian_defect() <= tol

    def __add__(self, other: "SpectralField") -> "SpectralField":
        _check_same_grid(self, other)
        return self.with_coeffs(self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        _check_same_grid(self, other)
        return self.with_coeffs(self.coeffs - other.coeffs)

    def __mul__(self, scalar: float) -> "SpectralField":
        return self.with_coeffs(self.coeffs * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "SpectralField":
        return self.with_coeffs(-self.coeffs)


@dataclass(frozen=True, slots=True)
class VelocityField:
    """Velocidad `U = ∇⊥ψ = (ψ_y, −ψ_x)`."""

    u: SpectralField
    v: SpectralField

    def divergence_defect(self) -> float:
        tables = self.u.grid.tables
        div = 1j * tables.kx * self.u.coeffs + 1j * tables.ky * self.v.coeffs
        scale = max(
            float(np.max(np.abs(tables.kx * self.u.coeffs))),
            float(np.max(np.abs(tables.ky * self.v.coeffs))),
            1e-300,
        )
        return float(np.max(np.abs(div))) / scale

    def is_incompressible(self, tol: float = INCOMPRESSIBILITY_TOL) -> bool:
        return self.divergence_defect() <= tol

    def kinetic_energy(self) -> float:
        """`‖u‖²_{L²}` sobre el toro."""

        return inner(self.u, self.u) + inner(self.v, self.v)


def _check_same_grid(a: SpectralField, b: SpectralField) -> None:
    if a.grid != b.grid:
        raise FieldValidationError("Los campos viven en mallas distintas")


def validate_field(field: SpectralField, *, mean_zero: bool = True) -> SpectralField:
    """Comprueba simetría hermítica y, si procede, media nula."""

    if not field.is_hermitian():
        raise FieldValidationError(
            f"El campo no es real: defecto hermítico {field.hermitian_defect():.3e}"
        )
    if mean_zero:
        scale = max(float(np.max(np.abs(field.coeffs))), 1e-300)
        if abs(field.mean) > MEAN_ZERO_TOL * scale:
            raise FieldValidationError(
                f"Se esperaba un campo de media nula (media relativa {abs(field.mean) / scale:.3e})"
            )
    return field


def zero_mean(field: SpectralField) -> SpectralField:
    coeffs = field.coeffs.copy()
    coeffs[0, 0] = 0.0
    return field.with_coeffs(coeffs)


def dealias(field: SpectralField) -> SpectralField:
    """Trunca con la regla de 2/3 (o la fracción configurada en la malla)."""

    return field.with_coeffs(np.where(field.grid.tables.dealias, field.coeffs, 0.0))


def laplacian(field: SpectralField) -> SpectralField:
    return field.with_coeffs(-field.grid.tables.lap * field.coeffs)


def inverse_neg_laplacian(field: SpectralField) -> SpectralField:
    """`(−Δ)^{−1}` sobre campos de media nula, sin validación."""

    return field.with_coeffs(field.grid.tables.inv_lap * field.coeffs, FieldKind.stream)


def poisson_solve(omega: SpectralField) -> SpectralField:
    """Resuelve `ω = −Δψ` con `ψ̂(0,0) = 0`."""

    validate_field(omega, mean_zero=True)
    return inverse_neg_laplacian(omega)


def partial_x(field: SpectralField) -> SpectralField:
    return field.with_coeffs(1j * field.grid.tables.kx_deriv * field.coeffs, FieldKind.generic)


def partial_y(field: SpectralField) -> SpectralField:
    return field.with_coeffs(1j * field.grid.tables.ky_deriv * field.coeffs, FieldKind.generic)


def _velocity_from_stream(psi: SpectralField) -> VelocityField:
    return VelocityField(u=partial_y(psi), v=-partial_x(psi))


def velocity_from_vorticity(omega: SpectralField) -> VelocityField:
    """`u = ∂_yψ`, `v = −∂_xψ` con `ψ = (−Δ)^{−1}ω`."""

    return _velocity_from_stream(poisson_solve(omega))


def product(a: SpectralField, b: SpectralField) -> SpectralField:
    """Producto puntual pseudoespectral desaliasado."""

    _check_same_grid(a, b)
    grid = a.grid
    phys = sfft.ifft2(np.where(grid.tables.dealias, a.coeffs, 0.0), norm="forward").real
    phys = phys * sfft.ifft2(np.where(grid.tables.dealias, b.coeffs, 0.0), norm="forward").real
    return SpectralField(grid, np.where(grid.tables.dealias, sfft.fft2(phys, norm="forward"), 0.0), FieldKind.generic)


def multiply_profile(values: np.ndarray, field: SpectralField) -> SpectralField:
    """Multiplica por una función física dada en la malla (p. ej. `sin y`) y desaliasa."""

    grid = field.grid
    phys = np.broadcast_to(values, grid.shape) * sfft.ifft2(
        np.where(grid.tables.dealias, field.coeffs, 0.0), norm="forward"
    ).real
    return SpectralField(grid, np.where(grid.tables.dealias, sfft.fft2(phys, norm="forward"), 0.0), FieldKind.generic)


def inner(a: SpectralField, b: SpectralField) -> float:
    """Producto interno `∫_{T_α} a b dx dy` como suma de modos (Parseval)."""

    _check_same_grid(a, b)
    return a.grid.area * float(np.real(np.vdot(a.coeffs, b.coeffs)))


def l2_norm(field: SpectralField) -> float:
    return float(np.sqrt(max(inner(field, field), 0.0)))


def l2_norm_physical(field: SpectralField) -> float:
    """Misma norma calculada por cuadratura en el espacio físico."""

    values = field.to_physical()
    return float(np.sqrt(field.grid.area * np.mean(values**2)))


def gradient_norm_sq(field: SpectralField) -> float:
    """`‖∇f‖²_{L²}`."""

    return field.grid.area * float(np.sum(field.grid.tables.lap * np.abs(field.coeffs) ** 2))


def mode_field(grid: TorusGrid, k: int, m: int, *, part: str = "cos", amplitude: float = 1.0) -> SpectralField:
    """Campo real `amplitude·cos(kαx + my)` o `amplitude·sin(kαx + my)`."""

    coeffs = np.zeros(grid.shape, dtype=np.complex128)
    slot = grid.mode_slot(k, m)
    mirror = grid.mode_slot(-k, -m) if (k, m) != (0, 0) else slot
    if part == "cos":
        coeffs[slot] += 0.5 * amplitude
        coeffs[mirror] += 0.5 * amplitude
    elif part == "sin":
        if (k, m) == (0, 0):
            return SpectralField(grid, coeffs)
        coeffs[slot] += -0.5j * amplitude
        coeffs[mirror] += 0.5j * amplitude
    else:
        raise FieldValidationError(f"part debe ser 'cos' o 'sin' (recibido {part!r})")
    return SpectralField(grid, coeffs)


# ── Proyecciones ──────────────────────────────────────────────────────────


class ProjectionKind(str, Enum):
    P0 = "P0"
    PNEQ0 = "Pneq0"
    P1 = "P1"
    P2 = "P2"
    P3 = "P3"
    PN = "PN"


@dataclass(frozen=True, slots=True)
class ProjectionTag:
    """Proyección ortogonal en L². `n` solo aplica a `PN`; `on_x1` excluye los modos anómalos."""

    kind: ProjectionKind
    n: int | None = None
    on_x1: bool = False

    @classmethod
    def pn(cls, n: int, *, on_x1: bool = False) -> "ProjectionTag":
        return cls(ProjectionKind.PN, n=n, on_x1=on_x1)

    def label(self) -> str:
        if self.kind is ProjectionKind.PN:
            return f"PN({self.n}{', X1' if self.on_x1 else ''})"
        return self.kind.value


P0 = ProjectionTag(ProjectionKind.P0)
PNEQ0 = ProjectionTag(ProjectionKind.PNEQ0)
P1 = ProjectionTag(ProjectionKind.P1)
P2 = ProjectionTag(ProjectionKind.P2)
P3 = ProjectionTag(ProjectionKind.P3)


def _mask_for_modes(grid: TorusGrid, modes: list[tuple[int, int]]) -> np.ndarray:
    mask = np.zeros(grid.shape, dtype=bool)
    for k, m in modes:
        if -grid.nx // 2 <= k < grid.nx // 2 and -grid.ny // 2 <= m < grid.ny // 2:
            mask[grid.mode_slot(k, m)] = True
    return mask


@lru_cache(maxsize=64)
def pn_basis(grid: TorusGrid, on_x1: bool = False) -> tuple[tuple[int, int, str], ...]:
    """Autofunciones reales de −Δ en X ordenadas por autovalor.

    Cada representante `(k, m)` con `k > 0` aporta `cos(kαx+my)` y
    `sin(kαx+my)`. Orden: `(λ, |k|, |m|, signo m, cos antes que sin)`.
    """

    k_cut = int(np.floor(grid.dealias_fraction * (grid.nx // 2)))
    m_cut = int(np.floor(grid.dealias_fraction * (grid.ny // 2)))
    entries = []
    for k in range(1, min(k_cut, grid.nx // 2 - 1) + 1):
        for m in range(-min(m_cut, grid.ny // 2 - 1), min(m_cut, grid.ny // 2 - 1) + 1):
            if on_x1 and k == 1 and m == 0:
                continue
            lam = (grid.alpha * k) ** 2 + m**2
            for order, part in enumerate(("cos", "sin")):
                entries.append(((lam, k, abs(m), int(np.sign(m)), order), (k, m, part)))
    entries.sort(key=lambda item: item[0])
    return tuple(entry for _, entry in entries)


def _project_pn(omega: SpectralField, n: int, on_x1: bool) -> SpectralField:
    basis = pn_basis(omega.grid, on_x1)
    if n < 1 or n > len(basis):
        raise ProjectionError(
            f"PN necesita 1 ≤ N ≤ {len(basis)} modos retenidos (recibido N={n})"
        )
    grid = omega.grid
    out = np.zeros(grid.shape, dtype=np.complex128)
    for k, m, part in basis[:n]:
        slot = grid.mode_slot(k, m)
        mirror = grid.mode_slot(-k, -m)
        c = omega.coeffs[slot]
        if part == "cos":
            out[slot] += c.real
            out[mirror] += c.real
        else:
            out[slot] += 1j * c.imag
            out[mirror] += -1j * c.imag
    return omega.with_coeffs(out)


def project(omega: SpectralField, tag: ProjectionTag) -> SpectralField:
    """Proyección ortogonal en L² identificada por `tag`."""

    grid = omega.grid
    k_index = grid.tables.k_index
    match tag.kind:
        case ProjectionKind.P0:
            mask = np.broadcast_to(k_index == 0, grid.shape)
        case ProjectionKind.PNEQ0:
            mask = np.broadcast_to(k_index != 0, grid.shape)
        case ProjectionKind.P1:
            mask = _mask_for_modes(grid, [(1, 0), (-1, 0)])
        case ProjectionKind.P2:
            mask = _mask_for_modes(grid, [(0, 1), (0, -1)])
        case ProjectionKind.P3:
            mask = _mask_for_modes(grid, [(1, 0), (-1, 0), (0, 1), (0, -1)])
        case ProjectionKind.PN:
            if tag.n is None:
                raise ProjectionError("PN requiere un número de modos N")
            return _project_pn(omega, tag.n, tag.on_x1)
    return omega.with_coeffs(np.where(mask, omega.coeffs, 0.0))


def complement(omega: SpectralField, tag: ProjectionTag) -> SpectralField:
    """`(I − P)ω`."""

    return omega - project(omega, tag)
