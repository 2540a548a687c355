"""Método de disparo para la ecuación de Rayleigh.

Comprobación independiente de los modos inestables de `J_l L_l`: con
`k = αl` se busca `c` tal que `(U − c)(φ'' − k²φ) − U''φ = 0` tenga
solución con las condiciones del dominio. La tasa de crecimiento es
`k·Im c`.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from loguru import logger
from scipy.integrate import solve_ivp
from scipy.optimize import newton

from kolmo.app.errors import EigenSolverError, InvalidParameterError
from kolmo.app.flows import BaseFlow


@dataclass(frozen=True, slots=True)
class RayleighResult:
    c: complex
    growth_rate: float
    residual: float
    iterations: int

    def to_dict(self) -> dict[str, object]:
        payload = asdict(self)
        payload["c"] = [self.c.real, self.c.imag]
        return payload


def _shoot(flow: BaseFlow, k: float, c: complex, start: tuple[complex, complex]) -> np.ndarray:
    profile = flow.profile
    domain = flow.domain

    def rayleigh(y: float, state: np.ndarray) -> np.ndarray:
        phi, dphi = state
        return np.array([dphi, (k**2 + profile.d2u(y) / (profile.u(y) - c)) * phi])

    solution = solve_ivp(
        rayleigh,
        (domain.y1, domain.y2),
        np.array(start, dtype=complex),
        method="DOP853",
        rtol=1e-10,
        atol=1e-12,
    )
    if not solution.success:
        raise EigenSolverError(f"Integración de Rayleigh fallida para c={c}: {solution.message}")
    return solution.y[:, -1]


def rayleigh_residual(flow: BaseFlow, k: float, c: complex) -> complex:
    """`φ(y₂)` en el canal o `det(M − I)` con la monodromía en el toro."""

    if flow.domain.periodic:
        first = _shoot(flow, k, c, (1.0, 0.0))
        second = _shoot(flow, k, c, (0.0, 1.0))
        monodromy = np.column_stack([first, second])
        return complex(np.linalg.det(monodromy - np.eye(2)))
    return complex(_shoot(flow, k, c, (0.0, 1.0))[0])


def rayleigh_refine(
    flow: BaseFlow,
    alpha: float,
    l: int,
    c_guess: complex,
    *,
    tol: float = 1e-10,
    maxiter: int = 50,
) -> RayleighResult:
    """Refina por secante una velocidad de fase inestable (`Im c > 0`)."""

    if not flow.is_shear or flow.profile is None:
        raise InvalidParameterError(f"El flujo {flow.kind.value} no es de cizalla")
    if complex(c_guess).imag <= 0:
        raise InvalidParameterError(f"El disparo requiere Im c > 0 (recibido {c_guess})")
    k = alpha * abs(l)
    c0 = complex(c_guess)
    c1 = c0 + 1e-4 * (1.0 + 1.0j) * max(abs(c0), 1.0)
    try:
        c, info = newton(
            lambda c: rayleigh_residual(flow, k, c),
            c0,
            x1=c1,
            tol=tol,
            maxiter=maxiter,
            full_output=True,
        )
    except RuntimeError as exc:
        raise EigenSolverError(f"La secante de Rayleigh no converge desde c={c_guess}: {exc}") from exc
    if not info.converged:
        raise EigenSolverError(f"La secante de Rayleigh no converge desde c={c_guess}")
    c = complex(c)
    result = RayleighResult(
        c=c,
        growth_rate=float(k * c.imag),
        residual=abs(rayleigh_residual(flow, k, c)),
        iterations=int(info.iterations),
    )
    logger.debug("Rayleigh α={} l={}: c={} tras {} iteraciones", alpha, l, c, result.iterations)
    return result


def phase_speed_from_eigenvalue(eigenvalue: complex, alpha: float, l: int, u_s: float) -> complex:
    """`c` de Rayleigh asociado a un autovalor `λ = −ik(c − U_s)` de `J_l L_l`."""

    return u_s + 1j * complex(eigenvalue) / (alpha * l)
