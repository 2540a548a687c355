"""Flujos base: barra de Kolmogorov, dipolo y perfiles de cizalla generales."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Any

import numpy as np
from loguru import logger
from scipy.optimize import bisect

from kolmo.conf import (
    CRITICAL_LAYER_REL,
    DEGENERATE_SLOPE_TOL,
    INFLECTION_XTOL,
    KERNEL_MAX,
    PROFILE_SAMPLES,
)
from kolmo.app.errors import (
    DegenerateProfileError,
    FlowClassificationError,
    InvalidParameterError,
    KernelDomainError,
)
from kolmo.app.models import InflectionPoint, InflectionReport
from kolmo.app.profiles import Domain, Profile, builtin_profile
from kolmo.app.spectral import TorusGrid


class FlowKind(str, Enum):
    kolmogorov_bar = "KolmogorovBar"
    dipole = "Dipole"
    shear_no_inflection = "ShearNoInflection"
    shear_k_plus = "ShearKPlus"


@dataclass(frozen=True, slots=True, eq=False)
class BaseFlow:
    """Descriptor inmutable de un flujo base.

    Para los flujos de cizalla `kernel_values` devuelve K₁ = U''/(U−U_s)
    (clase 1) o K₂ = −U''/(U−U_s) (clase K⁺), con el límite de L'Hôpital
    en las capas críticas.
    """

    kind: FlowKind
    profile: Profile | None
    u_s: float
    domain: Domain
    alpha: float | None = None
    kernel_modes: tuple[tuple[int, int, str], ...] = ()
    notes: dict[str, Any] = field(default_factory=dict)

    @property
    def is_shear(self) -> bool:
        return self.kind in (FlowKind.kolmogorov_bar, FlowKind.shear_k_plus, FlowKind.shear_no_inflection)

    @property
    def kernel_name(self) -> str | None:
        match self.kind:
            case FlowKind.shear_no_inflection:
                return "K1"
            case FlowKind.kolmogorov_bar | FlowKind.shear_k_plus:
                return "K2"
        return None

    def kernel_values(self, y: np.ndarray) -> np.ndarray:
        if self.profile is None:
            raise InvalidParameterError("El dipolo no tiene núcleo K(y)")
        sign = 1.0 if self.kind is FlowKind.shear_no_inflection else -1.0
        return sign * _kernel_ratio(self.profile, self.u_s, np.asarray(y, dtype=float))

    def describe(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value,
            "profile": self.profile.describe() if self.profile is not None else None,
            "u_s": self.u_s,
            "domain": self.domain.to_dict(),
            "alpha": self.alpha,
            "kernel": self.kernel_name,
            "kernel_modes": [list(mode) for mode in self.kernel_modes],
            "notes": dict(self.notes),
        }


def _kernel_ratio(profile: Profile, u_s: float, y: np.ndarray) -> np.ndarray:
    """`U''/(U − U_s)` con `U'''/U'` donde `U = U_s`."""

    u = profile.u(y) - u_s
    d2 = profile.d2u(y)
    scale = max(float(np.max(np.abs(profile.u(y)))), abs(u_s), 1.0)
    critical = np.abs(u) <= CRITICAL_LAYER_REL * scale
    ratio = np.empty_like(u)
    ratio[~critical] = d2[~critical] / u[~critical]
    if np.any(critical):
        slope = profile.du(y[critical])
        if np.any(np.abs(slope) <= DEGENERATE_SLOPE_TOL):
            bad = y[critical][np.abs(slope) <= DEGENERATE_SLOPE_TOL][0]
            raise DegenerateProfileError(
                f"U'(y)=0 en y={bad:.6g} con U=U_s={u_s:.6g}; el límite de K no está definido"
            )
        ratio[critical] = profile.d3u(y[critical]) / slope
    return ratio


@lru_cache(maxsize=64)
def grid_tables(flow: BaseFlow, grid: TorusGrid) -> dict[str, np.ndarray]:
    """`U`, `U''` y el núcleo evaluados en los nodos verticales de la malla."""

    if not flow.is_shear or flow.profile is None:
        raise InvalidParameterError(f"El flujo {flow.kind.value} no es de cizalla")
    if not flow.domain.periodic:
        raise InvalidParameterError("Los campos 2D solo admiten perfiles 2π-periódicos (toro)")
    y = grid.tables.y
    kernel = flow.kernel_values(y)
    if not np.all(np.isfinite(kernel)) or np.min(kernel) <= 0.0:
        raise KernelDomainError(
            f"El núcleo {flow.kernel_name} no es estrictamente positivo en la malla "
            f"(mín {np.nanmin(kernel):.3e}); se requiere un flujo de la clase K⁺ o de la clase 1"
        )
    tables = {
        "u": flow.profile.u(y),
        "d2u": flow.profile.d2u(y),
        "kernel": kernel,
        "inv_kernel": 1.0 / kernel,
    }
    for array in tables.values():
        array.setflags(write=False)
    return tables


def kolmogorov_flow(alpha: float) -> BaseFlow:
    """Flujo de barra `U = sin y`, `U_s = 0`, `K₂ ≡ 1`."""

    if not np.isfinite(alpha) or alpha <= 0:
        raise InvalidParameterError(f"alpha debe ser positivo (recibido {alpha})")
    # Modos de X en el núcleo de L = 1 + Δ⁻¹: (kα)² + m² = 1 con k ≠ 0.
    kernel_modes: list[tuple[int, int, str]] = []
    k = round(1.0 / alpha)
    if k >= 1 and np.isclose(k * alpha, 1.0, rtol=0.0, atol=1e-12):
        kernel_modes = [(k, 0, "cos"), (k, 0, "sin")]
    regime = "stable" if alpha >= 1.0 else "unstable"
    logger.debug("Flujo de Kolmogorov α={} (régimen {})", alpha, regime)
    return BaseFlow(
        kind=FlowKind.kolmogorov_bar,
        profile=builtin_profile("sinY", Domain.torus()),
        u_s=0.0,
        domain=Domain.torus(),
        alpha=float(alpha),
        kernel_modes=tuple(kernel_modes),
        notes={"regime": regime, "alpha_max": 1.0, "anomalous_kernel_dim": len(kernel_modes)},
    )


def dipole_flow(alpha: float = 1.0) -> BaseFlow:
    """Dipolo `ψ₀ = cos x + cos y` sobre el toro cuadrado."""

    if not np.isclose(alpha, 1.0, rtol=0.0, atol=1e-12):
        raise InvalidParameterError(f"El dipolo solo está definido para α = 1 (recibido {alpha})")
    return BaseFlow(
        kind=FlowKind.dipole,
        profile=None,
        u_s=0.0,
        domain=Domain.torus(),
        alpha=1.0,
        kernel_modes=((1, 0, "cos"), (1, 0, "sin"), (0, 1, "cos"), (0, 1, "sin")),
        notes={"stream_function": "cos x + cos y"},
    )


def find_inflection_values(target: BaseFlow | Profile) -> InflectionReport:
    """Raíces de U'' por cambio de signo y bisección hasta `xtol = 1e-10`."""

    profile = target.profile if isinstance(target, BaseFlow) else target
    if profile is None:
        raise InvalidParameterError("find_inflection_values requiere un flujo de cizalla")
    domain = profile.domain
    y = domain.samples(PROFILE_SAMPLES)
    d2 = profile.d2u(y)
    scale = float(np.max(np.abs(d2)))
    if scale == 0.0:
        return InflectionReport(points=[], notes=["U'' se anula idénticamente"])

    zero = np.abs(d2) <= 1e-14 * scale
    roots = list(y[zero])
    brackets = [(y[i], y[i + 1]) for i in range(y.size - 1) if not zero[i] and not zero[i + 1] and d2[i] * d2[i + 1] < 0]
    if domain.periodic and not zero[-1] and not zero[0] and d2[-1] * d2[0] < 0:
        brackets.append((y[-1], domain.y2))
    for a, b in brackets:
        roots.append(bisect(lambda s: float(profile.d2u(s)), a, b, xtol=INFLECTION_XTOL))

    points: list[InflectionPoint] = []
    for root in sorted(roots):
        if domain.periodic:
            root = domain.y1 + (root - domain.y1) % domain.length
        if any(abs(root - point.y) <= 1e-8 for point in points):
            continue
        points.append(
            InflectionPoint(
                y=float(root),
                value=float(profile.u(root)),
                residual=float(abs(profile.d2u(root))),
            )
        )
    if domain.periodic and len(points) > 1 and abs(points[-1].y - points[0].y - domain.length) <= 1e-8:
        points.pop()
    points.sort(key=lambda point: point.y)

    notes = []
    for point in points:
        if abs(float(profile.d3u(point.y))) <= 1e-10:
            notes.append(f"y={point.y:.6g}: raíz de U'' de multiplicidad > 1")
    return InflectionReport(points=points, notes=notes)


def shear_flow(
    profile: Profile,
    *,
    u_s: float | None = None,
    alpha: float | None = None,
) -> BaseFlow:
    """Clasifica un perfil en la clase 1 o K⁺ y fija `U_s`.

    Con `u_s=None` se elige automáticamente: por debajo de min U (U'' > 0) o
    por encima de max U (U'' < 0) en la clase 1, o el único valor de
    inflexión en la clase K⁺.
    """

    y = profile.domain.samples(PROFILE_SAMPLES)
    u = profile.u(y)
    d2 = profile.d2u(y)
    d2_scale = float(np.max(np.abs(d2)))
    if d2_scale <= 1e-14 * max(float(np.max(np.abs(u))), 1.0):
        raise FlowClassificationError(
            f"El perfil {profile.name!r} tiene U'' ≡ 0: K ≡ 0, ni clase 1 ni clase K⁺"
        )

    notes: dict[str, Any] = {}
    single_sign = bool(np.all(d2 > 0) or np.all(d2 < 0))
    if single_sign:
        kind = FlowKind.shear_no_inflection
        if u_s is None:
            margin = max(float(np.ptp(u)), 1.0)
            u_s = float(np.min(u) - margin) if d2[0] > 0 else float(np.max(u) + margin)
        elif np.min(u) <= u_s <= np.max(u):
            raise FlowClassificationError(
                f"U_s={u_s} está en el rango de U; la clase 1 necesita U_s fuera de [min U, max U]"
            )
    else:
        kind = FlowKind.shear_k_plus
        report = find_inflection_values(profile)
        values = report.value_set()
        notes["inflection_values"] = values
        if u_s is None:
            if len(values) != 1:
                raise FlowClassificationError(
                    f"El perfil tiene {len(values)} valores de inflexión {values}; indica U_s explícitamente"
                )
            u_s = values[0]

    u_s = float(u_s)
    sign = 1.0 if kind is FlowKind.shear_no_inflection else -1.0
    kernel = sign * _kernel_ratio(profile, u_s, y)
    if not np.all(np.isfinite(kernel)) or np.max(np.abs(kernel)) > KERNEL_MAX:
        raise FlowClassificationError(
            f"El núcleo de {profile.name!r} no está acotado; ni clase 1 ni clase K⁺"
        )
    if np.min(kernel) <= 0.0:
        raise FlowClassificationError(
            f"El núcleo de {profile.name!r} cambia de signo (mín {np.min(kernel):.3e}); ni clase 1 ni clase K⁺"
        )

    notes["kernel_min"] = float(np.min(kernel))
    notes["kernel_max"] = float(np.max(kernel))
    logger.info(
        "Perfil {} clasificado como {} (U_s={:.6g}, K∈[{:.3g}, {:.3g}])",
        profile.name,
        kind.value,
        u_s,
        notes["kernel_min"],
        notes["kernel_max"],
    )
    return BaseFlow(
        kind=kind,
        profile=profile,
        u_s=u_s,
        domain=profile.domain,
        alpha=alpha,
        notes=notes,
    )
