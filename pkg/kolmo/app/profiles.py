"""Catálogo de perfiles de cizalla U(y) con sus tres primeras derivadas."""

from __future__ import annotations

from collections.abc import Callable, Mapping
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.interpolate import make_interp_spline

from kolmo.conf import BUILTIN_PROFILES
from kolmo.app.errors import ArtifactMissingError, InvalidParameterError

SPLINE_DEGREE = 5

ProfileFn = Callable[[np.ndarray], np.ndarray]


class DomainKind(str, Enum):
    torus = "torus"
    channel = "channel"


@dataclass(frozen=True, slots=True)
class Domain:
    """Dominio vertical: periodo 2π (toro) o canal acotado `[y1, y2]`."""

    kind: DomainKind = DomainKind.torus
    y1: float = 0.0
    y2: float = 2.0 * np.pi

    @classmethod
    def torus(cls) -> "Domain":
        return cls()

    @classmethod
    def channel(cls, y1: float, y2: float) -> "Domain":
        if not y2 > y1:
            raise InvalidParameterError(f"Canal vacío: y1={y1} ≥ y2={y2}")
        return cls(DomainKind.channel, float(y1), float(y2))

    @property
    def periodic(self) -> bool:
        return self.kind is DomainKind.torus

    @property
    def length(self) -> float:
        return self.y2 - self.y1

    def samples(self, count: int) -> np.ndarray:
        return np.linspace(self.y1, self.y2, count, endpoint=not self.periodic)

    def to_dict(self) -> dict[str, float | str]:
        return {"kind": self.kind.value, "y1": self.y1, "y2": self.y2}


@dataclass(frozen=True, slots=True, eq=False)
class Profile:
    """Perfil diferenciable; `derivatives[n]` evalúa U^{(n)} para n = 0..3."""

    name: str
    domain: Domain
    derivatives: tuple[ProfileFn, ProfileFn, ProfileFn, ProfileFn]
    params: Mapping[str, float] = field(default_factory=dict)

    def __call__(self, y: np.ndarray | float, order: int = 0) -> np.ndarray:
        return np.asarray(self.derivatives[order](np.asarray(y, dtype=float)), dtype=float)

    def u(self, y):
        return self(y, 0)

    def du(self, y):
        return self(y, 1)

    def d2u(self, y):
        return self(y, 2)

    def d3u(self, y):
        return self(y, 3)

    def describe(self) -> dict[str, object]:
        return {"name": self.name, "params": dict(self.params), "domain": self.domain.to_dict()}


def _sin_profile(domain: Domain, amplitude: float = 1.0, shift: float = 0.0) -> Profile:
    a, s = amplitude, shift
    return Profile(
        name="sinY",
        domain=domain,
        derivatives=(
            lambda y: a * np.sin(y - s),
            lambda y: a * np.cos(y - s),
            lambda y: -a * np.sin(y - s),
            lambda y: -a * np.cos(y - s),
        ),
        params={"amplitude": a, "shift": s},
    )


def _tanh_profile(domain: Domain, amplitude: float = 1.0, width: float = 1.0) -> Profile:
    a, w = amplitude, width

    def d0(y):
        return a * np.tanh(y / w)

    def d1(y):
        return a / w / np.cosh(y / w) ** 2

    def d2(y):
        t = np.tanh(y / w)
        return -2.0 * a / w**2 * t / np.cosh(y / w) ** 2

    def d3(y):
        t = np.tanh(y / w)
        s2 = 1.0 / np.cosh(y / w) ** 2
        return a / w**3 * (4.0 * t**2 * s2 - 2.0 * s2**2)

    return Profile("tanh", domain, (d0, d1, d2, d3), {"amplitude": a, "width": w})


def _couette_profile(domain: Domain, slope: float = 1.0, offset: float = 0.0) -> Profile:
    return Profile(
        name="couette",
        domain=domain,
        derivatives=(
            lambda y: slope * y + offset,
            lambda y: np.full_like(y, slope, dtype=float),
            lambda y: np.zeros_like(y, dtype=float),
            lambda y: np.zeros_like(y, dtype=float),
        ),
        params={"slope": slope, "offset": offset},
    )


def _parabola_profile(domain: Domain, a: float = -1.0, b: float = 0.0, c: float = 1.0) -> Profile:
    """`U = a y² + b y + c`; con `a ≠ 0` no tiene punto de inflexión."""

    return Profile(
        name="parabola",
        domain=domain,
        derivatives=(
            lambda y: a * y**2 + b * y + c,
            lambda y: 2.0 * a * y + b,
            lambda y: np.full_like(y, 2.0 * a, dtype=float),
            lambda y: np.zeros_like(y, dtype=float),
        ),
        params={"a": a, "b": b, "c": c},
    )


_BUILDERS = {
    "sinY": _sin_profile,
    "tanh": _tanh_profile,
    "couette": _couette_profile,
    "parabola": _parabola_profile,
}


def builtin_profile(name: str, domain: Domain, params: Mapping[str, float] | None = None) -> Profile:
    """Perfil analítico del catálogo con sus parámetros opcionales."""

    if name not in BUILTIN_PROFILES:
        raise InvalidParameterError(
            f"Perfil desconocido {name!r}; disponibles: {', '.join(sorted(BUILTIN_PROFILES))}"
        )
    try:
        return _BUILDERS[name](domain, **dict(params or {}))
    except TypeError as exc:
        raise InvalidParameterError(f"Parámetros no válidos para el perfil {name!r}: {exc}") from exc


def spline_profile(y: np.ndarray, values: np.ndarray, domain: Domain, *, name: str = "spline") -> Profile:
    """Interpola muestras `(y, U)` con un spline quíntico periódico o not-a-knot.

    Con grado 5 la tercera derivada sigue siendo continua.
    """

    y = np.asarray(y, dtype=float)
    values = np.asarray(values, dtype=float)
    if y.ndim != 1 or y.shape != values.shape or y.size < SPLINE_DEGREE + 1:
        raise InvalidParameterError(f"Se necesitan al menos {SPLINE_DEGREE + 1} muestras (y, U) de igual longitud")
    order = np.argsort(y)
    y, values = y[order], values[order]
    if np.any(np.diff(y) <= 0):
        raise InvalidParameterError("Las abscisas del perfil deben ser distintas")

    if domain.periodic:
        period = domain.length
        if not np.isclose(y[-1] - y[0], period):
            y = np.append(y, y[0] + period)
            values = np.append(values, values[0])
        else:
            values = values.copy()
            values[-1] = values[0]
        spline = make_interp_spline(y, values, k=SPLINE_DEGREE, bc_type="periodic")
        origin = y[0]

        def wrap(points: np.ndarray) -> np.ndarray:
            return origin + np.mod(points - origin, period)

    else:
        spline = make_interp_spline(y, values, k=SPLINE_DEGREE)

        def wrap(points: np.ndarray) -> np.ndarray:
            return points

    derivatives = tuple(
        (lambda points, n=n: spline(wrap(np.asarray(points, dtype=float)), n)) for n in range(4)
    )
    return Profile(name, domain, derivatives, {"samples": float(y.size)})


def load_profile_csv(path: Path, domain: Domain) -> Profile:
    """Lee un CSV de dos columnas `y,U` (con o sin cabecera)."""

    if not path.exists():
        raise ArtifactMissingError(f"No existe el CSV del perfil: {path}")
    try:
        data = np.loadtxt(path, delimiter=",", ndmin=2)
    except ValueError:
        data = np.loadtxt(path, delimiter=",", ndmin=2, skiprows=1)
    if data.shape[1] != 2:
        raise InvalidParameterError(f"El CSV {path} debe tener exactamente dos columnas (y, U)")
    return spline_profile(data[:, 0], data[:, 1], domain, name=path.stem)
