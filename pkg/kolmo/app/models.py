"""Modelos de datos del proyecto."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np


def _complex_pairs(values: np.ndarray) -> list[list[float]]:
    return [[float(np.real(v)), float(np.imag(v))] for v in np.atleast_1d(values)]


@dataclass(slots=True)
class NormBundle:
    """Normas de energía de un campo de vorticidad frente a un flujo base."""

    l2: float
    h1: float
    inner_l: float
    x: float
    x1: float
    indefinite: bool = False

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(slots=True)
class InflectionPoint:
    y: float
    value: float
    residual: float


@dataclass(slots=True)
class InflectionReport:
    """Raíces de U'' en el dominio con sus valores de U."""

    points: list[InflectionPoint]
    notes: list[str] = field(default_factory=list)

    def value_set(self, tol: float = 1e-8) -> list[float]:
        """Valores de inflexión distintos, agrupados con tolerancia absoluta."""

        values: list[float] = []
        for value in sorted(point.value for point in self.points):
            if not values or abs(value - values[-1]) > tol:
                values.append(value)
        return values

    def to_dict(self) -> dict[str, Any]:
        return {
            "points": [asdict(point) for point in self.points],
            "values": self.value_set(),
            "notes": list(self.notes),
        }


@dataclass(slots=True)
class EigenReport:
    """Espectro de un operador discreto con sus recuentos."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    n_neg: int
    n_zero: int
    n_pos: int
    zero_tol: float
    unstable: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=complex))
    unstable_tol: float = 0.0
    alpha_max: float = 0.0
    phase_speeds: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=complex))
    unstable_clusters: list[tuple[complex, int]] = field(default_factory=list)

    @property
    def k_unstable(self) -> int:
        """Autovalores inestables contados con la multiplicidad de su grupo."""

        return sum(multiplicity for _, multiplicity in self.unstable_clusters)

    @property
    def max_re(self) -> float:
        return float(np.max(np.abs(np.real(self.eigenvalues)))) if self.eigenvalues.size else 0.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_neg": self.n_neg,
            "n_zero": self.n_zero,
            "n_pos": self.n_pos,
            "zero_tol": self.zero_tol,
            "unstable": _complex_pairs(self.unstable),
            "unstable_tol": self.unstable_tol,
            "k_unstable": self.k_unstable,
            "unstable_clusters": [
                {"re": center.real, "im": center.imag, "multiplicity": multiplicity}
                for center, multiplicity in self.unstable_clusters
            ],
            "alpha_max": self.alpha_max,
            "max_abs_re": self.max_re,
            "phase_speeds": _complex_pairs(self.phase_speeds),
        }


@dataclass(slots=True)
class IndexRow:
    l: int
    alpha: float
    n_neg: int
    k_ul: int
    max_re_lambda: float
    n_zero: int = 0

    @property
    def matches(self) -> bool:
        return self.n_neg == self.k_ul

    def to_dict(self) -> dict[str, Any]:
        payload = asdict(self)
        payload["matches"] = self.matches
        return payload


@dataclass(slots=True)
class IndexReport:
    """Tabla por modo l y totales de la fórmula del índice."""

    alpha: float
    n: int
    rows: list[IndexRow]
    k_r: int
    k_c: int
    k_i_le0: int
    k_0_le0: int
    n_zero_total: int
    alpha_max: float
    phase_speeds: list[complex] = field(default_factory=list)

    @property
    def k_u(self) -> int:
        return 2 * sum(row.k_ul for row in self.rows)

    @property
    def n_neg_l(self) -> int:
        return 2 * sum(row.n_neg for row in self.rows)

    @property
    def identity_lhs(self) -> int:
        return self.k_r + 2 * self.k_c + 2 * self.k_i_le0 + self.k_0_le0

    @property
    def identity_holds(self) -> bool:
        return self.identity_lhs == self.n_neg_l

    @property
    def passed(self) -> bool:
        return self.identity_holds and all(row.matches for row in self.rows)

    def failures(self) -> list[str]:
        messages = [
            f"l={row.l}: k_ul={row.k_ul} ≠ n⁻={row.n_neg}" for row in self.rows if not row.matches
        ]
        if not self.identity_holds:
            messages.append(
                f"k_r + 2k_c + 2k_i + k_0 = {self.identity_lhs} ≠ n⁻(L) = {self.n_neg_l}"
            )
        return messages

    def to_dict(self) -> dict[str, Any]:
        return {
            "alpha": self.alpha,
            "n": self.n,
            "alpha_max": self.alpha_max,
            "rows": [row.to_dict() for row in self.rows],
            "k_u": self.k_u,
            "n_neg_L": self.n_neg_l,
            "n_zero_total": self.n_zero_total,
            "k_r": self.k_r,
            "k_c": self.k_c,
            "k_i_le0": self.k_i_le0,
            "k_0_le0": self.k_0_le0,
            "identity_holds": self.identity_holds,
            "passed": self.passed,
            "failures": self.failures(),
            "phase_speeds": _complex_pairs(np.asarray(self.phase_speeds, dtype=complex)),
        }


@dataclass(slots=True)
class CenterSpaceReport:
    """Descomposición E^s ⊕ E^u ⊕ E^c para un modo l."""

    alpha: float
    l: int
    basis_es: np.ndarray
    basis_eu: np.ndarray
    basis_ec: np.ndarray
    projector_ec: np.ndarray
    min_l_quadratic_on_ec: float
    orthogonality_defect: float
    n_neg_on_unstable_sum: int
    condition_number: float
    kernel_dim: int

    @property
    def dim_es(self) -> int:
        return int(self.basis_es.shape[1])

    @property
    def dim_eu(self) -> int:
        return int(self.basis_eu.shape[1])

    @property
    def dim_ec(self) -> int:
        return int(self.basis_ec.shape[1])

    def combined(self) -> dict[str, int]:
        """Dimensiones reales al juntar los modos l y −l."""

        return {
            "dim_Es": 2 * self.dim_es,
            "dim_Eu": 2 * self.dim_eu,
            "dim_Ec": 2 * self.dim_ec,
            "n_neg_Es_plus_Eu": 2 * self.n_neg_on_unstable_sum,
        }

    def to_dict(self) -> dict[str, Any]:
        return {
            "alpha": self.alpha,
            "l": self.l,
            "dim_Es": self.dim_es,
            "dim_Eu": self.dim_eu,
            "dim_Ec": self.dim_ec,
            "kernel_dim": self.kernel_dim,
            "min_L_quadratic_on_Ec": self.min_l_quadratic_on_ec,
            "orthogonality_defect": self.orthogonality_defect,
            "n_neg_Es_plus_Eu": self.n_neg_on_unstable_sum,
            "condition_number": self.condition_number,
            "combined": self.combined(),
        }


@dataclass(slots=True)
class ScanReport:
    """Máximo |Re λ| por resolución en un régimen estable."""

    alpha: float
    l: int
    resolutions: list[int]
    max_re: list[float]
    floor: float
    unstable_counts: list[int] = field(default_factory=list)
    zero_counts: list[int] = field(default_factory=list)

    @property
    def monotone(self) -> bool:
        for previous, current in zip(self.max_re, self.max_re[1:]):
            if previous <= self.floor and current <= self.floor:
                continue
            if current >= previous:
                return False
        return True

    def to_dict(self) -> dict[str, Any]:
        return {
            "alpha": self.alpha,
            "l": self.l,
            "resolutions": list(self.resolutions),
            "max_re": list(self.max_re),
            "floor": self.floor,
            "monotone": self.monotone,
            "unstable_counts": list(self.unstable_counts),
            "zero_counts": list(self.zero_counts),
        }


@dataclass(slots=True)
class TimeSeriesRecord:
    """Diagnósticos muestreados a lo largo de una ejecución."""

    times: list[float] = field(default_factory=list)
    columns: dict[str, list[float]] = field(default_factory=dict)
    final_state: Any = None
    aborted: bool = False
    abort_time: float | None = None

    def append(self, time: float, values: dict[str, float]) -> None:
        if self.times and time <= self.times[-1]:
            raise ValueError(f"Tiempos no crecientes: {time} tras {self.times[-1]}")
        if not self.columns:
            self.columns = {name: [] for name in values}
        for name in self.columns:
            self.columns[name].append(float(values[name]))
        self.times.append(float(time))

    def column(self, name: str) -> np.ndarray:
        return np.asarray(self.columns[name], dtype=float)

    @property
    def time_array(self) -> np.ndarray:
        return np.asarray(self.times, dtype=float)

    def header(self) -> list[str]:
        return ["time", *self.columns]

    def as_matrix(self) -> np.ndarray:
        if not self.times:
            return np.zeros((0, len(self.header())))
        return np.column_stack([self.time_array, *(self.column(name) for name in self.columns)])

    def __len__(self) -> int:
        return len(self.times)


@dataclass(slots=True)
class ResidualSeries:
    times: np.ndarray
    raw: np.ndarray
    relative: np.ndarray

    @property
    def max_relative(self) -> float:
        return float(np.max(np.abs(self.relative))) if self.relative.size else 0.0


@dataclass(slots=True)
class DampingReport:
    """Cociente de amortiguamiento reforzado tras un tiempo τ/ν."""

    nu: float
    tau: float
    t_final: float
    ratio: float
    metric: str
    initial_norm: float
    final_norm: float
    shear_only: bool = False
    infimum_time: float | None = None
    runtime_seconds: float = 0.0
    metadata: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(slots=True)
class SweepRow:
    nu: float
    status: str
    ratio: float = float("nan")
    initial_norm: float = float("nan")
    final_norm: float = float("nan")
    z_decay_rate: float = float("nan")
    error: str = ""

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(slots=True)
class RunManifest:
    """Configuración resuelta y metadatos reproducibles de una ejecución."""

    kind: str
    name: str
    seed: int
    config: dict[str, Any]
    code_version: str
    started_at: str
    finished_at: str = ""
    wall_seconds: float = 0.0
    status: str = "running"
    abort_time: float | None = None
    outputs: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunManifest":
        return cls(**data)
