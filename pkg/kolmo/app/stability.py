"""Teoría espectral discreta de los flujos de cizalla.

Los operadores unidimensionales se discretizan por colocación de Fourier
(toro, malla desplazada media celda) o diferencias finitas de cuarto orden
(canal con Dirichlet). Cada modo horizontal `l` reduce la linealización de
Euler a `J_l L_l = iαl·U''·(1/K₂ − (−d²/dy² + α²l²)⁻¹)` en la clase K⁺.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np
from loguru import logger
from scipy import linalg

from kolmo.conf import MIN_OPERATOR_POINTS
from kolmo.app.errors import (
    DegenerateCenterSpaceError,
    EigenSolverError,
    FlowClassificationError,
    GridError,
    InvalidParameterError,
)
from kolmo.app.dynamics import LINEAR_SHEAR_TAGS, EvolutionModel, SimState, advection, rhs
from kolmo.app.flows import BaseFlow, FlowKind
from kolmo.app.models import CenterSpaceReport, EigenReport, IndexReport, IndexRow, ScanReport
from kolmo.app.operators import apply_L
from kolmo.app.rayleigh import phase_speed_from_eigenvalue
from kolmo.app.spectral import SpectralField, TorusGrid, mode_field

ZERO_TOL_REL = 1e-8
CLUSTER_RADIUS_REL = 1e-6
UNSTABLE_FLOOR = 1e-6
CALIBRATION_ALPHA = 2.0
SCAN_FLOOR = 1e-10
CONDITION_MAX = 1e10


class BoundaryKind(str, Enum):
    periodic = "periodic"
    dirichlet = "dirichlet"


@dataclass(frozen=True, slots=True, eq=False)
class Operator1D:
    """Matriz densa sobre los nodos verticales.

    `form` guarda la matriz hermítica de `L_l` cuando el operador es
    `J_l L_l`; `weight` son los valores del núcleo en los nodos.
    """

    matrix: np.ndarray
    nodes: np.ndarray
    bc: BoundaryKind
    weight: np.ndarray
    label: str
    form: np.ndarray | None = None

    @property
    def size(self) -> int:
        return int(self.matrix.shape[0])

    def symmetric_defect(self) -> float:
        scale = max(float(np.max(np.abs(self.matrix))), 1e-300)
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T))) / scale

    def shifted(self, shift: float) -> "Operator1D":
        return Operator1D(
            matrix=self.matrix + shift * np.eye(self.size),
            nodes=self.nodes,
            bc=self.bc,
            weight=self.weight,
            label=f"{self.label} + {shift:.6g}",
        )


def fourier_second_derivative(n: int, length: float) -> np.ndarray:
    """Matriz de segunda derivada espectral periódica (n par)."""

    h = 2.0 * np.pi / n
    k = np.arange(1, n)
    column = np.empty(n)
    column[0] = -np.pi**2 / (3.0 * h**2) - 1.0 / 6.0
    column[1:] = -0.5 * (-1.0) ** k / np.sin(h * k / 2.0) ** 2
    return linalg.toeplitz(column) * (2.0 * np.pi / length) ** 2


def dirichlet_second_derivative(n: int, h: float) -> np.ndarray:
    """Diferencias finitas de cuarto orden en nodos interiores.

    El nodo fantasma exterior se obtiene por reflexión impar, lo que deja
    la matriz simétrica.
    """

    column = np.zeros(n)
    column[:3] = (-30.0, 16.0, -1.0)
    matrix = linalg.toeplitz(column)
    matrix[0, 0] += 1.0
    matrix[-1, -1] += 1.0
    return matrix / (12.0 * h**2)


def _resolve_bc(flow: BaseFlow, bc: BoundaryKind | str | None) -> BoundaryKind:
    if bc is None:
        return BoundaryKind.periodic if flow.domain.periodic else BoundaryKind.dirichlet
    bc = BoundaryKind(bc)
    if (bc is BoundaryKind.periodic) != flow.domain.periodic:
        raise InvalidParameterError(f"Condición {bc.value} incompatible con el dominio {flow.domain.kind.value}")
    return bc


@lru_cache(maxsize=32)
def _discretization(flow: BaseFlow, n: int, bc: BoundaryKind) -> tuple[np.ndarray, np.ndarray]:
    if n < MIN_OPERATOR_POINTS:
        raise GridError(f"n debe ser ≥ {MIN_OPERATOR_POINTS} (recibido {n})")
    domain = flow.domain
    if bc is BoundaryKind.periodic:
        if n % 2:
            raise GridError(f"La colocación de Fourier necesita n par (recibido {n})")
        h = domain.length / n
        nodes = domain.y1 + (np.arange(n) + 0.5) * h
        d2 = fourier_second_derivative(n, domain.length)
    else:
        h = domain.length / (n + 1)
        nodes = domain.y1 + h * np.arange(1, n + 1)
        d2 = dirichlet_second_derivative(n, h)
    nodes.setflags(write=False)
    d2.setflags(write=False)
    return nodes, d2


def _require_shear(flow: BaseFlow) -> None:
    if not flow.is_shear or flow.profile is None:
        raise InvalidParameterError(f"El flujo {flow.kind.value} no es de cizalla")


def build_L0(flow: BaseFlow, n: int, bc: BoundaryKind | str | None = None) -> Operator1D:
    """`L₀ = −d²/dy² − K₂(y)` para flujos de la clase K⁺."""

    _require_shear(flow)
    if flow.kind is FlowKind.shear_no_inflection:
        raise FlowClassificationError("L₀ solo está definido en la clase K⁺; la clase 1 no tiene α_max")
    bc = _resolve_bc(flow, bc)
    nodes, d2 = _discretization(flow, n, bc)
    kernel = flow.kernel_values(nodes)
    return Operator1D(matrix=-d2 - np.diag(kernel), nodes=nodes, bc=bc, weight=kernel, label="L0")


def eigen_L0(op: Operator1D, *, zero_tol_rel: float = ZERO_TOL_REL) -> EigenReport:
    """Descomposición simétrica completa con recuentos n⁻, n⁰ y α_max."""

    try:
        values, vectors = linalg.eigh(op.matrix)
    except linalg.LinAlgError as exc:
        raise EigenSolverError(f"eigh no converge para {op.label}: {exc}") from exc
    zero_tol = zero_tol_rel * float(np.max(np.abs(values)))
    n_neg = int(np.sum(values < -zero_tol))
    n_zero = int(np.sum(np.abs(values) <= zero_tol))
    smallest = float(values[0])
    return EigenReport(
        eigenvalues=values,
        eigenvectors=vectors,
        n_neg=n_neg,
        n_zero=n_zero,
        n_pos=values.size - n_neg - n_zero,
        zero_tol=zero_tol,
        alpha_max=float(np.sqrt(-smallest)) if smallest < -zero_tol else 0.0,
    )


def alpha_max(flow: BaseFlow, n: int, bc: BoundaryKind | str | None = None) -> float:
    return eigen_L0(build_L0(flow, n, bc)).alpha_max


def neg_count(flow: BaseFlow, alpha: float, l: int, n: int, bc: BoundaryKind | str | None = None) -> int:
    """`n⁻(L₀ + l²α²)`."""

    _check_mode(alpha, l)
    return eigen_L0(build_L0(flow, n, bc).shifted((l * alpha) ** 2)).n_neg


def _check_mode(alpha: float, l: int) -> None:
    if not alpha > 0:
        raise InvalidParameterError(f"alpha debe ser positivo (recibido {alpha})")
    if l == 0:
        raise InvalidParameterError("El modo horizontal l debe ser no nulo")


def build_JlLl(
    flow: BaseFlow, alpha: float, l: int, n: int, bc: BoundaryKind | str | None = None
) -> Operator1D:
    """Matriz densa de `J_l L_l` con la inversa elíptica por resolución densa.

    Clase K⁺: `J_l = iαl·U''`, `L_l = 1/K₂ − (−d² + α²l²)⁻¹`.
    Clase 1: `J_l = −iαl·U''`, `L_l = 1/K₁ + (−d² + α²l²)⁻¹`.
    """

    _require_shear(flow)
    _check_mode(alpha, l)
    bc = _resolve_bc(flow, bc)
    nodes, d2 = _discretization(flow, n, bc)
    kernel = flow.kernel_values(nodes)
    if np.min(kernel) <= 0:
        raise FlowClassificationError("El núcleo del flujo no es positivo en los nodos")
    shift = (alpha * l) ** 2
    try:
        inverse = linalg.solve(-d2 + shift * np.eye(n), np.eye(n), assume_a="pos")
    except linalg.LinAlgError as exc:
        raise EigenSolverError(f"Resolución elíptica singular para α={alpha}, l={l}: {exc}") from exc
    inverse = 0.5 * (inverse + inverse.T)

    d2u = flow.profile.d2u(nodes)
    if flow.kind is FlowKind.shear_no_inflection:
        form = np.diag(1.0 / kernel) + inverse
        matrix = -1j * alpha * l * d2u[:, np.newaxis] * form
    else:
        form = np.diag(1.0 / kernel) - inverse
        matrix = 1j * alpha * l * d2u[:, np.newaxis] * form
    return Operator1D(matrix=matrix, nodes=nodes, bc=bc, weight=kernel, label=f"J_{l}L_{l}", form=form)


def cluster_eigenvalues(values: np.ndarray, radius: float) -> list[tuple[complex, int]]:
    """Agrupa autovalores a distancia ≤ radius; devuelve (centro, multiplicidad)."""

    remaining = list(np.asarray(values, dtype=complex))
    clusters: list[tuple[complex, int]] = []
    while remaining:
        seed = remaining.pop(0)
        members = [seed]
        changed = True
        while changed:
            changed = False
            for value in list(remaining):
                if min(abs(value - member) for member in members) <= radius:
                    members.append(value)
                    remaining.remove(value)
                    changed = True
        clusters.append((complex(np.mean(members)), len(members)))
    return clusters


def _eig(op: Operator1D) -> tuple[np.ndarray, np.ndarray]:
    try:
        return linalg.eig(op.matrix)
    except linalg.LinAlgError as exc:
        raise EigenSolverError(f"eig no converge para {op.label}: {exc}") from exc


@lru_cache(maxsize=64)
def spurious_real_part(flow: BaseFlow, n: int, bc: BoundaryKind, alpha: float) -> float:
    """Máximo |Re λ| de `J₁L₁` en un caso estable de referencia."""

    values, _ = _eig(build_JlLl(flow, alpha, 1, n, bc))
    return float(np.max(np.abs(values.real)))


def unstable_threshold(
    flow: BaseFlow,
    n: int,
    bc: BoundaryKind | str | None = None,
    *,
    floor: float = UNSTABLE_FLOOR,
    calibration_alpha: float = CALIBRATION_ALPHA,
) -> float:
    """`ε_unstable(n) = max(floor, 10·|Re λ| espurio)` calibrado con α estable."""

    bc = _resolve_bc(flow, bc)
    if flow.kind is FlowKind.shear_no_inflection:
        alpha = calibration_alpha
    else:
        alpha = max(calibration_alpha, 2.0 * alpha_max(flow, n, bc))
    return max(floor, 10.0 * spurious_real_part(flow, n, bc, float(alpha)))


def unstable_clusters(values: np.ndarray, eps: float, radius: float) -> list[tuple[complex, int]]:
    """Grupos de autovalores cuyo centro tiene Re > eps, con su multiplicidad."""

    candidates = np.asarray(values, dtype=complex)
    candidates = candidates[candidates.real > eps - radius]
    clusters = cluster_eigenvalues(candidates, radius)
    return sorted(
        ((center, multiplicity) for center, multiplicity in clusters if center.real > eps),
        key=lambda item: -item[0].real,
    )


def unstable_modes(
    flow: BaseFlow,
    alpha: float,
    l: int,
    n: int,
    bc: BoundaryKind | str | None = None,
    *,
    floor: float = UNSTABLE_FLOOR,
    calibration_alpha: float = CALIBRATION_ALPHA,
    zero_tol_rel: float = ZERO_TOL_REL,
    cluster_rel: float = CLUSTER_RADIUS_REL,
) -> EigenReport:
    """Espectro completo de `J_l L_l` y sus autovalores inestables.

    Los autovalores a distancia relativa ≤ `cluster_rel` se agrupan y
    `k_unstable` suma las multiplicidades de los grupos con Re λ > ε. Los
    recuentos `n_neg/n_zero/n_pos` son los de la forma `L_l`.
    """

    op = build_JlLl(flow, alpha, l, n, bc)
    eps = unstable_threshold(flow, n, op.bc, floor=floor, calibration_alpha=calibration_alpha)
    values, vectors = _eig(op)
    order = np.argsort(-values.real)
    values, vectors = values[order], vectors[:, order]
    radius = cluster_rel * max(float(np.max(np.abs(values))), 1.0)
    clusters = unstable_clusters(values, eps, radius)
    unstable = np.array(
        [center for center, multiplicity in clusters for _ in range(multiplicity)], dtype=complex
    )

    form_values = linalg.eigvalsh(op.form)
    zero_tol = zero_tol_rel * float(np.max(np.abs(form_values)))
    n_neg = int(np.sum(form_values < -zero_tol))
    n_zero = int(np.sum(np.abs(form_values) <= zero_tol))
    logger.debug("α={} l={} n={}: {} autovalores inestables (ε={:.2e})", alpha, l, n, unstable.size, eps)
    return EigenReport(
        eigenvalues=values,
        eigenvectors=vectors,
        n_neg=n_neg,
        n_zero=n_zero,
        n_pos=values.size - n_neg - n_zero,
        zero_tol=zero_tol,
        unstable=unstable,
        unstable_tol=eps,
        phase_speeds=np.array(
            [phase_speed_from_eigenvalue(value, alpha, l, flow.u_s) for value in unstable], dtype=complex
        ),
        unstable_clusters=clusters,
    )


def _hamiltonian_counts(
    op: Operator1D, values: np.ndarray, vectors: np.ndarray, eps: float, *, zero_tol_rel: float, cluster_rel: float
) -> dict[str, int]:
    """Índices de Krein del modo l, ya duplicados para el par ±l."""

    form = op.form
    scale = max(float(np.max(np.abs(values))), 1.0)
    form_norm = float(np.max(np.abs(linalg.eigvalsh(form))))
    tol = zero_tol_rel * form_norm

    unstable = values.real > eps
    real_axis = np.abs(values.imag) <= eps
    on_axis = np.abs(values.real) <= eps
    zero = np.abs(values) <= cluster_rel * scale

    k_r = 2 * int(np.sum(unstable & real_axis))
    k_c = int(np.sum(unstable & ~real_axis))

    k_i = 0
    for index in np.flatnonzero(on_axis & ~zero):
        v = vectors[:, index]
        krein = float(np.real(np.vdot(v, form @ v))) / float(np.real(np.vdot(v, v)))
        if krein < -tol:
            k_i += 1

    kernel_dim = int(np.sum(np.abs(linalg.eigvalsh(form)) <= tol))
    k_0 = 0
    if np.any(zero):
        radius = cluster_rel * scale
        _, basis, sdim = linalg.schur(op.matrix, output="complex", sort=lambda x: abs(x) <= radius)
        q = basis[:, :sdim]
        restricted = q.conj().T @ form @ q
        nonpositive = int(np.sum(linalg.eigvalsh(0.5 * (restricted + restricted.conj().T)) <= tol))
        k_0 = 2 * max(nonpositive - kernel_dim, 0)
    return {"k_r": k_r, "k_c": k_c, "k_i": k_i, "k_0": k_0, "n_zero": 2 * int(np.sum(zero))}


def index_check(
    flow: BaseFlow,
    alpha: float,
    l_max: int,
    n: int,
    bc: BoundaryKind | str | None = None,
    *,
    floor: float = UNSTABLE_FLOOR,
    calibration_alpha: float = CALIBRATION_ALPHA,
    zero_tol_rel: float = ZERO_TOL_REL,
    cluster_rel: float = CLUSTER_RADIUS_REL,
) -> IndexReport:
    """Tabla `k_{u,l}` frente a `n⁻(L₀ + l²α²)` para 1 ≤ l ≤ l_max.

    Los totales incluyen la duplicación ±l. Los desajustes quedan en
    `IndexReport.failures()`; no se lanzan como excepción.
    """

    if l_max < 1:
        raise InvalidParameterError(f"l_max debe ser ≥ 1 (recibido {l_max})")
    if flow.kind is FlowKind.shear_no_inflection:
        raise FlowClassificationError("index_check requiere un flujo de la clase K⁺")
    base = build_L0(flow, n, bc)
    a_max = eigen_L0(base, zero_tol_rel=zero_tol_rel).alpha_max

    rows: list[IndexRow] = []
    totals = {"k_r": 0, "k_c": 0, "k_i": 0, "k_0": 0, "n_zero": 0}
    phase_speeds: list[complex] = []
    for l in range(1, l_max + 1):
        shifted = eigen_L0(base.shifted((l * alpha) ** 2), zero_tol_rel=zero_tol_rel)
        report = unstable_modes(
            flow,
            alpha,
            l,
            n,
            base.bc,
            floor=floor,
            calibration_alpha=calibration_alpha,
            zero_tol_rel=zero_tol_rel,
            cluster_rel=cluster_rel,
        )
        op = build_JlLl(flow, alpha, l, n, base.bc)
        counts = _hamiltonian_counts(
            op,
            report.eigenvalues,
            report.eigenvectors,
            report.unstable_tol,
            zero_tol_rel=zero_tol_rel,
            cluster_rel=cluster_rel,
        )
        for key in totals:
            totals[key] += counts[key]
        phase_speeds.extend(complex(c) for c in report.phase_speeds)
        rows.append(
            IndexRow(
                l=l,
                alpha=float(alpha),
                n_neg=shifted.n_neg,
                k_ul=report.k_unstable,
                max_re_lambda=float(np.max(report.eigenvalues.real)),
                n_zero=shifted.n_zero,
            )
        )

    result = IndexReport(
        alpha=float(alpha),
        n=n,
        rows=rows,
        k_r=totals["k_r"],
        k_c=totals["k_c"],
        k_i_le0=totals["k_i"],
        k_0_le0=totals["k_0"],
        n_zero_total=totals["n_zero"],
        alpha_max=a_max,
        phase_speeds=phase_speeds,
    )
    if not result.passed:
        logger.warning("Fórmula del índice no verificada para α={}: {}", alpha, result.failures())
    return result


def _center_decomposition(
    matrix: np.ndarray, form: np.ndarray, eps: float, *, zero_tol: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, float, int]:
    values, vectors = linalg.eig(matrix)
    es = vectors[:, values.real < -eps]
    eu = vectors[:, values.real > eps]
    b = np.hstack([es, eu])
    size = matrix.shape[0]
    if b.shape[1] == 0:
        return es, eu, np.eye(size, dtype=complex), b, 1.0, 0
    gram = b.conj().T @ form @ b
    condition = float(np.linalg.cond(gram))
    if not np.isfinite(condition) or condition > CONDITION_MAX:
        raise DegenerateCenterSpaceError(
            f"L restringida a E^s ⊕ E^u es degenerada (condición {condition:.3e})",
            condition_number=condition,
        )
    projector = np.eye(size, dtype=complex) - b @ linalg.solve(gram, b.conj().T @ form)
    hermitian_gram = 0.5 * (gram + gram.conj().T)
    n_neg = int(np.sum(linalg.eigvalsh(hermitian_gram) < -zero_tol))
    return es, eu, projector, b, condition, n_neg


def center_space(
    flow: BaseFlow,
    alpha: float,
    l: int,
    n: int,
    bc: BoundaryKind | str | None = None,
    *,
    floor: float = UNSTABLE_FLOOR,
    calibration_alpha: float = CALIBRATION_ALPHA,
    zero_tol_rel: float = ZERO_TOL_REL,
) -> CenterSpaceReport:
    """E^c como complemento L-ortogonal de E^s ⊕ E^u para el modo l.

    `projector_ec = I − B G⁻¹ Bᴴ L` con `B = [E^s E^u]` y `G = Bᴴ L B`.
    """

    op = build_JlLl(flow, alpha, l, n, bc)
    eps = unstable_threshold(flow, n, op.bc, floor=floor, calibration_alpha=calibration_alpha)
    form = op.form
    form_values = linalg.eigvalsh(form)
    zero_tol = zero_tol_rel * float(np.max(np.abs(form_values)))

    es, eu, projector, b, condition, n_neg = _center_decomposition(op.matrix, form, eps, zero_tol=zero_tol)
    basis_ec = linalg.null_space(b.conj().T @ form) if b.shape[1] else np.eye(op.size, dtype=complex)

    restricted = basis_ec.conj().T @ form @ basis_ec
    restricted_values = linalg.eigvalsh(0.5 * (restricted + restricted.conj().T))
    kernel_dim = int(np.sum(np.abs(form_values) <= zero_tol))
    # Se descartan las direcciones de ker L (autovalores ~0 de la forma restringida).
    deflated = np.sort(restricted_values)
    deflated = deflated[np.abs(deflated) > zero_tol]
    min_quadratic = float(deflated[0]) if deflated.size else 0.0

    if es.shape[1] + eu.shape[1]:
        orthogonality = float(np.linalg.norm(b.conj().T @ form @ basis_ec, 2))
    else:
        orthogonality = 0.0
    logger.info(
        "E^c para α={} l={}: dim E^s={}, E^u={}, E^c={}, mín⟨Lw,w⟩={:.3e}",
        alpha,
        l,
        es.shape[1],
        eu.shape[1],
        basis_ec.shape[1],
        min_quadratic,
    )
    return CenterSpaceReport(
        alpha=float(alpha),
        l=l,
        basis_es=es,
        basis_eu=eu,
        basis_ec=basis_ec,
        projector_ec=projector,
        min_l_quadratic_on_ec=min_quadratic,
        orthogonality_defect=orthogonality,
        n_neg_on_unstable_sum=n_neg,
        condition_number=condition,
        kernel_dim=kernel_dim,
    )


def embedded_eigenvalue_scan(
    flow: BaseFlow,
    alpha: float,
    l: int,
    resolutions: list[int],
    bc: BoundaryKind | str | None = None,
    *,
    deflate_kernel: bool = False,
    floor: float = SCAN_FLOOR,
    cluster_rel: float = CLUSTER_RADIUS_REL,
) -> ScanReport:
    """Máximo |Re λ| de `J_l L_l` al refinar n.

    Un espectro puramente continuo pierde las partes reales espurias al
    refinar; valores por debajo de `floor` cuentan como convergidos. Con
    `deflate_kernel` se excluyen los autovalores nulos de ker L (caso
    crítico α = α_max).
    """

    if not resolutions:
        raise InvalidParameterError("La lista de resoluciones está vacía")
    max_re: list[float] = []
    unstable_counts: list[int] = []
    zero_counts: list[int] = []
    for n in resolutions:
        op = build_JlLl(flow, alpha, l, n, bc)
        values, _ = _eig(op)
        scale = max(float(np.max(np.abs(values))), 1.0)
        zero = np.abs(values) <= cluster_rel * scale
        kept = values[~zero] if deflate_kernel else values
        max_re.append(float(np.max(np.abs(kept.real))) if kept.size else 0.0)
        unstable_counts.append(int(np.sum(values.real > UNSTABLE_FLOOR)))
        zero_counts.append(int(np.sum(zero)))
    report = ScanReport(
        alpha=float(alpha),
        l=l,
        resolutions=list(resolutions),
        max_re=max_re,
        floor=floor,
        unstable_counts=unstable_counts,
        zero_counts=zero_counts,
    )
    if not report.monotone:
        logger.warning("Barrido no monótono para α={} l={}: {}", alpha, l, max_re)
    return report


def energy_casimir_report(
    flow: BaseFlow, alpha: float, l_max: int, n: int, bc: BoundaryKind | str | None = None
) -> dict[str, object]:
    """Signo de la forma `⟨Lω, ω⟩` en X a partir de los bloques `L_l`."""

    minima = []
    for l in range(1, l_max + 1):
        op = build_JlLl(flow, alpha, l, n, bc)
        minima.append(float(linalg.eigvalsh(op.form)[0]))
    smallest = min(minima)
    tol = ZERO_TOL_REL * max(1.0, max(abs(m) for m in minima))
    return {
        "alpha": float(alpha),
        "kind": flow.kind.value,
        "min_eigenvalue_per_l": minima,
        "positive_definite": bool(smallest > tol),
        "nonnegative": bool(smallest >= -tol),
    }


# ── Operador de Galerkin del integrador 2D ────────────────────────────────


def band_rows(grid: TorusGrid, l: int) -> list[int]:
    """Índices m retenidos por el desaliasado en la columna l."""

    k_cut = grid.dealias_fraction * (grid.nx // 2)
    if not 1 <= l <= k_cut:
        raise InvalidParameterError(f"El modo l={l} está fuera de la banda desaliasada (≤ {k_cut:.0f})")
    m_cut = int(np.floor(grid.dealias_fraction * (grid.ny // 2)))
    m_cut = min(m_cut, grid.ny // 2 - 1)
    return list(range(-m_cut, m_cut + 1))


def _column_matrix(grid: TorusGrid, l: int, apply) -> np.ndarray:
    """Matriz de un operador real lineal restringido a la columna l.

    Cada modo complejo `e^{i(lαx+my)}` se obtiene como `cos + i·sin`, dos
    campos reales.
    """

    ms = band_rows(grid, l)
    rows = [m % grid.ny for m in ms]
    column = l % grid.nx
    matrix = np.empty((len(ms), len(ms)), dtype=complex)
    for j, m in enumerate(ms):
        image_cos = apply(mode_field(grid, l, m, part="cos")).coeffs
        image_sin = apply(mode_field(grid, l, m, part="sin")).coeffs
        matrix[:, j] = image_cos[rows, column] + 1j * image_sin[rows, column]
    return matrix


def galerkin_operator(model: EvolutionModel, grid: TorusGrid, l: int, *, viscous: bool = True) -> np.ndarray:
    """Operador lineal del integrador 2D restringido al modo horizontal l (a t = 0).

    Con `viscous=False` solo se toma la parte de advección, que es `JL`.
    """

    if model.tag not in LINEAR_SHEAR_TAGS:
        raise InvalidParameterError(f"{model.tag.value} no se desacopla por modos horizontales")
    if viscous:
        return _column_matrix(grid, l, lambda field: rhs(SimState(field, 0.0, model)))
    return _column_matrix(grid, l, lambda field: advection(model, field, 0.0))


def galerkin_form(flow: BaseFlow, grid: TorusGrid, l: int) -> np.ndarray:
    matrix = _column_matrix(grid, l, lambda field: apply_L(flow, field))
    return 0.5 * (matrix + matrix.conj().T)


@dataclass(frozen=True, slots=True, eq=False)
class CenterProjector:
    """Proyector L-ortogonal sobre E^c para campos 2D, columna a columna."""

    grid: TorusGrid
    blocks: dict[int, tuple[list[int], np.ndarray]]
    unstable: dict[int, np.ndarray]

    def __call__(self, omega: SpectralField) -> SpectralField:
        coeffs = omega.coeffs.copy()
        grid = self.grid
        for l, (ms, projector) in self.blocks.items():
            rows = [m % grid.ny for m in ms]
            mirror_rows = [(-m) % grid.ny for m in ms]
            projected = projector @ coeffs[rows, l % grid.nx]
            coeffs[rows, l % grid.nx] = projected
            coeffs[mirror_rows, (-l) % grid.nx] = np.conj(projected)
        return omega.with_coeffs(coeffs)

    @property
    def max_growth_rate(self) -> float:
        rates = [float(np.max(values.real)) for values in self.unstable.values() if values.size]
        return max(rates) if rates else 0.0


def center_space_projector(model: EvolutionModel, grid: TorusGrid, *, floor: float = UNSTABLE_FLOOR) -> CenterProjector:
    """Proyector sobre E^c de la parte no viscosa del operador de Galerkin.

    Solo las columnas con autovalores fuera del eje imaginario necesitan
    proyección; el resto queda intacto.
    """

    flow = model.base_flow(grid.alpha)
    k_cut = int(np.floor(grid.dealias_fraction * (grid.nx // 2)))
    blocks: dict[int, tuple[list[int], np.ndarray]] = {}
    unstable: dict[int, np.ndarray] = {}
    for l in range(1, min(k_cut, grid.nx // 2 - 1) + 1):
        matrix = galerkin_operator(model, grid, l, viscous=False)
        values = linalg.eigvals(matrix)
        eps = floor * max(1.0, float(np.max(np.abs(values))))
        if not np.any(np.abs(values.real) > eps):
            continue
        form = galerkin_form(flow, grid, l)
        zero_tol = ZERO_TOL_REL * float(np.max(np.abs(linalg.eigvalsh(form))))
        _, _, projector, _, _, _ = _center_decomposition(matrix, form, eps, zero_tol=zero_tol)
        blocks[l] = (band_rows(grid, l), projector)
        unstable[l] = values[values.real > eps]
        logger.debug("Columna l={}: {} autovalores inestables en Galerkin", l, unstable[l].size)
    return CenterProjector(grid=grid, blocks=blocks, unstable=unstable)
