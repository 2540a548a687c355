"""Excepciones de dominio para el laboratorio."""

from __future__ import annotations

from typing import Any


class KolmoLabError(Exception):
    """Excepción base del proyecto."""


class ConfigurationError(KolmoLabError):
    """Se lanza cuando la configuración no se puede cargar o validar."""


class ArtifactMissingError(KolmoLabError):
    """Se lanza cuando falta un fichero de entrada obligatorio."""


class InvalidParameterError(KolmoLabError):
    """Parámetro fuera de su dominio de validez."""


class GridError(InvalidParameterError):
    """Resolución o periodo de malla no admitidos."""


class FieldValidationError(InvalidParameterError):
    """Un campo espectral no cumple media nula o simetría hermítica."""


class ProjectionError(InvalidParameterError):
    """Proyección mal definida (por ejemplo, N mayor que los modos retenidos)."""


class FlowClassificationError(KolmoLabError):
    """El perfil no pertenece ni a la clase 1 ni a la clase K⁺."""


class DegenerateProfileError(FlowClassificationError):
    """U' se anula en un punto con U = U_s y el núcleo no se puede extender."""


class KernelDomainError(KolmoLabError):
    """El núcleo K₁/K₂ del flujo no es estrictamente positivo en la malla."""


class NumericalError(KolmoLabError):
    """Fallo numérico durante una ejecución."""


class CFLViolationError(NumericalError):
    """El paso temporal supera la cota CFL."""


class NumericalAbortError(NumericalError):
    """Aparece un NaN o infinito; conserva el registro parcial."""

    def __init__(self, message: str, *, time: float, record: Any = None) -> None:
        super().__init__(message)
        self.time = time
        self.record = record


class EigenSolverError(NumericalError):
    """El resolvedor de autovalores no converge."""


class DegenerateCenterSpaceError(NumericalError):
    """La forma L restringida a E^s ⊕ E^u es numéricamente degenerada."""

    def __init__(self, message: str, *, condition_number: float) -> None:
        super().__init__(message)
        self.condition_number = condition_number
