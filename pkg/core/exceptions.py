# core/exceptions.py
"""
Jerarquía de errores del sistema de validación de grafos de conocimiento

Cada error lleva el código de salida que usa la CLI y, opcionalmente, la
etapa del pipeline en la que ocurrió (la rellena services/validation_service.py)
"""

from typing import Optional


class CrossValError(Exception):
    """Error base de todo el sistema"""

    exit_code = 1

    def __init__(self, message: str, stage: Optional[str] = None):
        super().__init__(message)
        self.message = message
        self.stage = stage

    def __str__(self):
        if self.stage:
            return f"[{self.stage}] {self.message}"
        return self.message


# =============================================================================
# ERRORES DE CONFIGURACIÓN (exit 2)
# =============================================================================

class ConfigError(CrossValError):
    """Parámetros o archivos de configuración inválidos"""

    exit_code = 2


class AliasConflictError(ConfigError):
    """Un alias apunta a dos nombres canónicos distintos"""

    def __init__(self, alias: str, canonicals):
        self.alias = alias
        self.canonicals = sorted(canonicals)
        super().__init__(
            f"Alias en conflicto: '{alias}' apunta a {', '.join(repr(c) for c in self.canonicals)}"
        )


# =============================================================================
# ERRORES DE DATOS (exit 3)
# =============================================================================

class DataError(CrossValError):
    """Datos de entrada inconsistentes o inutilizables"""

    exit_code = 3


class ParseError(DataError):
    """Línea mal formada en un archivo TSV"""

    def __init__(self, path, line_number: int, detail: str):
        self.path = str(path)
        self.line_number = line_number
        super().__init__(f"{self.path}:{line_number}: {detail}")


class EmptyGraphError(DataError):
    """El archivo no contiene ningún triplete"""


class UnknownRelationError(DataError):
    """Relación fuera del vocabulario del grafo"""


class UnmappedEntityError(DataError):
    """Entidad externa sin decisión en el mapa de alineamiento"""


class VocabularyMismatchError(DataError):
    """Checkpoint y datos de evaluación no comparten vocabulario"""


class SamplingError(DataError):
    """Se agotaron los reintentos al generar muestras negativas"""


class EvaluationError(DataError):
    """Conjunto de evaluación degenerado (sin negativos, K fuera de rango, etc.)"""


# =============================================================================
# ERRORES NUMÉRICOS (exit 4)
# =============================================================================

class NumericError(CrossValError):
    """Pérdida no finita durante el entrenamiento"""

    exit_code = 4

    def __init__(self, message: str, epoch: Optional[int] = None,
                 batch_id: Optional[int] = None):
        self.epoch = epoch
        self.batch_id = batch_id
        super().__init__(message)
