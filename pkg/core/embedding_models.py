# core/embedding_models.py
"""
Modelos de embeddings de grafos de conocimiento

Funciones de puntuación φ(e_s, r, e_o):
    DistMult  ⟨e_s, r, e_o⟩
    ComplEx   Re(⟨e_s, r, ē_o⟩)
    SimplE    ½(⟨h_{e_s}, r, t_{e_o}⟩ + ⟨h_{e_o}, r⁻¹, t_{e_s}⟩)
    TransE    −‖e_s + r − e_o‖₂   (solo línea base, pérdida de margen)

Todo en float64. Los gradientes son analíticos y se acumulan en un
GradientBuffer disperso (solo filas tocadas).
"""

from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from config import Config
from core.exceptions import ConfigError
from utils.logger import get_logger

logger = get_logger(__name__)


class ModelKind(str, Enum):
    DISTMULT = 'distmult'
    COMPLEX = 'complex'
    SIMPLE = 'simple'
    TRANSE = 'transe'

    @classmethod
    def parse(cls, value) -> 'ModelKind':
        if isinstance(value, ModelKind):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            valid = ', '.join(k.value for k in cls)
            raise ConfigError(f"Modelo desconocido '{value}' (válidos: {valid})")

    @property
    def multiplicative(self) -> bool:
        """La confianza σ(φ) solo tiene sentido con φ multiplicativa"""
        return self != ModelKind.TRANSE


# Tablas de parámetros por tipo de modelo, en orden de inicialización
ENTITY_TABLES = {
    ModelKind.DISTMULT: ('entity',),
    ModelKind.COMPLEX: ('entity_re', 'entity_im'),
    ModelKind.SIMPLE: ('entity_head', 'entity_tail'),
    ModelKind.TRANSE: ('entity',),
}

RELATION_TABLES = {
    ModelKind.DISTMULT: ('relation',),
    ModelKind.COMPLEX: ('relation_re', 'relation_im'),
    ModelKind.SIMPLE: ('relation', 'relation_inv'),
    ModelKind.TRANSE: ('relation',),
}


# =============================================================================
# FUNCIONES LOGÍSTICAS
# =============================================================================

def sigmoid(x):
    """σ(x) estable numéricamente"""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def log_sigmoid(x):
    """log σ(x)"""
    return -np.logaddexp(0.0, -np.asarray(x, dtype=np.float64))


def log_one_minus_sigmoid(x):
    """log(1 − σ(x))"""
    return -np.logaddexp(0.0, np.asarray(x, dtype=np.float64))


# =============================================================================
# BUFFER DE GRADIENTES
# =============================================================================

class GradientBuffer:
    """
    Acumulador disperso de gradientes por (tabla, fila)

    Los aportes se guardan en orden de llegada y se reducen siempre en ese
    mismo orden, así que el resultado es determinista.
    """

    def __init__(self):
        self._chunks: Dict[str, List[Tuple[np.ndarray, np.ndarray]]] = {}

    def add(self, table: str, rows, grad, scale: float = 1.0):
        rows = np.asarray(rows, dtype=np.int64).reshape(-1)
        grad = np.asarray(grad, dtype=np.float64).reshape(len(rows), -1)
        if scale != 1.0:
            grad = grad * scale
        self._chunks.setdefault(table, []).append((rows, grad))

    def extend(self, other: 'GradientBuffer', scale: float = 1.0):
        """Agrega los aportes de otro buffer multiplicados por scale"""
        for table, chunks in other._chunks.items():
            for rows, grad in chunks:
                self.add(table, rows, grad, scale)

    def tables(self) -> List[str]:
        return list(self._chunks)

    def touched(self) -> Dict[str, np.ndarray]:
        """Filas tocadas por tabla (únicas y ordenadas)"""
        return {
            table: np.unique(np.concatenate([rows for rows, _ in chunks]))
            for table, chunks in self._chunks.items()
        }

    def reduce(self) -> Dict[str, Tuple[np.ndarray, np.ndarray]]:
        """
        Suma los aportes por fila

        Returns:
            {tabla: (filas únicas ordenadas, gradiente (n_filas, dim))}
        """
        reduced = {}
        for table, chunks in self._chunks.items():
            all_rows = np.concatenate([rows for rows, _ in chunks])
            all_grads = np.concatenate([grad for _, grad in chunks], axis=0)
            unique, inverse = np.unique(all_rows, return_inverse=True)
            summed = np.zeros((len(unique), all_grads.shape[1]), dtype=np.float64)
            np.add.at(summed, inverse.reshape(-1), all_grads)
            reduced[table] = (unique, summed)
        return reduced

    def dense(self, model: 'EmbeddingModel') -> Dict[str, np.ndarray]:
        """Gradiente denso con la forma de cada tabla (para tests)"""
        out = {name: np.zeros_like(p) for name, p in model.params.items()}
        for table, (rows, grad) in self.reduce().items():
            out[table][rows] += grad
        return out

    def is_empty(self) -> bool:
        return not self._chunks

    def __bool__(self):
        return not self.is_empty()


# =============================================================================
# MODELO
# =============================================================================

class EmbeddingModel:
    """
    Parámetros de entidades y relaciones más la función de puntuación

    Las entidades alineadas tienen un único ID compartido, y por tanto una
    única fila en cada tabla de entidades.
    """

    def __init__(self, kind, dim: int, num_entities: int, num_relations: int,
                 params: Dict[str, np.ndarray], seed: Optional[int] = None):
        self.kind = ModelKind.parse(kind)
        self.dim = int(dim)
        self.num_entities = int(num_entities)
        self.num_relations = int(num_relations)
        self.seed = seed
        self.params = params

        expected = self.table_shapes()
        for name, shape in expected.items():
            if name not in params:
                raise ValueError(f"Falta la tabla de parámetros '{name}'")
            if params[name].shape != shape:
                raise ValueError(f"Tabla '{name}' con forma {params[name].shape}, se esperaba {shape}")
        extra = set(params) - set(expected)
        if extra:
            raise ValueError(f"Tablas inesperadas para {self.kind.value}: {sorted(extra)}")

    @classmethod
    def init(cls, kind, dim: int, num_entities: int, num_relations: int,
             seed: int) -> 'EmbeddingModel':
        """
        Inicializa parámetros i.i.d. uniformes en [−6/√d, 6/√d]

        Args:
            kind: distmult | complex | simple | transe
            dim: Dimensión d_e (recomendadas 32, 64, 128, 256)
            num_entities: Tamaño del vocabulario compartido de entidades
            num_relations: Tamaño del vocabulario compartido de relaciones
            seed: Semilla (misma semilla -> parámetros idénticos bit a bit)
        """
        kind = ModelKind.parse(kind)
        if num_entities < 1 or num_relations < 1:
            raise ConfigError(
                f"Se necesita al menos una entidad y una relación "
                f"({num_entities} entidades, {num_relations} relaciones)"
            )
        if dim < 1:
            raise ConfigError(f"Dimensión inválida: {dim}")
        if dim not in Config.RECOMMENDED_DIMS:
            logger.warning(f"Dimensión {dim} fuera de las recomendadas {Config.RECOMMENDED_DIMS}")

        bound = 6.0 / np.sqrt(dim)
        rng = np.random.default_rng(seed)

        params = {}
        for name in ENTITY_TABLES[kind]:
            params[name] = rng.uniform(-bound, bound, size=(num_entities, dim))
        for name in RELATION_TABLES[kind]:
            params[name] = rng.uniform(-bound, bound, size=(num_relations, dim))

        return cls(kind, dim, num_entities, num_relations, params, seed=seed)

    # =========================================================================
    # ESTRUCTURA
    # =========================================================================

    def table_shapes(self) -> Dict[str, Tuple[int, int]]:
        shapes = {name: (self.num_entities, self.dim) for name in ENTITY_TABLES[self.kind]}
        shapes.update({name: (self.num_relations, self.dim) for name in RELATION_TABLES[self.kind]})
        return shapes

    def entity_tables(self) -> Tuple[str, ...]:
        return ENTITY_TABLES[self.kind]

    def relation_tables(self) -> Tuple[str, ...]:
        return RELATION_TABLES[self.kind]

    def entity_slot(self, entity_id: int) -> Tuple[Tuple[str, int], ...]:
        """Slots de parámetros que lee una entidad: ((tabla, fila), ...)"""
        return tuple((name, int(entity_id)) for name in self.entity_tables())

    def copy(self) -> 'EmbeddingModel':
        params = {name: p.copy() for name, p in self.params.items()}
        return EmbeddingModel(self.kind, self.dim, self.num_entities, self.num_relations,
                              params, seed=self.seed)

    def equals(self, other: 'EmbeddingModel') -> bool:
        """Igualdad bit a bit de configuración y parámetros"""
        if (self.kind, self.dim, self.num_entities, self.num_relations) != \
                (other.kind, other.dim, other.num_entities, other.num_relations):
            return False
        return all(np.array_equal(self.params[n], other.params[n]) for n in self.params)

    def is_finite(self) -> bool:
        return all(np.isfinite(p).all() for p in self.params.values())

    # =========================================================================
    # PUNTUACIÓN
    # =========================================================================

    def _gather(self, triplets):
        t = np.asarray(triplets, dtype=np.int64).reshape(-1, 3)
        return t[:, 0], t[:, 1], t[:, 2]

    def score_batch(self, triplets) -> np.ndarray:
        """φ para un array (n, 3) de tripletes"""
        s, r, o = self._gather(triplets)
        p = self.params

        if self.kind == ModelKind.DISTMULT:
            return np.einsum('ij,ij,ij->i', p['entity'][s], p['relation'][r], p['entity'][o])

        if self.kind == ModelKind.COMPLEX:
            a_s, b_s = p['entity_re'][s], p['entity_im'][s]
            a_r, b_r = p['relation_re'][r], p['relation_im'][r]
            a_o, b_o = p['entity_re'][o], p['entity_im'][o]
            return (np.einsum('ij,ij,ij->i', a_s, a_r, a_o)
                    + np.einsum('ij,ij,ij->i', b_s, a_r, b_o)
                    + np.einsum('ij,ij,ij->i', a_s, b_r, b_o)
                    - np.einsum('ij,ij,ij->i', b_s, b_r, a_o))

        if self.kind == ModelKind.SIMPLE:
            forward = np.einsum('ij,ij,ij->i', p['entity_head'][s], p['relation'][r], p['entity_tail'][o])
            backward = np.einsum('ij,ij,ij->i', p['entity_head'][o], p['relation_inv'][r], p['entity_tail'][s])
            return 0.5 * (forward + backward)

        # TransE
        diff = p['entity'][s] + p['relation'][r] - p['entity'][o]
        return -np.sqrt(np.einsum('ij,ij->i', diff, diff))

    def score(self, t: Sequence[int]) -> float:
        """φ(e_s, r, e_o) de un triplete"""
        return float(self.score_batch(np.asarray([t]))[0])

    def probability_batch(self, triplets) -> np.ndarray:
        """P = σ(φ), con φ recortado a ±30 para quedar en (0, 1)"""
        clamp = Config.SCORE_CLAMP
        return sigmoid(np.clip(self.score_batch(triplets), -clamp, clamp))

    def probability(self, t: Sequence[int]) -> float:
        return float(self.probability_batch(np.asarray([t]))[0])

    # =========================================================================
    # GRADIENTES
    # =========================================================================

    def score_and_grad(self, triplets, upstream, grads: GradientBuffer) -> np.ndarray:
        """
        Acumula ∂φ/∂θ · upstream en grads para las filas de cada triplete

        Args:
            triplets: Array (n, 3)
            upstream: Array (n,) con ∂L/∂φ de cada triplete
            grads: Buffer donde acumular

        Returns:
            φ de cada triplete
        """
        s, r, o = self._gather(triplets)
        u = np.asarray(upstream, dtype=np.float64).reshape(-1, 1)
        p = self.params

        if self.kind == ModelKind.DISTMULT:
            e_s, w, e_o = p['entity'][s], p['relation'][r], p['entity'][o]
            grads.add('entity', s, u * w * e_o)
            grads.add('relation', r, u * e_s * e_o)
            grads.add('entity', o, u * e_s * w)
            return np.einsum('ij,ij,ij->i', e_s, w, e_o)

        if self.kind == ModelKind.COMPLEX:
            a_s, b_s = p['entity_re'][s], p['entity_im'][s]
            a_r, b_r = p['relation_re'][r], p['relation_im'][r]
            a_o, b_o = p['entity_re'][o], p['entity_im'][o]
            grads.add('entity_re', s, u * (a_r * a_o + b_r * b_o))
            grads.add('entity_im', s, u * (a_r * b_o - b_r * a_o))
            grads.add('relation_re', r, u * (a_s * a_o + b_s * b_o))
            grads.add('relation_im', r, u * (a_s * b_o - b_s * a_o))
            grads.add('entity_re', o, u * (a_s * a_r - b_s * b_r))
            grads.add('entity_im', o, u * (a_s * b_r + b_s * a_r))
            return (np.einsum('ij,ij,ij->i', a_s, a_r, a_o)
                    + np.einsum('ij,ij,ij->i', b_s, a_r, b_o)
                    + np.einsum('ij,ij,ij->i', a_s, b_r, b_o)
                    - np.einsum('ij,ij,ij->i', b_s, b_r, a_o))

        if self.kind == ModelKind.SIMPLE:
            h_s, t_s = p['entity_head'][s], p['entity_tail'][s]
            h_o, t_o = p['entity_head'][o], p['entity_tail'][o]
            w, w_inv = p['relation'][r], p['relation_inv'][r]
            half = 0.5 * u
            grads.add('entity_head', s, half * w * t_o)
            grads.add('entity_tail', o, half * h_s * w)
            grads.add('relation', r, half * h_s * t_o)
            grads.add('entity_head', o, half * w_inv * t_s)
            grads.add('entity_tail', s, half * h_o * w_inv)
            grads.add('relation_inv', r, half * h_o * t_s)
            return 0.5 * (np.einsum('ij,ij,ij->i', h_s, w, t_o)
                          + np.einsum('ij,ij,ij->i', h_o, w_inv, t_s))

        # TransE: ∂(−‖d‖)/∂d = −d/‖d‖; en ‖d‖ = 0 el subgradiente es 0
        diff = p['entity'][s] + p['relation'][r] - p['entity'][o]
        norm = np.sqrt(np.einsum('ij,ij->i', diff, diff))
        safe = np.where(norm > 0, norm, 1.0).reshape(-1, 1)
        direction = np.where(norm.reshape(-1, 1) > 0, diff / safe, 0.0)
        grads.add('entity', s, -u * direction)
        grads.add('relation', r, -u * direction)
        grads.add('entity', o, u * direction)
        return -norm

    def l2_penalty_and_grad(self, touched: Dict[str, np.ndarray], coeff: float,
                            grads: Optional[GradientBuffer] = None) -> float:
        """
        coeff·‖θ‖² sobre las filas tocadas, y 2·coeff·θ a sus gradientes

        Args:
            touched: {tabla: filas} (normalmente GradientBuffer.touched())
            coeff: Coeficiente ≥ 0
            grads: Buffer donde acumular (opcional)
        """
        if coeff < 0:
            raise ValueError(f"Coeficiente L2 negativo: {coeff}")
        if coeff == 0:
            return 0.0

        penalty = 0.0
        for table, rows in touched.items():
            values = self.params[table][rows]
            penalty += coeff * float(np.einsum('ij,ij->', values, values))
            if grads is not None:
                grads.add(table, rows, 2.0 * coeff * values)
        return penalty

    def __repr__(self):
        return (f"<EmbeddingModel {self.kind.value} d={self.dim} "
                f"entidades={self.num_entities} relaciones={self.num_relations}>")


def score(m: EmbeddingModel, t: Sequence[int]) -> float:
    return m.score(t)


def probability(m: EmbeddingModel, t: Sequence[int]) -> float:
    return m.probability(t)
