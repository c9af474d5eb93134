# core/negative_sampling.py
"""
Muestreo negativo convencional y cross-KG

- Convencional: corromper sujeto u objeto de un triplete observado
  (suposición de mundo cerrado local)
- Reemplazo de relación: (e_s², r¹, e_o²) con r¹ ⊥ r²
- Reemplazo de entidades: (e_s¹, r², e_o¹) con (e_s¹, e_o¹) un par de r¹ ⊥ r²

Dos relaciones r¹ ∈ G1 y r² ∈ G2 son negativas entre sí (r¹ ⊥ r²) cuando no
comparten ningún par de entidades. Ningún negativo generado existe en G1 ni en G2.
"""

from dataclasses import dataclass
from typing import Dict, FrozenSet, List, Optional, Sequence, Set, Tuple

import numpy as np

from config import Config
from core.exceptions import SamplingError, UnknownRelationError
from core.graph_store import EntityPair, KnowledgeGraph, Origin, Triplet
from utils.logger import get_logger

logger = get_logger(__name__)


# =============================================================================
# FILTRO DE EXISTENCIA
# =============================================================================

class TripletFilter:
    """
    Pertenencia vectorizada a la unión de varios grafos

    Codifica cada triplete como un entero (s·R + r)·N + o sobre el espacio
    compartido y busca en un array ordenado.
    """

    def __init__(self, graphs: Sequence[KnowledgeGraph], num_entities: int, num_relations: int):
        self.num_entities = int(num_entities)
        self.num_relations = int(num_relations)

        chunks = [self.encode(g.triplets) for g in graphs if len(g)]
        keys = np.concatenate(chunks) if chunks else np.empty(0, dtype=np.int64)
        self._keys = np.unique(keys)

    def encode(self, triplets: np.ndarray) -> np.ndarray:
        t = np.asarray(triplets, dtype=np.int64).reshape(-1, 3)
        return (t[:, 0] * self.num_relations + t[:, 1]) * self.num_entities + t[:, 2]

    def contains_many(self, triplets: np.ndarray) -> np.ndarray:
        """Máscara booleana con la forma de triplets[..., 0]"""
        triplets = np.asarray(triplets, dtype=np.int64)
        shape = triplets.shape[:-1]
        keys = self.encode(triplets)
        if len(self._keys) == 0:
            return np.zeros(shape, dtype=bool)
        pos = np.searchsorted(self._keys, keys)
        pos = np.minimum(pos, len(self._keys) - 1)
        return (self._keys[pos] == keys).reshape(shape)

    def contains(self, t: Sequence[int]) -> bool:
        return bool(self.contains_many(np.asarray([t]))[0])

    def __len__(self):
        return len(self._keys)


# =============================================================================
# RELACIONES NEGATIVAS CROSS-KG
# =============================================================================

def overlapping_pairs(r1: int, r2: int, g1: KnowledgeGraph, g2: KnowledgeGraph) -> Set[EntityPair]:
    """O(r¹, r²): pares (sujeto, objeto) que satisfacen r¹ en G1 y r² en G2"""
    a = g1.entity_pairs(r1)
    b = g2.entity_pairs(r2)
    if len(a) > len(b):
        a, b = b, a
    return {p for p in a if p in b}


def _disjoint(a: FrozenSet[EntityPair], b: FrozenSet[EntityPair]) -> bool:
    # El conjunto menor sondea al mayor
    if len(a) > len(b):
        a, b = b, a
    return not any(p in b for p in a)


@dataclass
class NegativeRelationIndex:
    """
    N(r) para cada relación de ambos grafos

    Invariante: r¹ ∈ N(r²) ⇔ r² ∈ N(r¹) ⇔ O(r¹, r²) = ∅
    """
    target_relations: Tuple[int, ...]
    external_relations: Tuple[int, ...]
    negatives_of_external: Dict[int, Tuple[int, ...]]
    negatives_of_target: Dict[int, Tuple[int, ...]]
    entity_replacement_candidates: Dict[int, Tuple[int, ...]]

    def negatives(self, r: int) -> Tuple[int, ...]:
        """N(r) para una relación de cualquiera de los dos grafos"""
        if r in self.negatives_of_external:
            return self.negatives_of_external[r]
        if r in self.negatives_of_target:
            return self.negatives_of_target[r]
        raise UnknownRelationError(f"Relación {r} fuera del índice de relaciones negativas")

    def pair_count(self) -> int:
        return sum(len(v) for v in self.negatives_of_external.values())


def build_negative_relation_index(g1: KnowledgeGraph, g2: KnowledgeGraph) -> NegativeRelationIndex:
    """
    Calcula N(r) para todas las relaciones (una vez, antes de entrenar)

    Args:
        g1: Grafo objetivo en el espacio compartido
        g2: Grafo externo en el espacio compartido

    Returns:
        Índice simétrico de relaciones negativas
    """
    target = tuple(r for r in range(g1.num_relations) if g1.relations.origin_of(r) == Origin.TARGET)
    external = tuple(r for r in range(g2.num_relations) if g2.relations.origin_of(r) == Origin.EXTERNAL)

    neg_ext: Dict[int, List[int]] = {r2: [] for r2 in external}
    neg_tgt: Dict[int, List[int]] = {r1: [] for r1 in target}

    for r2 in external:
        pairs2 = g2.entity_pairs(r2)
        for r1 in target:
            if _disjoint(g1.entity_pairs(r1), pairs2):
                neg_ext[r2].append(r1)
                neg_tgt[r1].append(r2)

    candidates = {
        r2: tuple(r1 for r1 in r1s if g1.entity_pairs(r1))
        for r2, r1s in neg_ext.items()
    }

    index = NegativeRelationIndex(
        target_relations=target,
        external_relations=external,
        negatives_of_external={r: tuple(v) for r, v in neg_ext.items()},
        negatives_of_target={r: tuple(v) for r, v in neg_tgt.items()},
        entity_replacement_candidates=candidates,
    )

    logger.info(f"Índice de relaciones negativas: {index.pair_count()} pares r¹ ⊥ r² "
                f"sobre {len(target)}×{len(external)} combinaciones")
    return index


# =============================================================================
# GENERADORES
# =============================================================================

def corrupt_conventional(triplets, k: int, rng: np.random.Generator,
                         triplet_filter: TripletFilter, num_entities: int,
                         max_retries: int = Config.MAX_SAMPLING_RETRIES) -> np.ndarray:
    """
    k negativos por triplete cambiando sujeto u objeto

    Lado elegido uniformemente, entidad de reemplazo uniforme sobre el
    vocabulario compartido; los que caen en algún grafo se vuelven a sortear.

    Args:
        triplets: Triplete o array (B, 3)
        k: Negativos por triplete (≥ 1)

    Returns:
        Array (B, k, 3)
    """
    if k < 1:
        raise ValueError(f"k debe ser ≥ 1: {k}")

    base = np.asarray(triplets, dtype=np.int64).reshape(-1, 3)
    out = np.repeat(base[:, None, :], k, axis=1)
    pending = np.ones(out.shape[:2], dtype=bool)

    for _ in range(max_retries + 1):
        rows, cols = np.nonzero(pending)
        if len(rows) == 0:
            break

        side = np.where(rng.random(len(rows)) < 0.5, 0, 2)
        replacement = rng.integers(0, num_entities, size=len(rows))

        candidate = base[rows].copy()
        candidate[np.arange(len(rows)), side] = replacement
        out[rows, cols] = candidate

        unchanged = candidate[np.arange(len(rows)), side] == base[rows, side]
        observed = triplet_filter.contains_many(candidate)
        pending[rows, cols] = unchanged | observed

    if not pending.any():
        return out

    bad = int(pending.sum())
    raise SamplingError(
        f"No se encontraron negativos convencionales tras {max_retries} reintentos "
        f"({bad} muestras pendientes); el grafo es demasiado denso"
    )


def _check_external(t2: Triplet, g2: KnowledgeGraph):
    if not g2.contains(t2):
        raise SamplingError(
            f"El muestreo cross-KG solo acepta tripletes del grafo externo; recibido {tuple(t2)}"
        )


def replace_relation(t2: Sequence[int], idx: NegativeRelationIndex, rng: np.random.Generator,
                     triplet_filter: TripletFilter, g2: KnowledgeGraph,
                     max_retries: int = Config.MAX_SAMPLING_RETRIES) -> Optional[Triplet]:
    """
    (e_s², r², e_o²) -> (e_s², r¹, e_o²) con r¹ uniforme en N(r²)

    Returns:
        Triplete negativo, o None si no hay candidato
    """
    t2 = Triplet(*(int(x) for x in t2))
    _check_external(t2, g2)

    candidates = idx.negatives_of_external.get(t2.relation, ())
    if not candidates:
        return None

    for _ in range(max_retries + 1):
        r1 = candidates[int(rng.integers(len(candidates)))]
        negative = Triplet(t2.subject, r1, t2.object)
        if not triplet_filter.contains(negative):
            return negative

    return None


def replace_entities(t2: Sequence[int], idx: NegativeRelationIndex, g1: KnowledgeGraph,
                     rng: np.random.Generator, triplet_filter: TripletFilter, g2: KnowledgeGraph,
                     pair_lists: Optional[Dict[int, np.ndarray]] = None,
                     max_retries: int = Config.MAX_SAMPLING_RETRIES) -> Optional[Triplet]:
    """
    (e_s², r², e_o²) -> (e_s¹, r², e_o¹)

    Se elige r¹ uniforme entre los miembros de N(r²) con pares en G1 y luego
    un único par (e_s¹, e_o¹) uniforme de entity_pairs(G1, r¹).

    Returns:
        Triplete negativo, o None si no hay candidato
    """
    t2 = Triplet(*(int(x) for x in t2))
    _check_external(t2, g2)

    eligible = idx.entity_replacement_candidates.get(t2.relation, ())
    if not eligible:
        return None

    for _ in range(max_retries + 1):
        r1 = eligible[int(rng.integers(len(eligible)))]
        pairs = pair_lists[r1] if pair_lists is not None else _sorted_pairs(g1, r1)
        s, o = pairs[int(rng.integers(len(pairs)))]
        negative = Triplet(int(s), t2.relation, int(o))
        if not triplet_filter.contains(negative):
            return negative

    return None


def _sorted_pairs(g: KnowledgeGraph, r: int) -> np.ndarray:
    pairs = sorted(g.entity_pairs(r))
    return np.asarray(pairs, dtype=np.int64).reshape(-1, 2)


def spawn_generators(seed: int, workers: int) -> List[np.random.Generator]:
    """Un generador independiente por worker; la división depende solo del índice"""
    children = np.random.SeedSequence(seed).spawn(workers)
    return [np.random.default_rng(c) for c in children]


# =============================================================================
# LOTES DE NEGATIVOS
# =============================================================================

@dataclass
class NegativeBatch:
    """
    Negativos de un lote de positivos

    conventional: (B, k, 3)
    relation_replaced / entity_replaced: (B, m, 3) con máscara (B, m) de validez
    """
    conventional: np.ndarray
    relation_replaced: np.ndarray
    relation_mask: np.ndarray
    entity_replaced: np.ndarray
    entity_mask: np.ndarray

    @classmethod
    def conventional_only(cls, conventional: np.ndarray) -> 'NegativeBatch':
        b = conventional.shape[0]
        empty = np.zeros((b, 0, 3), dtype=np.int64)
        no_mask = np.zeros((b, 0), dtype=bool)
        return cls(conventional, empty, no_mask, empty.copy(), no_mask.copy())

    def all_triplets(self) -> np.ndarray:
        """Todos los negativos válidos aplanados a (n, 3)"""
        parts = [self.conventional.reshape(-1, 3),
                 self.relation_replaced[self.relation_mask],
                 self.entity_replaced[self.entity_mask]]
        return np.concatenate(parts, axis=0)


class NegativeSampler:
    """
    Genera los negativos de cada lote de entrenamiento

    Mantiene el filtro de existencia sobre ambos grafos y las listas de pares
    por relación de G1 para el reemplazo de entidades.
    """

    def __init__(self, g1: KnowledgeGraph, g2: Optional[KnowledgeGraph],
                 index: Optional[NegativeRelationIndex],
                 rng: np.random.Generator,
                 k_conventional: int = Config.NEG_CONVENTIONAL,
                 cross: bool = Config.NEG_CROSS,
                 relation_replaced: int = Config.NEG_RELATION_REPLACED,
                 entity_replaced: int = Config.NEG_ENTITY_REPLACED,
                 max_retries: int = Config.MAX_SAMPLING_RETRIES):
        self.g1 = g1
        self.g2 = g2
        self.index = index
        self.rng = rng
        self.k = k_conventional
        self.cross = cross and g2 is not None and index is not None
        self.m_relation = relation_replaced
        self.m_entity = entity_replaced
        self.max_retries = max_retries

        self.num_entities = g1.num_entities
        graphs = [g1] + ([g2] if g2 is not None else [])
        self.filter = TripletFilter(graphs, g1.num_entities, g1.num_relations)

        self.pair_lists: Dict[int, np.ndarray] = {}
        if self.cross:
            for r1 in index.target_relations:
                if g1.entity_pairs(r1):
                    self.pair_lists[r1] = _sorted_pairs(g1, r1)

        # Contadores de categorías sin candidato (se reinician por época)
        self.no_candidate = {'relation': 0, 'entity': 0}

    def reset_counters(self):
        self.no_candidate = {'relation': 0, 'entity': 0}

    def conventional(self, positives: np.ndarray) -> np.ndarray:
        return corrupt_conventional(positives, self.k, self.rng, self.filter,
                                    self.num_entities, self.max_retries)

    def sample_target(self, positives: np.ndarray) -> NegativeBatch:
        """Negativos convencionales para un lote de G1"""
        return NegativeBatch.conventional_only(self.conventional(positives))

    def sample_external(self, positives: np.ndarray) -> NegativeBatch:
        """Negativos convencionales y cross-KG para un lote de G2"""
        conventional = self.conventional(positives)
        if not self.cross:
            return NegativeBatch.conventional_only(conventional)

        b = len(positives)
        rel = np.zeros((b, self.m_relation, 3), dtype=np.int64)
        rel_mask = np.zeros((b, self.m_relation), dtype=bool)
        ent = np.zeros((b, self.m_entity, 3), dtype=np.int64)
        ent_mask = np.zeros((b, self.m_entity), dtype=bool)

        for i, t2 in enumerate(positives.tolist()):
            for j in range(self.m_relation):
                negative = replace_relation(t2, self.index, self.rng, self.filter, self.g2,
                                            self.max_retries)
                if negative is None:
                    self.no_candidate['relation'] += 1
                    continue
                rel[i, j] = negative
                rel_mask[i, j] = True

            for j in range(self.m_entity):
                negative = replace_entities(t2, self.index, self.g1, self.rng, self.filter,
                                            self.g2, self.pair_lists, self.max_retries)
                if negative is None:
                    self.no_candidate['entity'] += 1
                    continue
                ent[i, j] = negative
                ent_mask[i, j] = True

        return NegativeBatch(conventional, rel, rel_mask, ent, ent_mask)
