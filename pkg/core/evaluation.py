# core/evaluation.py
"""
Validación de tripletes por ranking

Los tripletes del conjunto de evaluación se ordenan por φ ascendente: los
primeros son los más sospechosos de ser falsos. Métricas sobre las
posiciones de los negativos D⁻:

    Mean Raw Rank       (1/|D⁻|) Σ rank_i
    Mean Filtered Rank  (1/|D⁻|) Σ (rank_i − i), ranks de D⁻ ordenados
    Recall of Ranking   fracción de D⁻ dentro del top |D⁻|
    Precision@K         |{negativos con rank ≤ K}| / K
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from config import Config
from core.exceptions import EvaluationError, VocabularyMismatchError
from core.graph_store import KnowledgeGraph, Triplet, Vocabulary
from core.negative_sampling import TripletFilter, corrupt_conventional
from core.trainer import LabeledTriplet
from utils.logger import get_logger

logger = get_logger(__name__)

POSITIVE = 1
NEGATIVE = -1

SCORE_CHUNK = 65536


# =============================================================================
# CONJUNTO DE EVALUACIÓN
# =============================================================================

@dataclass
class EvaluationSet:
    """
    D = D⁺ ∪ D⁻ en orden de ingesta

    El orden importa: los empates de puntuación se rompen por índice.
    """
    triplets: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.triplets = np.asarray(self.triplets, dtype=np.int64).reshape(-1, 3)
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)

        if len(self.triplets) != len(self.labels):
            raise EvaluationError(
                f"{len(self.triplets)} tripletes pero {len(self.labels)} etiquetas"
            )
        bad = ~np.isin(self.labels, (POSITIVE, NEGATIVE))
        if bad.any():
            raise EvaluationError(f"Etiquetas inválidas (se esperaba ±1): {sorted(set(self.labels[bad].tolist()))}")

        positives = {tuple(t) for t in self.positives.tolist()}
        clash = [tuple(t) for t in self.negatives.tolist() if tuple(t) in positives]
        if clash:
            raise EvaluationError(f"Tripletes etiquetados a la vez como +1 y −1: {clash[:5]}")

    @classmethod
    def from_parts(cls, positives, negatives) -> 'EvaluationSet':
        """D⁺ primero, después D⁻"""
        positives = np.asarray(positives, dtype=np.int64).reshape(-1, 3)
        negatives = np.asarray(negatives, dtype=np.int64).reshape(-1, 3)
        labels = np.concatenate([np.full(len(positives), POSITIVE), np.full(len(negatives), NEGATIVE)])
        return cls(np.concatenate([positives, negatives]), labels)

    @classmethod
    def from_labeled(cls, items: Iterable[LabeledTriplet]) -> 'EvaluationSet':
        items = list(items)
        triplets = [tuple(item.triplet) for item in items]
        return cls(np.asarray(triplets, dtype=np.int64).reshape(-1, 3),
                   [item.label for item in items])

    @property
    def positives(self) -> np.ndarray:
        return self.triplets[self.labels == POSITIVE]

    @property
    def negatives(self) -> np.ndarray:
        return self.triplets[self.labels == NEGATIVE]

    @property
    def num_negatives(self) -> int:
        return int((self.labels == NEGATIVE).sum())

    def labeled(self) -> List[LabeledTriplet]:
        return [LabeledTriplet(Triplet(*t), int(y))
                for t, y in zip(self.triplets.tolist(), self.labels.tolist())]

    def subset(self, indices) -> 'EvaluationSet':
        indices = np.asarray(indices, dtype=np.int64)
        return EvaluationSet(self.triplets[indices], self.labels[indices])

    def check_ids(self, num_entities: int, num_relations: int):
        """Todos los IDs deben existir en el modelo"""
        if not len(self.triplets):
            return
        ent = self.triplets[:, [0, 2]]
        rel = self.triplets[:, 1]
        if ent.min() < 0 or ent.max() >= num_entities or rel.min() < 0 or rel.max() >= num_relations:
            raise VocabularyMismatchError(
                f"El conjunto de evaluación referencia IDs fuera del modelo "
                f"({num_entities} entidades, {num_relations} relaciones)"
            )

    def __len__(self):
        return len(self.triplets)


def resolve_labeled(rows: Sequence[Tuple[str, str, str, int]], entities: Vocabulary,
                    relations: Vocabulary) -> EvaluationSet:
    """
    Traduce filas (sujeto, relación, objeto, etiqueta) a IDs del espacio compartido

    Raises:
        VocabularyMismatchError: si algún nombre no existe en los vocabularios
    """
    triplets, labels, missing = [], [], []
    for s, r, o, label in rows:
        ids = (entities.get(s), relations.get(r), entities.get(o))
        if None in ids:
            missing.append((s, r, o))
            continue
        triplets.append(ids)
        labels.append(label)

    if missing:
        raise VocabularyMismatchError(
            f"{len(missing)} tripletes de evaluación con nombres desconocidos, p. ej. {missing[:3]}"
        )
    return EvaluationSet(np.asarray(triplets, dtype=np.int64).reshape(-1, 3), labels)


# =============================================================================
# RANKING
# =============================================================================

@dataclass
class RankingReport:
    """
    Ranking de un conjunto de evaluación

    ranks[i] es la posición (1..|D|) del triplete i; order lista los índices
    de D de más sospechoso a menos.
    """
    triplets: np.ndarray
    scores: np.ndarray
    ranks: np.ndarray
    labels: Optional[np.ndarray] = None
    metrics: Dict = field(default_factory=dict)

    @property
    def order(self) -> np.ndarray:
        return np.argsort(self.ranks, kind='stable')

    def negative_ranks(self) -> np.ndarray:
        """Ranks de D⁻ ordenados ascendentemente"""
        if self.labels is None:
            raise EvaluationError("El ranking no tiene etiquetas")
        return np.sort(self.ranks[self.labels == NEGATIVE])

    def to_rows(self, entities: Optional[Vocabulary] = None,
                relations: Optional[Vocabulary] = None) -> List[Dict]:
        """Filas del reporte en orden de rank"""
        rows = []
        for i in self.order.tolist():
            s, r, o = self.triplets[i].tolist()
            row = {
                's': entities.name_of(s) if entities is not None else s,
                'r': relations.name_of(r) if relations is not None else r,
                'o': entities.name_of(o) if entities is not None else o,
                'score': float(self.scores[i]),
                'rank': int(self.ranks[i]),
            }
            if self.labels is not None:
                row['label'] = int(self.labels[i])
            rows.append(row)
        return rows

    def __len__(self):
        return len(self.ranks)


def score_triplets(model, triplets, threads: int = 1) -> np.ndarray:
    """
    φ de cada triplete, por bloques

    Con threads > 1 los bloques se puntúan en paralelo; el resultado se
    concatena en el orden original.
    """
    triplets = np.asarray(triplets, dtype=np.int64).reshape(-1, 3)
    chunks = [triplets[i:i + SCORE_CHUNK] for i in range(0, len(triplets), SCORE_CHUNK)]
    if not chunks:
        return np.zeros(0, dtype=np.float64)

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(model.score_batch, chunks))
    else:
        parts = [model.score_batch(c) for c in chunks]
    return np.concatenate(parts)


def rank_scores(scores, labels=None, triplets=None) -> RankingReport:
    """Ranking ascendente por puntuación; empates por índice de ingesta"""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    order = np.argsort(scores, kind='stable')
    ranks = np.empty(len(scores), dtype=np.int64)
    ranks[order] = np.arange(1, len(scores) + 1)

    if triplets is None:
        triplets = np.zeros((len(scores), 3), dtype=np.int64)
    return RankingReport(
        triplets=np.asarray(triplets, dtype=np.int64).reshape(-1, 3),
        scores=scores,
        ranks=ranks,
        labels=None if labels is None else np.asarray(labels, dtype=np.int64),
    )


def rank(model, d: EvaluationSet, threads: int = 1) -> RankingReport:
    """
    Puntúa y ordena todos los tripletes de D

    Args:
        model: EmbeddingModel entrenado
        d: Conjunto de evaluación (no vacío)
        threads: Hilos para puntuar

    Returns:
        RankingReport sin métricas
    """
    if len(d) == 0:
        raise EvaluationError("El conjunto de evaluación está vacío")
    d.check_ids(model.num_entities, model.num_relations)
    scores = score_triplets(model, d.triplets, threads)
    return rank_scores(scores, d.labels, d.triplets)


# =============================================================================
# MÉTRICAS
# =============================================================================

def _negative_ranks(source) -> np.ndarray:
    if isinstance(source, RankingReport):
        ranks = source.negative_ranks()
    else:
        ranks = np.sort(np.asarray(source, dtype=np.int64).reshape(-1))
    if len(ranks) == 0:
        raise EvaluationError("D⁻ está vacío: las métricas de ranking no están definidas")
    return ranks


def mean_raw_rank(source) -> float:
    """(1/|D⁻|) Σ rank_i"""
    ranks = _negative_ranks(source)
    return float(ranks.sum()) / len(ranks)


def mean_filtered_rank(source) -> float:
    """(1/|D⁻|) Σ (rank_i − i), con i la posición en los ranks ordenados"""
    ranks = _negative_ranks(source)
    positions = np.arange(1, len(ranks) + 1)
    return float((ranks - positions).sum()) / len(ranks)


def precision_at(source, k: int, total: Optional[int] = None) -> float:
    """
    Fracción de negativos en el top K

    Args:
        source: RankingReport o ranks de D⁻
        k: 1 ≤ K ≤ |D|
        total: |D| cuando source son ranks sueltos
    """
    ranks = _negative_ranks(source)
    if total is None and isinstance(source, RankingReport):
        total = len(source)
    if k < 1 or (total is not None and k > total):
        raise EvaluationError(f"K fuera de rango: {k} (|D| = {total})")
    return float((ranks <= k).sum()) / k


def recall_of_ranking(source) -> float:
    """Precision@|D⁻|"""
    ranks = _negative_ranks(source)
    return precision_at(ranks, len(ranks))


def default_precision_k(size: int) -> Tuple[int, ...]:
    """
    K por defecto: (100, 200, 500) en tests de 2000 o más tripletes; en tests
    menores, las mismas fracciones de |D|
    """
    reference = Config.PRECISION_K_REFERENCE_SIZE
    if size >= reference:
        return tuple(k for k in Config.PRECISION_K if k <= size)
    ks = {max(1, int(round(k * size / reference))) for k in Config.PRECISION_K}
    return tuple(sorted(k for k in ks if k <= size))


def summarize(report: RankingReport, ks: Optional[Sequence[int]] = None) -> Dict:
    """Calcula las cuatro familias de métricas y las guarda en report.metrics"""
    ks = tuple(ks) if ks else default_precision_k(len(report))
    metrics = {
        'recall': recall_of_ranking(report),
        'mean_rank_filter': mean_filtered_rank(report),
        'mean_rank_raw': mean_raw_rank(report),
        'precision_at': {str(k): precision_at(report, k) for k in ks},
    }
    report.metrics = metrics
    return metrics


def evaluate(model, d: EvaluationSet, ks: Optional[Sequence[int]] = None,
             threads: int = 1) -> RankingReport:
    """rank + summarize"""
    report = rank(model, d, threads)
    summarize(report, ks)
    m = report.metrics
    logger.info(f"Evaluación sobre {len(d)} tripletes ({d.num_negatives} negativos): "
                f"recall {m['recall']:.4f} | rank filtrado {m['mean_rank_filter']:.2f} | "
                f"rank bruto {m['mean_rank_raw']:.2f}")
    return report


# =============================================================================
# INYECCIÓN DE ERRORES Y PARTICIÓN
# =============================================================================

def inject_errors(g: KnowledgeGraph, n: int, rng: np.random.Generator,
                  max_retries: int = Config.MAX_SAMPLING_RETRIES) -> Tuple[np.ndarray, np.ndarray]:
    """
    Corrompe n tripletes observados cambiando sujeto u objeto

    Los corrompidos se comprueban contra el grafo completo.

    Returns:
        (𝓛: n tripletes originales, 𝓖⁻: n tripletes corrompidos, alineados por fila)
    """
    if n < 0 or n > len(g):
        raise EvaluationError(f"No se pueden corromper {n} tripletes de un grafo con {len(g)}")
    if n == 0:
        empty = np.empty((0, 3), dtype=np.int64)
        return empty, empty.copy()

    chosen = np.sort(rng.choice(len(g), size=n, replace=False))
    positives = g.triplets[chosen].copy()

    triplet_filter = TripletFilter([g], g.num_entities, g.num_relations)
    corrupted = corrupt_conventional(positives, 1, rng, triplet_filter, g.num_entities, max_retries)

    logger.info(f"Inyectados {n} errores en {g.tag.value}")
    return positives, corrupted[:, 0, :]


def split_eval(d: EvaluationSet, fraction: float = Config.TUNING_FRACTION,
               rng: Optional[np.random.Generator] = None) -> Tuple[EvaluationSet, EvaluationSet]:
    """
    Partición estratificada (ajuste, test) que conserva la proporción de etiquetas

    Cada parte conserva el orden de ingesta relativo.
    """
    if not 0.0 < fraction < 1.0:
        raise EvaluationError(f"La fracción de ajuste debe estar en (0, 1): {fraction}")
    rng = rng if rng is not None else np.random.default_rng(0)

    tuning_idx = []
    for label in (POSITIVE, NEGATIVE):
        members = np.flatnonzero(d.labels == label)
        take = int(round(fraction * len(members)))
        if len(members):
            tuning_idx.append(rng.permutation(members)[:take])

    tuning = np.sort(np.concatenate(tuning_idx)) if tuning_idx else np.empty(0, dtype=np.int64)
    test = np.setdiff1d(np.arange(len(d)), tuning)

    if len(tuning) == 0 or len(test) == 0:
        raise EvaluationError(
            f"Partición degenerada: {len(tuning)} de ajuste y {len(test)} de test "
            f"(fracción {fraction}, {len(d)} tripletes)"
        )
    return d.subset(tuning), d.subset(test)
