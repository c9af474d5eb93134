# core/synthetic.py
"""
Pares de grafos sintéticos con verdad conocida

- running_example(): el ejemplo de Ciudad de México / Washington / Obama
- random_pair(): grafos pequeños aleatorios para oráculos de fuerza bruta
- synthetic_pair(): un "mundo" latente del que se muestrean un grafo
  objetivo ruidoso y un grafo externo limpio con entidades solapadas
"""

from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Dict, List, Set, Tuple

import numpy as np

from core.graph_store import GraphTag, KnowledgeGraph, build_graph, write_tsv_rows
from utils.logger import get_logger

logger = get_logger(__name__)

Row = Tuple[str, str, str]


def running_example() -> Tuple[List[Row], List[Row]]:
    """
    Tripletes (objetivo, externo) del ejemplo de referencia

    N(livesin) = {locatedin, hasneighbor} y O(locatedat, locatedin) = {(Washington, USA)}
    """
    target = [
        ('Mexico City', 'locatedat', 'USA'),
        ('Washington', 'locatedat', 'USA'),
        ('Obama', 'livesin', 'Washington'),
    ]
    external = [
        ('Washington', 'locatedin', 'USA'),
        ('Mexico', 'hasneighbor', 'USA'),
        ('Mexico City', 'locatedin', 'Mexico'),
    ]
    return target, external


def running_example_graphs() -> Tuple[KnowledgeGraph, KnowledgeGraph]:
    target, external = running_example()
    return build_graph(target, GraphTag.TARGET), build_graph(external, GraphTag.EXTERNAL)


def random_pair(num_entities: int, num_relations: int, num_triplets: int,
                rng: np.random.Generator, overlap: float = 0.5
                ) -> Tuple[KnowledgeGraph, KnowledgeGraph]:
    """
    Dos grafos aleatorios pequeños

    Ambos toman nombres de entidad de un mismo conjunto, así que una fracción
    aproximada `overlap` de las entidades externas coincide con las objetivo.
    Las relaciones tienen nombres propios en cada grafo.
    """
    names = [f"e{i}" for i in range(num_entities)]
    shared = max(1, int(round(overlap * num_entities)))
    external_names = names[:shared] + [f"x{i}" for i in range(num_entities - shared)]

    def sample(pool: List[str], prefix: str, tag: GraphTag) -> KnowledgeGraph:
        n_rel = int(rng.integers(1, num_relations + 1))
        s = rng.integers(0, len(pool), size=num_triplets)
        r = rng.integers(0, n_rel, size=num_triplets)
        o = rng.integers(0, len(pool), size=num_triplets)
        rows = [(pool[a], f"{prefix}{b}", pool[c]) for a, b, c in zip(s.tolist(), r.tolist(), o.tolist())]
        return build_graph(rows, tag)

    return sample(names, 'r', GraphTag.TARGET), sample(external_names, 'q', GraphTag.EXTERNAL)


# =============================================================================
# MUNDO LATENTE
# =============================================================================

@dataclass
class SyntheticConfig:
    target_entities: int = 300
    target_relations: int = 10
    target_triplets: int = 3000
    error_rate: float = 0.05
    external_entities: int = 500
    external_relations: int = 15
    external_triplets: int = 5000
    overlap: float = 0.4  # Fracción de las entidades externas que también están en el objetivo
    clusters: int = 4
    relations_per_block: int = 2  # Relaciones hermanas que se reparten los pares de un bloque
    latent_dim: int = 4
    true_fraction: float = 0.3
    popularity_skew: float = 1.0  # σ del log-peso de cada entidad al muestrear hechos
    external_focus: float = 3.0  # Peso extra de los hechos externos por cada extremo compartido


@dataclass
class SyntheticPair:
    """Filas de nombres de ambos grafos y el conjunto de evaluación etiquetado"""
    target_rows: List[Row]
    external_rows: List[Row]
    eval_rows: List[Tuple[str, str, str, int]]
    config: SyntheticConfig
    seed: int
    overlap_names: List[str] = field(default_factory=list)

    def graphs(self) -> Tuple[KnowledgeGraph, KnowledgeGraph]:
        return (build_graph(self.target_rows, GraphTag.TARGET, source='synthetic'),
                build_graph(self.external_rows, GraphTag.EXTERNAL, source='synthetic'))

    def summary(self) -> Dict:
        negatives = sum(1 for row in self.eval_rows if row[3] < 0)
        return {
            'seed': self.seed,
            'target_triplets': len(self.target_rows),
            'external_triplets': len(self.external_rows),
            'overlapping_entities': len(self.overlap_names),
            'eval_triplets': len(self.eval_rows),
            'eval_negatives': negatives,
            'config': asdict(self.config),
        }


class _World:
    """
    Entidades con cluster y vector latente; relaciones sobre bloques de clusters

    (s, w, o) es verdadero si s ∈ cluster_cabeza(w), o ∈ cluster_cola(w),
    ⟨u_s, d_w, u_o⟩ está en la fracción superior del bloque y ninguna relación
    hermana (mismo bloque) puntúa más alto. Las hermanas nunca comparten pares.
    """

    def __init__(self, num_entities: int, num_relations: int, config: SyntheticConfig,
                 rng: np.random.Generator):
        self.cluster = rng.integers(0, config.clusters, size=num_entities)
        self.latent = rng.normal(size=(num_entities, config.latent_dim))
        self.diag = rng.normal(size=(num_relations, config.latent_dim))

        per_block = max(1, config.relations_per_block)
        n_blocks = -(-num_relations // per_block)
        blocks = rng.permutation(config.clusters ** 2)
        blocks = blocks[np.arange(n_blocks) % len(blocks)]
        self.block = np.empty(num_relations, dtype=np.int64)
        self.block[rng.permutation(num_relations)] = blocks[np.arange(num_relations) // per_block]
        self.head_cluster = self.block // config.clusters
        self.tail_cluster = self.block % config.clusters
        self.siblings = [np.flatnonzero((self.block == self.block[w]) & (np.arange(num_relations) != w))
                         for w in range(num_relations)]

        # El corte se fija sobre el mundo entero: ambos grafos ven la misma verdad
        everyone = np.arange(num_entities)
        self.cutoff = np.full(num_relations, np.inf)
        for w in range(num_relations):
            heads, tails = self._block_members(w, everyone)
            if len(heads) and len(tails):
                scores = self._scores(w, heads, tails)
                self.cutoff[w] = np.quantile(scores, 1.0 - config.true_fraction)

    def _block_members(self, w: int, entities: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        heads = entities[self.cluster[entities] == self.head_cluster[w]]
        tails = entities[self.cluster[entities] == self.tail_cluster[w]]
        return heads, tails

    def _scores(self, w: int, heads: np.ndarray, tails: np.ndarray) -> np.ndarray:
        return (self.latent[heads] * self.diag[w]) @ self.latent[tails].T

    def facts(self, w: int, entities: np.ndarray) -> np.ndarray:
        """Hechos verdaderos (s, o) de la relación w entre las entidades dadas"""
        heads, tails = self._block_members(w, entities)
        if not len(heads) or not len(tails):
            return np.empty((0, 2), dtype=np.int64)

        scores = self._scores(w, heads, tails)
        holds = scores >= self.cutoff[w]
        for v in self.siblings[w].tolist():
            holds &= scores > self._scores(v, heads, tails)

        hi, ti = np.nonzero(holds)
        pairs = np.column_stack([heads[hi], tails[ti]])
        return pairs[(pairs[:, 0] != pairs[:, 1])]


def _sample_facts(world: _World, relations: List[int], entities: np.ndarray, n: int,
                  weight: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """
    n hechos (s, índice de relación local, o) sin reemplazo

    Cada hecho pesa weight[s] · weight[o].
    """
    pools = []
    for local, w in enumerate(relations):
        pairs = world.facts(w, entities)
        if len(pairs):
            pools.append(np.column_stack([pairs[:, 0], np.full(len(pairs), local), pairs[:, 1]]))
    pool = np.concatenate(pools) if pools else np.empty((0, 3), dtype=np.int64)
    if len(pool) <= n:
        logger.warning(f"El mundo sintético solo tiene {len(pool)} hechos (se pidieron {n})")
        return rng.permutation(pool)

    p = weight[pool[:, 0]] * weight[pool[:, 2]]
    chosen = rng.choice(len(pool), size=n, replace=False, p=p / p.sum())
    return pool[np.sort(chosen)]


def synthetic_pair(config: SyntheticConfig = None, seed: int = 0) -> SyntheticPair:
    """
    Genera un par (objetivo ruidoso, externo limpio) determinista por semilla

    Ambos grafos muestrean el mismo mundo. El externo contiene una relación
    gemela de cada relación del objetivo (mismos hechos, otro nombre) más las
    suyas propias, y comparte round(overlap · external_entities) entidades
    con el objetivo (mismo nombre). Sus hechos favorecen las entidades
    compartidas y usan una popularidad de entidades independiente de la del
    objetivo.

    El objetivo recibe round(error_rate · target_triplets) corrupciones de
    sujeto u objeto, que forman D⁻; D⁺ son otros tantos tripletes correctos
    del objetivo.
    """
    config = config or SyntheticConfig()
    rng = np.random.default_rng(seed)

    n_shared = min(int(round(config.overlap * config.external_entities)), config.target_entities)
    n_world = config.target_entities + config.external_entities - n_shared
    n_world_relations = max(config.target_relations, config.external_relations)
    world = _World(n_world, n_world_relations, config, rng)

    target_entities = np.arange(config.target_entities)
    shared = np.sort(rng.choice(target_entities, size=n_shared, replace=False))
    external_entities = np.concatenate([shared, np.arange(config.target_entities, n_world)])

    # Las primeras relaciones del orden son las del objetivo: el externo tiene sus gemelas
    relation_order = rng.permutation(n_world_relations)
    target_relations = sorted(relation_order[:config.target_relations].tolist())
    external_relations = rng.permutation(relation_order[:config.external_relations]).tolist()

    target_weight = np.exp(config.popularity_skew * rng.normal(size=n_world))
    external_weight = np.exp(config.popularity_skew * rng.normal(size=n_world))
    external_weight[shared] *= config.external_focus

    n_errors = int(round(config.error_rate * config.target_triplets))
    clean = _sample_facts(world, target_relations, target_entities,
                          config.target_triplets - n_errors, target_weight, rng)
    external = _sample_facts(world, external_relations, external_entities,
                             config.external_triplets, external_weight, rng)

    # Hechos verdaderos del objetivo: no pueden usarse como corrupciones
    truth: Set[Tuple[int, int, int]] = set()
    for local, w in enumerate(target_relations):
        for s, o in world.facts(w, target_entities).tolist():
            truth.add((s, local, o))
    present = {tuple(t) for t in clean.tolist()}

    errors = []
    sources = clean[rng.choice(len(clean), size=n_errors, replace=len(clean) < n_errors)] \
        if n_errors else np.empty((0, 3), dtype=np.int64)
    for s, r, o in sources.tolist():
        while True:
            replacement = int(rng.integers(config.target_entities))
            candidate = (replacement, r, o) if rng.random() < 0.5 else (s, r, replacement)
            if candidate[0] == candidate[2] or candidate in truth or candidate in present:
                continue
            present.add(candidate)
            errors.append(candidate)
            break

    error_rows = np.asarray(errors, dtype=np.int64).reshape(-1, 3)
    target = np.concatenate([clean, error_rows])
    target = target[rng.permutation(len(target))]

    positives = clean[np.sort(rng.choice(len(clean), size=min(n_errors, len(clean)), replace=False))]

    def entity_name(e: int) -> str:
        return f"ent_{e:05d}"

    def row(t, relation_names) -> Row:
        s, r, o = (int(x) for x in t)
        return entity_name(s), relation_names[r], entity_name(o)

    target_names = [f"t_rel_{w:02d}" for w in target_relations]
    external_names = [f"x_rel_{j:02d}" for j in range(len(external_relations))]

    eval_rows = [row(t, target_names) + (1,) for t in positives.tolist()]
    eval_rows += [row(t, target_names) + (-1,) for t in error_rows.tolist()]
    eval_rows = [eval_rows[i] for i in rng.permutation(len(eval_rows)).tolist()]

    pair = SyntheticPair(
        target_rows=[row(t, target_names) for t in target.tolist()],
        external_rows=[row(t, external_names) for t in external.tolist()],
        eval_rows=eval_rows,
        config=config,
        seed=seed,
        overlap_names=[entity_name(e) for e in shared.tolist()],
    )
    logger.info(f"Par sintético (semilla {seed}): {len(pair.target_rows)} tripletes objetivo "
                f"({n_errors} erróneos), {len(pair.external_rows)} externos, "
                f"{n_shared} entidades solapadas")
    return pair


def write_pair(pair: SyntheticPair, directory) -> Dict[str, Path]:
    """Escribe target.tsv, external.tsv y eval.tsv en el directorio"""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    return {
        'target': write_tsv_rows(directory / 'target.tsv', pair.target_rows),
        'external': write_tsv_rows(directory / 'external.tsv', pair.external_rows),
        'eval': write_tsv_rows(directory / 'eval.tsv',
                               ((s, r, o, '+1' if y > 0 else '-1') for s, r, o, y in pair.eval_rows)),
    }
