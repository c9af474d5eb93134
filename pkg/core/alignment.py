# core/alignment.py
"""
Alineamiento de entidades entre el grafo objetivo y el externo

Coincidencia exacta de nombres (sensible a mayúsculas) más un salto de
alias. Las entidades alineadas comparten un único ID en el espacio
compartido, y por tanto un único embedding.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Set, Tuple

import numpy as np

from core.exceptions import AliasConflictError, ConfigError, UnmappedEntityError
from core.graph_store import GraphTag, KnowledgeGraph, Origin, Vocabulary, read_tsv_rows
from utils.logger import get_logger

logger = get_logger(__name__)


class AliasTable:
    """
    Tabla de alias: nombre canónico -> alias (acrónimos, nombres conocidos)

    La relación se aplica de forma simétrica. Un alias no puede apuntar a
    dos nombres canónicos distintos.
    """

    def __init__(self, pairs: Iterable[Tuple[str, str]] = ()):
        self.aliases_of: Dict[str, Set[str]] = {}
        self.canonical_of: Dict[str, str] = {}

        conflicts: Dict[str, Set[str]] = {}
        for canonical, alias in pairs:
            if canonical == alias:
                continue
            previous = self.canonical_of.get(alias)
            if previous is not None and previous != canonical:
                conflicts.setdefault(alias, {previous}).add(canonical)
                continue
            self.canonical_of[alias] = canonical
            self.aliases_of.setdefault(canonical, set()).add(alias)

        if conflicts:
            alias = sorted(conflicts)[0]
            if len(conflicts) > 1:
                logger.error(f"Alias en conflicto: {sorted(conflicts)}")
            raise AliasConflictError(alias, conflicts[alias])

    @classmethod
    def load(cls, path) -> 'AliasTable':
        """Lee un TSV canónico\\talias"""
        rows = read_tsv_rows(Path(path), 2)
        table = cls((parts[0], parts[1]) for _, parts in rows)
        logger.info(f"✓ Tabla de alias cargada: {len(table)} alias ({Path(path).name})")
        return table

    def links(self, name: str) -> List[str]:
        """Nombres a un salto de alias (en ambos sentidos), ordenados"""
        linked = set(self.aliases_of.get(name, ()))
        canonical = self.canonical_of.get(name)
        if canonical is not None:
            linked.add(canonical)
        return sorted(linked)

    def __len__(self):
        return len(self.canonical_of)


@dataclass
class AlignmentMap:
    """
    Mapa de IDs de entidad externos al espacio compartido

    Los IDs objetivo se conservan; las entidades solo externas reciben IDs
    nuevos a continuación, en orden de ID externo.
    """
    to_shared: np.ndarray
    matches: Dict[int, int]
    num_target_entities: int
    entities: Vocabulary
    target_relations: Vocabulary = field(default_factory=Vocabulary)

    @property
    def overlap_count(self) -> int:
        return len(self.matches)

    def shared_id(self, external_id: int) -> int:
        return int(self.to_shared[external_id])

    def __len__(self):
        return len(self.to_shared)


def _build_map(matches: Dict[int, int], g1_vocab: Vocabulary, g2_vocab: Vocabulary,
               target_relations: Vocabulary) -> AlignmentMap:
    n_target = len(g1_vocab)
    to_shared = np.full(len(g2_vocab), -1, dtype=np.int64)

    entities = Vocabulary(g1_vocab.names, default_origin=Origin.TARGET)
    shared_targets = set(matches.values())
    for idx in shared_targets:
        entities.set_origin(idx, Origin.SHARED)

    for ext in range(len(g2_vocab)):
        target = matches.get(ext)
        if target is not None:
            to_shared[ext] = target
        else:
            name = g2_vocab.name_of(ext)
            # Un nombre externo idéntico a uno objetivo no emparejado (p. ej. por
            # submuestreo) recibe igualmente un ID nuevo
            to_shared[ext] = entities.append(name, Origin.EXTERNAL)

    return AlignmentMap(
        to_shared=to_shared,
        matches=dict(sorted(matches.items())),
        num_target_entities=n_target,
        entities=entities,
        target_relations=target_relations,
    )


def align(g1_vocab: Vocabulary, g2_vocab: Vocabulary,
          aliases: Optional[AliasTable] = None,
          target_relations: Optional[Vocabulary] = None) -> AlignmentMap:
    """
    Descubre entidades solapadas y las fusiona en IDs compartidos

    Args:
        g1_vocab: Vocabulario de entidades del grafo objetivo
        g2_vocab: Vocabulario de entidades del grafo externo
        aliases: Tabla de alias opcional (un salto)
        target_relations: Vocabulario de relaciones objetivo (para remap)

    Returns:
        AlignmentMap total sobre las entidades externas
    """
    matches: Dict[int, int] = {}
    claimed: Set[int] = set()

    # 1) Coincidencia exacta
    for ext in range(len(g2_vocab)):
        target = g1_vocab.get(g2_vocab.name_of(ext))
        if target is not None:
            matches[ext] = target
            claimed.add(target)

    exact = len(matches)

    # 2) Un salto de alias, solo sobre entidades objetivo libres (mapa inyectivo)
    if aliases is not None and len(aliases):
        for ext in range(len(g2_vocab)):
            if ext in matches:
                continue
            for linked in aliases.links(g2_vocab.name_of(ext)):
                target = g1_vocab.get(linked)
                if target is not None and target not in claimed:
                    matches[ext] = target
                    claimed.add(target)
                    break

    logger.info(f"Alineamiento: {len(matches)} entidades solapadas "
                f"({exact} exactas, {len(matches) - exact} por alias)")

    return _build_map(matches, g1_vocab, g2_vocab, target_relations or Vocabulary())


def subsample(m: AlignmentMap, fraction: float, rng: np.random.Generator,
              g2_vocab: Vocabulary, g1_vocab: Vocabulary) -> AlignmentMap:
    """
    Conserva ⌈p·N⌉ alineamientos elegidos uniformemente (semilla)

    Las entidades externas que pierden su alineamiento pasan a ser solo externas.
    """
    if not 0.0 < fraction <= 1.0:
        raise ConfigError(f"overlap_fraction debe estar en (0, 1]: {fraction}")

    total = m.overlap_count
    keep_count = math.ceil(round(fraction * total, 9))
    if keep_count >= total:
        return m

    externals = np.array(sorted(m.matches), dtype=np.int64)
    chosen = np.sort(rng.choice(externals, size=keep_count, replace=False))
    matches = {int(e): m.matches[int(e)] for e in chosen}

    logger.info(f"Submuestreo de alineamiento: {keep_count}/{total} entidades solapadas conservadas")
    return _build_map(matches, g1_vocab, g2_vocab, m.target_relations)


def shared_relations(target_relations: Vocabulary, external_relations: Vocabulary) -> Vocabulary:
    """Relaciones objetivo en [0, R1) y externas en [R1, R1 + R2); nunca se fusionan"""
    relations = Vocabulary(default_origin=Origin.TARGET)
    for name in target_relations.names:
        relations.append(name, Origin.TARGET)
    for name in external_relations.names:
        relations.append(name, Origin.EXTERNAL)
    return relations


def remap(g2: KnowledgeGraph, m: AlignmentMap) -> KnowledgeGraph:
    """
    Reescribe el grafo externo en el espacio compartido de IDs

    Conserva el número de tripletes y los nombres de relación.
    """
    if len(m.to_shared) != g2.num_entities or (m.to_shared < 0).any():
        missing = np.flatnonzero(m.to_shared < 0).tolist()
        if len(m.to_shared) != g2.num_entities:
            missing = list(range(len(m.to_shared), g2.num_entities)) or missing
        raise UnmappedEntityError(f"Entidades externas sin mapear: {missing[:10]}")

    offset = len(m.target_relations)
    rows = g2.triplets
    remapped = np.column_stack([
        m.to_shared[rows[:, 0]],
        rows[:, 1] + offset,
        m.to_shared[rows[:, 2]],
    ]) if len(rows) else np.empty((0, 3), dtype=np.int64)

    relations = shared_relations(m.target_relations, g2.relations)
    return g2.with_vocabularies(m.entities, relations, remapped, tag=GraphTag.EXTERNAL)


def attach_target(g1: KnowledgeGraph, m: AlignmentMap, relations: Vocabulary) -> KnowledgeGraph:
    """El grafo objetivo conserva sus IDs; solo adopta los vocabularios compartidos"""
    return g1.with_vocabularies(m.entities, relations)


def align_graphs(g1: KnowledgeGraph, g2: KnowledgeGraph,
                 aliases: Optional[AliasTable] = None,
                 overlap_fraction: float = 1.0,
                 rng: Optional[np.random.Generator] = None
                 ) -> Tuple[KnowledgeGraph, KnowledgeGraph, AlignmentMap]:
    """
    align -> subsample (opcional) -> remap, para ambos grafos

    Returns:
        (G1 en espacio compartido, G2 en espacio compartido, mapa)
    """
    m = align(g1.entities, g2.entities, aliases, target_relations=g1.relations)

    if overlap_fraction < 1.0:
        if rng is None:
            raise ConfigError("Submuestrear el alineamiento requiere un generador con semilla")
        m = subsample(m, overlap_fraction, rng, g2.entities, g1.entities)

    g2_shared = remap(g2, m)
    g1_shared = attach_target(g1, m, g2_shared.relations)

    return g1_shared, g2_shared, m
