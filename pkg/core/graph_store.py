# core/graph_store.py
"""
Almacén de tripletes para el grafo objetivo (G1) y el externo (G2)

- Ingesta de archivos TSV sujeto/relación/objeto (opcionalmente .gz)
- Vocabularios con IDs densos en orden de primera aparición
- Índices: conjunto de existencia y pares (sujeto, objeto) por relación
"""

import gzip
from enum import Enum
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, NamedTuple, Optional, Sequence, Set, Tuple

import numpy as np

from core.exceptions import EmptyGraphError, ParseError, UnknownRelationError
from utils.logger import get_logger

logger = get_logger(__name__)

EntityPair = Tuple[int, int]


class GraphTag(str, Enum):
    TARGET = 'G1'
    EXTERNAL = 'G2'


class Origin(str, Enum):
    """De qué grafo proviene un ID del espacio compartido"""
    TARGET = 'target'
    EXTERNAL = 'external'
    SHARED = 'shared'


class Triplet(NamedTuple):
    subject: int
    relation: int
    object: int


class Vocabulary:
    """
    Internado de nombres: nombre canónico <-> ID denso

    Los IDs son contiguos desde 0 y cada uno resuelve a un único nombre.
    """

    def __init__(self, names: Iterable[str] = (), origins: Iterable[Origin] = None,
                 default_origin: Origin = Origin.TARGET):
        self._names: List[str] = []
        self._index: Dict[str, int] = {}
        self._origins: List[Origin] = []
        self.default_origin = default_origin

        origins = list(origins) if origins is not None else None
        for i, name in enumerate(names):
            origin = origins[i] if origins is not None else default_origin
            self.append(name, origin)

    def intern(self, name: str, origin: Origin = None) -> int:
        """Devuelve el ID del nombre, creándolo si no existe"""
        idx = self._index.get(name)
        if idx is None:
            idx = len(self._names)
            self._index[name] = idx
            self._names.append(name)
            self._origins.append(origin or self.default_origin)
        return idx

    def append(self, name: str, origin: Origin = None) -> int:
        """
        Agrega un ID nuevo aunque el nombre ya exista

        La búsqueda por nombre sigue resolviendo al primer ID con ese nombre.
        """
        idx = len(self._names)
        self._names.append(name)
        self._origins.append(origin or self.default_origin)
        self._index.setdefault(name, idx)
        return idx

    def set_origin(self, idx: int, origin: Origin):
        self._origins[idx] = origin

    def id_of(self, name: str) -> int:
        return self._index[name]

    def get(self, name: str) -> Optional[int]:
        return self._index.get(name)

    def name_of(self, idx: int) -> str:
        return self._names[idx]

    def origin_of(self, idx: int) -> Origin:
        return self._origins[idx]

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(self._names)

    @property
    def origins(self) -> Tuple[Origin, ...]:
        return tuple(self._origins)

    def __len__(self):
        return len(self._names)

    def __contains__(self, name):
        return name in self._index

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self._names == other._names

    def __repr__(self):
        return f"<Vocabulary {len(self)} nombres>"


class KnowledgeGraph:
    """
    Grafo de conocimiento inmutable tras la ingesta

    Invariantes:
        - exists contiene exactamente los tripletes de la lista, sin duplicados
        - pairs_by_relation[r] = {(s, o) : (s, r, o) ∈ exists}
    """

    def __init__(self, tag: GraphTag, entities: Vocabulary, relations: Vocabulary,
                 triplets, duplicates_dropped: int = 0):
        self.tag = GraphTag(tag)
        self.entities = entities
        self.relations = relations

        rows = np.asarray(triplets, dtype=np.int64).reshape(-1, 3)

        # Deduplicar conservando el orden de primera aparición
        seen: Set[Triplet] = set()
        keep = []
        for i, (s, r, o) in enumerate(rows.tolist()):
            t = Triplet(s, r, o)
            if t in seen:
                continue
            seen.add(t)
            keep.append(i)

        self.duplicates_dropped = duplicates_dropped + (len(rows) - len(keep))
        self._triplets = rows[keep] if len(keep) != len(rows) else rows.copy()
        self._triplets.setflags(write=False)

        self._validate_ids()

        self.exists: FrozenSet[Triplet] = frozenset(seen)

        pairs: Dict[int, Set[EntityPair]] = {r: set() for r in range(len(relations))}
        for s, r, o in self._triplets.tolist():
            pairs[r].add((s, o))
        self.pairs_by_relation: Dict[int, FrozenSet[EntityPair]] = {
            r: frozenset(p) for r, p in pairs.items()
        }

    def _validate_ids(self):
        if len(self._triplets) == 0:
            return
        ent = self._triplets[:, [0, 2]]
        rel = self._triplets[:, 1]
        if ent.min() < 0 or ent.max() >= len(self.entities):
            raise ValueError("Triplete con entidad fuera del vocabulario")
        if rel.min() < 0 or rel.max() >= len(self.relations):
            raise ValueError("Triplete con relación fuera del vocabulario")

    # =========================================================================
    # CONSULTAS
    # =========================================================================

    @property
    def triplets(self) -> np.ndarray:
        """Array (n, 3) de solo lectura con los tripletes en orden de ingesta"""
        return self._triplets

    @property
    def num_entities(self) -> int:
        return len(self.entities)

    @property
    def num_relations(self) -> int:
        return len(self.relations)

    def __len__(self):
        return len(self._triplets)

    def __iter__(self):
        for s, r, o in self._triplets.tolist():
            yield Triplet(s, r, o)

    def triplet(self, i: int) -> Triplet:
        s, r, o = self._triplets[i].tolist()
        return Triplet(s, r, o)

    def contains(self, t: Sequence[int]) -> bool:
        """True si el triplete fue ingerido"""
        return Triplet(*(int(x) for x in t)) in self.exists

    def entity_pairs(self, r: int) -> FrozenSet[EntityPair]:
        """Pares (sujeto, objeto) de los tripletes con relación r"""
        pairs = self.pairs_by_relation.get(int(r))
        if pairs is None:
            raise UnknownRelationError(
                f"Relación {r} fuera del vocabulario de {self.tag.value} "
                f"({self.num_relations} relaciones)"
            )
        return pairs

    def relations_present(self) -> List[int]:
        """IDs de relación con al menos un triplete"""
        return [r for r, p in self.pairs_by_relation.items() if p]

    def names(self, t: Sequence[int]) -> Tuple[str, str, str]:
        """Nombres de superficie de un triplete"""
        s, r, o = (int(x) for x in t)
        return (self.entities.name_of(s), self.relations.name_of(r), self.entities.name_of(o))

    def lookup(self, subject: str, relation: str, obj: str) -> Optional[Triplet]:
        """Triplete de IDs a partir de nombres (None si algún nombre no existe)"""
        s = self.entities.get(subject)
        r = self.relations.get(relation)
        o = self.entities.get(obj)
        if s is None or r is None or o is None:
            return None
        return Triplet(s, r, o)

    def with_vocabularies(self, entities: Vocabulary, relations: Vocabulary,
                          triplets=None, tag: GraphTag = None) -> 'KnowledgeGraph':
        """Nuevo grafo con otros vocabularios (y opcionalmente tripletes reescritos)"""
        return KnowledgeGraph(
            tag=tag or self.tag,
            entities=entities,
            relations=relations,
            triplets=self._triplets if triplets is None else triplets,
            duplicates_dropped=self.duplicates_dropped,
        )

    def subsample(self, n: int, rng: np.random.Generator) -> 'KnowledgeGraph':
        """Submuestra uniforme de n tripletes (orden original preservado)"""
        if n >= len(self):
            return self
        keep = np.sort(rng.choice(len(self), size=n, replace=False))
        return self.with_vocabularies(self.entities, self.relations, self._triplets[keep])

    def stats(self) -> Dict:
        return {
            'tag': self.tag.value,
            'entities': self.num_entities,
            'relations': self.num_relations,
            'triplets': len(self),
            'duplicates_dropped': self.duplicates_dropped,
        }

    def __repr__(self):
        return (f"<KnowledgeGraph {self.tag.value}: {self.num_entities} entidades, "
                f"{self.num_relations} relaciones, {len(self)} tripletes>")


# =============================================================================
# INGESTA
# =============================================================================

def _open_text(path: Path):
    if path.suffix == '.gz':
        return gzip.open(path, 'rt', encoding='utf-8', newline='')
    return open(path, 'r', encoding='utf-8', newline='')


def read_tsv_rows(path, columns: int) -> List[Tuple[int, List[str]]]:
    """
    Lee un TSV con un número fijo de columnas

    Returns:
        Lista de (número de línea, campos sin espacios alrededor)
    """
    path = Path(path)
    rows = []
    line_number = 0
    with _open_text(path) as f:
        try:
            for line_number, line in enumerate(f, start=1):
                line = line.rstrip('\r\n')
                if not line.strip():
                    continue
                parts = [p.strip() for p in line.split('\t')]
                if len(parts) != columns:
                    raise ParseError(path, line_number,
                                     f"se esperaban {columns} campos separados por tab, hay {len(parts)}")
                if any(p == '' for p in parts):
                    raise ParseError(path, line_number, "campo vacío")
                rows.append((line_number, parts))
        except UnicodeDecodeError as e:
            raise ParseError(path, line_number + 1, f"no es UTF-8 válido: {e.reason}") from e
        except (OSError, EOFError) as e:
            raise ParseError(path, line_number + 1, f"no se pudo leer (¿gzip corrupto?): {e}") from e
    return rows


def write_tsv_rows(path, rows: Iterable[Sequence]) -> Path:
    """Escribe filas separadas por tab (UTF-8, '\\n'); .gz se comprime"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    opener = gzip.open(path, 'wt', encoding='utf-8', newline='') if path.suffix == '.gz' \
        else open(path, 'w', encoding='utf-8', newline='')
    with opener as f:
        for row in rows:
            f.write('\t'.join(str(x) for x in row) + '\n')
    return path


def build_graph(rows: Iterable[Tuple[str, str, str]], tag: GraphTag,
                source: str = '<memoria>') -> KnowledgeGraph:
    """Construye un grafo a partir de tripletes de nombres"""
    tag = GraphTag(tag)
    origin = Origin.TARGET if tag == GraphTag.TARGET else Origin.EXTERNAL
    entities = Vocabulary(default_origin=origin)
    relations = Vocabulary(default_origin=origin)

    ids = []
    for subject, relation, obj in rows:
        s = entities.intern(subject)
        r = relations.intern(relation)
        o = entities.intern(obj)
        ids.append((s, r, o))

    if not ids:
        raise EmptyGraphError(f"El grafo {tag.value} ({source}) no contiene tripletes")

    graph = KnowledgeGraph(tag, entities, relations, ids)

    if graph.duplicates_dropped:
        logger.info(f"{tag.value}: {graph.duplicates_dropped} tripletes duplicados descartados ({source})")

    return graph


def ingest(path, tag: GraphTag) -> KnowledgeGraph:
    """
    Ingiere un archivo TSV de tripletes

    Args:
        path: Archivo UTF-8, una línea sujeto\\trelación\\tobjeto (.gz se descomprime)
        tag: G1 (objetivo) o G2 (externo)

    Returns:
        KnowledgeGraph con vocabularios e índices construidos
    """
    path = Path(path)
    rows = [tuple(parts) for _, parts in read_tsv_rows(path, 3)]
    graph = build_graph(rows, tag, source=str(path))

    logger.info(f"✓ Ingerido {graph!r} desde {path.name}")
    return graph


def contains(g: KnowledgeGraph, t: Sequence[int]) -> bool:
    return g.contains(t)


def entity_pairs(g: KnowledgeGraph, r: int) -> FrozenSet[EntityPair]:
    return g.entity_pairs(r)
