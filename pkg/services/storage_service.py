# services/storage_service.py

import csv
import json
import pickle
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np

from config import Config
from core.embedding_models import EmbeddingModel, ModelKind
from core.exceptions import ConfigError, ParseError, VocabularyMismatchError
from core.graph_store import Origin, Vocabulary, read_tsv_rows, write_tsv_rows
from utils.logger import get_logger

logger = get_logger(__name__)

CHECKPOINT_FORMAT = 'crossval-checkpoint/1'
PICKLE_PROTOCOL = 4

_CHECKPOINT_KEYS = (
    'format', 'kind', 'dim', 'num_entities', 'num_relations', 'seed', 'params',
    'entity_names', 'relation_names', 'entity_origin', 'relation_origin',
    'run_config', 'training_log',
)


@dataclass
class Checkpoint:
    """Modelo entrenado más los vocabularios compartidos y su procedencia"""
    model: EmbeddingModel
    entities: Vocabulary
    relations: Vocabulary
    run_config: Dict = field(default_factory=dict)
    training_log: List[Dict] = field(default_factory=list)


class StorageService:
    """
    Persistencia de checkpoints, reportes y archivos tabulares

    Los checkpoints son un pickle de un diccionario plano sin marcas de
    tiempo: dos ejecuciones idénticas producen archivos idénticos byte a byte.
    """

    def __init__(self, checkpoints_dir: Path = Config.CHECKPOINTS_DIR,
                 reports_dir: Path = Config.REPORTS_DIR):
        self.checkpoints_dir = Path(checkpoints_dir)
        self.reports_dir = Path(reports_dir)

    # =========================================================================
    # CHECKPOINTS
    # =========================================================================

    def save_checkpoint(self, path, checkpoint: Checkpoint) -> Path:
        """Guarda el checkpoint (pickle protocolo 4)"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)

        model = checkpoint.model
        payload = {
            'format': CHECKPOINT_FORMAT,
            'kind': model.kind.value,
            'dim': model.dim,
            'num_entities': model.num_entities,
            'num_relations': model.num_relations,
            'seed': model.seed,
            'params': {name: np.ascontiguousarray(model.params[name], dtype=np.float64)
                       for name in sorted(model.params)},
            'entity_names': list(checkpoint.entities.names),
            'relation_names': list(checkpoint.relations.names),
            'entity_origin': [o.value for o in checkpoint.entities.origins],
            'relation_origin': [o.value for o in checkpoint.relations.origins],
            'run_config': dict(checkpoint.run_config),
            'training_log': list(checkpoint.training_log),
        }

        with open(path, 'wb') as f:
            pickle.dump(payload, f, protocol=PICKLE_PROTOCOL)

        logger.info(f"✓ Checkpoint guardado: {path}")
        return path

    def load_checkpoint(self, path) -> Checkpoint:
        """
        Carga y valida un checkpoint

        Raises:
            ConfigError: si el archivo no existe
            VocabularyMismatchError: si el contenido es inconsistente
        """
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"No existe el checkpoint: {path}")

        with open(path, 'rb') as f:
            try:
                payload = pickle.load(f)
            except (pickle.UnpicklingError, EOFError) as e:
                raise VocabularyMismatchError(f"Checkpoint ilegible {path}: {e}") from e

        if not isinstance(payload, dict) or payload.get('format') != CHECKPOINT_FORMAT:
            raise VocabularyMismatchError(f"{path} no es un checkpoint de este sistema")
        missing = [k for k in _CHECKPOINT_KEYS if k not in payload]
        if missing:
            raise VocabularyMismatchError(f"Checkpoint incompleto, faltan {missing}")

        entity_names = payload['entity_names']
        relation_names = payload['relation_names']
        if len(entity_names) != payload['num_entities'] or len(relation_names) != payload['num_relations']:
            raise VocabularyMismatchError(
                f"Vocabularios ({len(entity_names)} entidades, {len(relation_names)} relaciones) "
                f"no coinciden con el modelo ({payload['num_entities']}, {payload['num_relations']})"
            )

        try:
            model = EmbeddingModel(ModelKind.parse(payload['kind']), payload['dim'],
                                   payload['num_entities'], payload['num_relations'],
                                   {k: np.array(v, dtype=np.float64) for k, v in payload['params'].items()},
                                   seed=payload['seed'])
        except ValueError as e:
            raise VocabularyMismatchError(f"Parámetros inconsistentes en {path}: {e}") from e

        entities = Vocabulary(entity_names, [Origin(o) for o in payload['entity_origin']])
        relations = Vocabulary(relation_names, [Origin(o) for o in payload['relation_origin']])

        logger.info(f"✓ Checkpoint cargado: {model!r}")
        return Checkpoint(model, entities, relations, payload['run_config'], payload['training_log'])

    # =========================================================================
    # REPORTES Y LOGS
    # =========================================================================

    def save_report(self, path, report: Dict) -> Path:
        """JSON UTF-8 con claves ordenadas e indentación de 2 espacios"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', encoding='utf-8', newline='\n') as f:
            json.dump(report, f, sort_keys=True, indent=2, ensure_ascii=False)
            f.write('\n')
        logger.info(f"✓ Reporte guardado: {path}")
        return path

    def load_report(self, path) -> Dict:
        with open(path, 'r', encoding='utf-8') as f:
            return json.load(f)

    def write_training_log(self, path, entries: Iterable[Dict]) -> Path:
        """Una línea JSON por época"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', encoding='utf-8', newline='\n') as f:
            for entry in entries:
                f.write(json.dumps(entry, sort_keys=True) + '\n')
        return path

    def read_training_log(self, path) -> List[Dict]:
        with open(path, 'r', encoding='utf-8') as f:
            return [json.loads(line) for line in f if line.strip()]

    def write_csv(self, path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', encoding='utf-8', newline='') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(header)
            writer.writerows(rows)
        return path

    # =========================================================================
    # CONJUNTOS ETIQUETADOS
    # =========================================================================

    def read_eval_tsv(self, path) -> List[Tuple[str, str, str, int]]:
        """Lee sujeto\\trelación\\tobjeto\\t(+1|-1)"""
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"No existe el conjunto de evaluación: {path}")

        rows = []
        for line_number, (s, r, o, label) in read_tsv_rows(path, 4):
            if label in ('+1', '1'):
                value = 1
            elif label == '-1':
                value = -1
            else:
                raise ParseError(path, line_number, f"etiqueta inválida '{label}' (se esperaba +1 o -1)")
            rows.append((s, r, o, value))
        return rows

    def write_eval_tsv(self, path, rows: Iterable[Tuple[str, str, str, int]]) -> Path:
        path = write_tsv_rows(path, ((s, r, o, '+1' if y > 0 else '-1') for s, r, o, y in rows))
        logger.info(f"✓ Conjunto etiquetado escrito: {path}")
        return path
