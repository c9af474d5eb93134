# services/validation_service.py

from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from config import Config, RunConfig
from core.alignment import AlignmentMap, AliasTable, align_graphs
from core.embedding_models import EmbeddingModel, ModelKind
from core.evaluation import (EvaluationSet, RankingReport, default_precision_k, evaluate,
                             inject_errors, resolve_labeled, score_triplets, split_eval)
from core.exceptions import ConfigError, CrossValError
from core.graph_store import GraphTag, KnowledgeGraph, ingest, write_tsv_rows
from core.negative_sampling import (NegativeRelationIndex, build_negative_relation_index,
                                    spawn_generators)
from core.trainer import TrainingResult, train
from services.storage_service import Checkpoint, StorageService
from utils.logger import PerformanceLogger, get_logger, log_execution

logger = get_logger(__name__)


@contextmanager
def stage(name: str):
    """Etiqueta con el nombre de la etapa cualquier error del sistema que la atraviese"""
    try:
        yield
    except CrossValError as e:
        if e.stage is None:
            e.stage = name
        raise


def data_generator(seed: int) -> np.random.Generator:
    """Generador de los submuestreos de datos, independiente de los del entrenamiento"""
    return spawn_generators(seed, 3)[2]


@dataclass
class PreparedGraphs:
    """Grafos en el espacio compartido, listos para entrenar"""
    g1: KnowledgeGraph
    g2: Optional[KnowledgeGraph] = None
    alignment: Optional[AlignmentMap] = None
    index: Optional[NegativeRelationIndex] = None
    raw_target: Optional[KnowledgeGraph] = None
    raw_external: Optional[KnowledgeGraph] = None


@dataclass
class TrainOutcome:
    checkpoint_path: Path
    log_path: Path
    result: TrainingResult
    graphs: PreparedGraphs


@dataclass
class BenchResult:
    rows: List[Dict] = field(default_factory=list)
    r_squared: float = float('nan')
    csv_path: Optional[Path] = None


class ValidationService:
    """
    Orquesta el pipeline completo:
    ingest -> align -> remap -> index -> train -> checkpoint -> validate
    """

    def __init__(self, config: RunConfig, storage: Optional[StorageService] = None):
        """
        Args:
            config: Configuración de la ejecución (ya validada o por validar)
            storage: Servicio de persistencia
        """
        self.config = config
        self.storage = storage or StorageService()
        self.kind = ModelKind.parse(config.model)

    # =========================================================================
    # PREPARACIÓN DE DATOS
    # =========================================================================

    @log_execution(logger)
    def prepare_graphs(self, build_index: bool = True) -> PreparedGraphs:
        """Ingesta, submuestreo del externo, alineamiento y N(r)"""
        config = self.config
        rng = data_generator(config.seed)

        with stage('ingest'):
            target = ingest(config.target, GraphTag.TARGET)
            external = ingest(config.external, GraphTag.EXTERNAL) if config.external else None

        if external is None:
            logger.info("Sin grafo externo: entrenamiento sobre un solo grafo")
            return PreparedGraphs(g1=target, raw_target=target)

        if config.external_triplets is not None and config.external_triplets < len(external):
            external = external.subsample(int(config.external_triplets), rng)
            logger.info(f"Grafo externo submuestreado a {len(external)} tripletes")

        with stage('align'):
            aliases = AliasTable.load(config.aliases) if config.aliases else None
            g1, g2, alignment = align_graphs(target, external, aliases,
                                             float(config.overlap_fraction), rng)

        index = None
        if build_index and self.config.trainer.neg_cross:
            with stage('index'):
                index = build_negative_relation_index(g1, g2)

        return PreparedGraphs(g1=g1, g2=g2, alignment=alignment, index=index,
                              raw_target=target, raw_external=external)

    def ingest_check(self) -> Dict:
        """Estadísticas de ingesta, alineamiento y relaciones negativas"""
        from services.experiment_service import exact_match_baseline

        graphs = self.prepare_graphs(build_index=False)
        stats = {'target': graphs.raw_target.stats()}

        if graphs.g2 is not None:
            with stage('index'):
                index = build_negative_relation_index(graphs.g1, graphs.g2)
            stats['external'] = graphs.raw_external.stats()
            stats['overlapping_entities'] = graphs.alignment.overlap_count
            stats['shared_entities'] = graphs.g1.num_entities
            stats['cross_kg_negative_pairs'] = index.pair_count()
            stats['exact_triplet_matches'] = exact_match_baseline(graphs.raw_target, graphs.raw_external)

        return stats

    # =========================================================================
    # COMANDOS
    # =========================================================================

    def _checkpoint_path(self) -> Path:
        path = self.config.out or self.config.checkpoint
        return Path(path) if path else Config.CHECKPOINTS_DIR / 'model.ckpt'

    @log_execution(logger)
    def cmd_train(self) -> TrainOutcome:
        """
        ingest -> align -> remap -> index -> train -> checkpoint

        Returns:
            TrainOutcome con las rutas del checkpoint y del log por época
        """
        self.config.validate(require=('target',))
        graphs = self.prepare_graphs()

        with stage('train'):
            result = train(graphs.g1, graphs.g2, self.config.trainer, self.kind,
                           int(self.config.dim), graphs.index)

        with stage('checkpoint'):
            path = self._checkpoint_path()
            checkpoint = Checkpoint(
                model=result.model,
                entities=graphs.g1.entities,
                relations=graphs.g1.relations,
                run_config=self.config.to_dict(),
                training_log=result.log,
            )
            self.storage.save_checkpoint(path, checkpoint)
            log_path = self.storage.write_training_log(path.with_name(path.stem + '_log.jsonl'),
                                                       result.log)

        return TrainOutcome(path, log_path, result, graphs)

    def _load_eval(self, checkpoint: Checkpoint) -> EvaluationSet:
        rows = self.storage.read_eval_tsv(self.config.eval_path)
        return resolve_labeled(rows, checkpoint.entities, checkpoint.relations)

    @log_execution(logger)
    def cmd_validate(self) -> Dict:
        """
        Rankea el conjunto etiquetado con un checkpoint y calcula las métricas

        Con tuning_fraction se separa una parte de ajuste y se reporta sobre
        el resto.
        """
        self.config.validate(require=('checkpoint', 'eval_path'))

        with stage('validate'):
            checkpoint = self.storage.load_checkpoint(self.config.checkpoint)
            d = self._load_eval(checkpoint)

            tuning_size = 0
            if self.config.tuning_fraction:
                tuning, d = split_eval(d, float(self.config.tuning_fraction),
                                       data_generator(self.config.seed))
                tuning_size = len(tuning)

            ks = self.config.precision_k or default_precision_k(len(d))
            ranking = evaluate(checkpoint.model, d, ks, int(self.config.threads))

        report = self.build_report(ranking, checkpoint, tuning_size)

        path = Path(self.config.report or self.config.out or Config.REPORTS_DIR / 'report.json')
        self.storage.save_report(path, report)
        report['path'] = str(path)
        return report

    def build_report(self, ranking: RankingReport, checkpoint: Checkpoint,
                     tuning_size: int = 0) -> Dict:
        return {
            'metrics': ranking.metrics,
            'ranking': ranking.to_rows(checkpoint.entities, checkpoint.relations),
            'run_config': checkpoint.run_config,
            'seed': checkpoint.run_config.get('seed', checkpoint.model.seed),
            'evaluation': {
                'eval_path': self.config.eval_path,
                'size': len(ranking),
                'negatives': int(len(ranking.negative_ranks())),
                'tuning_size': tuning_size,
                'tuning_fraction': self.config.tuning_fraction,
                'precision_k': [int(k) for k in ranking.metrics['precision_at']],
            },
        }

    @log_execution(logger)
    def cmd_corrupt(self, n: int) -> Dict[str, Path]:
        """
        Inyecta n errores en el grafo objetivo y escribe el conjunto etiquetado

        Escribe también el grafo objetivo con los errores añadidos y, con
        tuning_fraction, la partición ajuste/test.
        """
        self.config.validate(require=('target',))
        rng = data_generator(self.config.seed)

        with stage('ingest'):
            g = ingest(self.config.target, GraphTag.TARGET)

        with stage('corrupt'):
            positives, negatives = inject_errors(g, int(n), rng)
            d = EvaluationSet.from_parts(positives, negatives)

        out = Path(self.config.out or Config.REPORTS_DIR / 'eval.tsv')
        stem = out.stem

        def rows_of(subset: EvaluationSet):
            return [g.names(t) + (int(y),) for t, y in zip(subset.triplets.tolist(), subset.labels.tolist())]

        paths = {'eval': self.storage.write_eval_tsv(out, rows_of(d))}

        noisy = [g.names(t) for t in g.triplets.tolist()] + [g.names(t) for t in negatives.tolist()]
        paths['target'] = write_tsv_rows(out.with_name(f"{stem}_target.tsv"), noisy)

        if self.config.tuning_fraction and len(d):
            with stage('corrupt'):
                tuning, test = split_eval(d, float(self.config.tuning_fraction), rng)
            paths['tuning'] = self.storage.write_eval_tsv(out.with_name(f"{stem}_tuning.tsv"), rows_of(tuning))
            paths['test'] = self.storage.write_eval_tsv(out.with_name(f"{stem}_test.tsv"), rows_of(test))

        return paths

    @log_execution(logger)
    def cmd_bench(self, sizes: Sequence[int] = Config.BENCH_SIZES,
                  repeats: int = Config.BENCH_REPEATS,
                  model: Optional[EmbeddingModel] = None) -> BenchResult:
        """
        Tiempo de puntuación frente al número de tripletes

        Cada tamaño se mide `repeats` veces y se reporta la mediana; R² es el
        del ajuste lineal tiempo ~ tamaño.
        """
        sizes = [int(s) for s in sizes]
        if not sizes or any(s < 1 for s in sizes) or sizes != sorted(sizes):
            raise ConfigError(f"Los tamaños del benchmark deben ser positivos y ascendentes: {sizes}", 'bench')

        if model is None:
            self.config.validate(require=('checkpoint',))
            with stage('bench'):
                model = self.storage.load_checkpoint(self.config.checkpoint).model

        rng = data_generator(self.config.seed)
        perf = PerformanceLogger(logger)
        threads = int(self.config.threads)
        result = BenchResult()

        for size in sizes:
            triplets = np.column_stack([
                rng.integers(0, model.num_entities, size=size),
                rng.integers(0, model.num_relations, size=size),
                rng.integers(0, model.num_entities, size=size),
            ])
            operation = f"score_{size}"
            for _ in range(repeats):
                perf.start_timer(operation)
                score_triplets(model, triplets, threads)
                perf.end_timer(operation)

            median = float(np.median(perf.durations(operation)))
            result.rows.append({
                'size': size,
                'median_seconds': median,
                'triplets_per_second': size / median if median > 0 else float('inf'),
            })

        perf.log_summary()
        result.r_squared = linear_fit_r_squared([r['size'] for r in result.rows],
                                                [r['median_seconds'] for r in result.rows])
        logger.info(f"Ajuste lineal del tiempo de puntuación: R² = {result.r_squared:.4f}")

        if self.config.out:
            result.csv_path = self.storage.write_csv(
                self.config.out, ['size', 'median_seconds', 'triplets_per_second'],
                [[r['size'], f"{r['median_seconds']:.6f}", f"{r['triplets_per_second']:.1f}"]
                 for r in result.rows],
            )
        return result


def linear_fit_r_squared(x: Sequence[float], y: Sequence[float]) -> float:
    """R² del ajuste por mínimos cuadrados y = a·x + b"""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(x) < 2:
        return float('nan')
    slope, intercept = np.polyfit(x, y, 1)
    residual = y - (slope * x + intercept)
    total = y - y.mean()
    ss_tot = float(total @ total)
    if ss_tot == 0:
        return 1.0
    return 1.0 - float(residual @ residual) / ss_tot
