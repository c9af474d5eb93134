# services/experiment_service.py
"""
Estudios sobre pares de grafos: ablación de componentes y sensibilidad a
hiperparámetros (λ, θ, negativos, solapamiento, tamaño del externo)
"""

from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from core.alignment import align_graphs
from core.evaluation import evaluate, resolve_labeled
from core.exceptions import ConfigError
from core.graph_store import GraphTag, KnowledgeGraph, ingest
from core.negative_sampling import build_negative_relation_index
from core.synthetic import SyntheticPair
from core.trainer import TrainerConfig, train
from services.storage_service import StorageService
from services.validation_service import data_generator, stage
from utils.logger import get_logger

logger = get_logger(__name__)

ABLATION_VARIANTS = ('single-KG', 'two-KG', '+confidence', 'full')

# Estudio de la CLI -> parámetro barrido
SWEEP_STUDIES = {
    'lambda': 'lambda_weight',
    'theta': 'theta',
    'negatives': 'neg_conventional',
    'overlap': 'overlap_fraction',
    'external-size': 'external_triplets',
}


@dataclass
class ExperimentInput:
    """Un par de grafos con su conjunto etiquetado"""
    target: KnowledgeGraph
    external: Optional[KnowledgeGraph]
    eval_rows: List[Tuple[str, str, str, int]]
    seed: int = 0

    @classmethod
    def from_pair(cls, pair: SyntheticPair) -> 'ExperimentInput':
        g1, g2 = pair.graphs()
        return cls(g1, g2, list(pair.eval_rows), pair.seed)

    @classmethod
    def from_files(cls, target, external, eval_path, seed: int = 0) -> 'ExperimentInput':
        with stage('ingest'):
            g1 = ingest(target, GraphTag.TARGET)
            g2 = ingest(external, GraphTag.EXTERNAL) if external else None
            rows = StorageService().read_eval_tsv(eval_path)
        return cls(g1, g2, rows, seed)


@dataclass
class VariantSpec:
    """Qué partes del sistema intervienen en una ejecución"""
    use_external: bool = True
    overlap_fraction: float = 1.0
    external_triplets: Optional[int] = None
    overrides: Dict = field(default_factory=dict)


def exact_match_baseline(g1: KnowledgeGraph, g2: KnowledgeGraph) -> int:
    """Tripletes objetivo que aparecen literalmente (mismos nombres) en el externo"""
    external = {g2.names(t) for t in g2}
    return sum(1 for t in g1 if g1.names(t) in external)


def run_variant(inp: ExperimentInput, base: TrainerConfig, variant: VariantSpec,
                kind='distmult', dim: int = 64, ks: Optional[Sequence[int]] = None) -> Dict:
    """Entrena una variante sobre una entrada y devuelve sus métricas"""
    config = replace(base, seed=inp.seed, **variant.overrides)
    rng = data_generator(inp.seed)

    if variant.use_external and inp.external is not None:
        external = inp.external
        if variant.external_triplets is not None and variant.external_triplets < len(external):
            external = external.subsample(int(variant.external_triplets), rng)
        with stage('align'):
            g1, g2, _ = align_graphs(inp.target, external, None, variant.overlap_fraction, rng)
        index = build_negative_relation_index(g1, g2) if config.neg_cross else None
    else:
        g1, g2, index = inp.target, None, None

    with stage('train'):
        result = train(g1, g2, config, kind, dim, index)

    with stage('validate'):
        d = resolve_labeled(inp.eval_rows, g1.entities, g1.relations)
        report = evaluate(result.model, d, ks)
    return report.metrics


def _mean_metrics(runs: List[Dict]) -> Dict:
    keys = runs[0]['precision_at'].keys()
    return {
        'recall': float(np.mean([r['recall'] for r in runs])),
        'mean_rank_filter': float(np.mean([r['mean_rank_filter'] for r in runs])),
        'mean_rank_raw': float(np.mean([r['mean_rank_raw'] for r in runs])),
        'precision_at': {k: float(np.mean([r['precision_at'][k] for r in runs])) for k in keys},
        'runs': len(runs),
    }


def ablation_variants() -> Dict[str, VariantSpec]:
    """
    single-KG: solo G1, sin confianza
    two-KG: G1 + G2 con negativos convencionales
    +confidence: además π sobre G1
    full: además negativos cross-KG
    """
    return {
        'single-KG': VariantSpec(use_external=False, overrides={'use_confidence': False}),
        'two-KG': VariantSpec(overrides={'use_confidence': False, 'neg_cross': False}),
        '+confidence': VariantSpec(overrides={'use_confidence': True, 'neg_cross': False}),
        'full': VariantSpec(overrides={'use_confidence': True, 'neg_cross': True}),
    }


def run_ablation(inputs: Sequence[ExperimentInput], base: TrainerConfig,
                 kind='distmult', dim: int = 64,
                 ks: Optional[Sequence[int]] = None) -> List[Dict]:
    """
    Métricas medias de cada variante sobre todas las entradas

    Returns:
        Una fila por variante: {'variant', 'recall', 'mean_rank_filter', ...}
    """
    rows = []
    for name, variant in ablation_variants().items():
        runs = [run_variant(inp, base, variant, kind, dim, ks) for inp in inputs]
        row = {'variant': name, **_mean_metrics(runs)}
        logger.info(f"Ablación {name:12} | recall {row['recall']:.4f} | "
                    f"rank filtrado {row['mean_rank_filter']:.2f}")
        rows.append(row)
    return rows


def run_sweep(inputs: Sequence[ExperimentInput], parameter: str, values: Sequence,
              base: TrainerConfig, kind='distmult', dim: int = 64,
              ks: Optional[Sequence[int]] = None) -> List[Dict]:
    """
    Barre un parámetro con el sistema completo

    Args:
        parameter: lambda_weight | theta | neg_conventional | overlap_fraction | external_triplets
        values: Valores a probar

    Returns:
        Una fila por valor con las métricas medias
    """
    if parameter not in SWEEP_STUDIES.values():
        raise ConfigError(f"Parámetro de barrido desconocido: {parameter}")
    if not values:
        raise ConfigError("El barrido necesita al menos un valor")

    rows = []
    for value in values:
        if parameter == 'overlap_fraction':
            variant = VariantSpec(overlap_fraction=float(value))
        elif parameter == 'external_triplets':
            variant = VariantSpec(external_triplets=int(value))
        elif parameter == 'neg_conventional':
            variant = VariantSpec(overrides={parameter: int(value)})
        else:
            variant = VariantSpec(overrides={parameter: float(value)})

        runs = [run_variant(inp, base, variant, kind, dim, ks) for inp in inputs]
        row = {'parameter': parameter, 'value': value, **_mean_metrics(runs)}
        logger.info(f"{parameter} = {value} | recall {row['recall']:.4f}")
        rows.append(row)
    return rows


def format_table(rows: List[Dict], key: str) -> str:
    """Tabla de texto para la consola"""
    if not rows:
        return ''
    ks = list(rows[0]['precision_at'])
    header = f"{key:>14} | {'recall':>7} | {'filtrado':>9} | {'bruto':>9} | " + \
             ' | '.join(f"P@{k:>4}" for k in ks)
    lines = [header, '-' * len(header)]
    for row in rows:
        cells = ' | '.join(f"{row['precision_at'][k]:6.3f}" for k in ks)
        lines.append(f"{str(row[key]):>14} | {row['recall']:7.4f} | {row['mean_rank_filter']:9.2f} | "
                     f"{row['mean_rank_raw']:9.2f} | {cells}")
    return '\n'.join(lines)
