# main.py - Punto de entrada (CLI)
"""
Validación de un grafo de conocimiento objetivo con un grafo externo

Uso:
    python main.py ingest-check --target g1.tsv --external g2.tsv
    python main.py train --target g1.tsv --external g2.tsv --out model.ckpt
    python main.py validate --checkpoint model.ckpt --eval eval.tsv --out report.json
    python main.py corrupt --target g1.tsv --n 1250 --out eval.tsv
    python main.py bench --checkpoint model.ckpt --out bench.csv
    python main.py experiment --study ablation --seeds 0 1 2 3 4

Códigos de salida: 0 éxito, 2 configuración, 3 datos, 4 numérico, 1 inesperado
"""

import argparse
import sys
from typing import Dict, List, Optional

from config import Config, RunConfig
from core.exceptions import ConfigError, CrossValError
from utils.logger import log_error_with_context, log_system_info, setup_logger

# dest de argparse -> clave de RunConfig / TrainerConfig
_OVERRIDE_KEYS = {
    'target': 'target', 'external': 'external', 'aliases': 'aliases',
    'eval': 'eval_path', 'checkpoint': 'checkpoint', 'report': 'report', 'out': 'out',
    'model': 'model', 'dim': 'dim', 'overlap_fraction': 'overlap_fraction',
    'external_triplets': 'external_triplets', 'threads': 'threads',
    'precision_k': 'precision_k', 'tuning_fraction': 'tuning_fraction', 'log_level': 'log_level',
    'lr': 'learning_rate', 'batch': 'batch_size', 'epochs': 'epochs', 'lambda_': 'lambda_weight',
    'theta': 'theta', 'l2': 'l2_coeff', 'neg_conventional': 'neg_conventional',
    'neg_relation': 'neg_relation', 'neg_entity': 'neg_entity',
    'confidence_warmup': 'confidence_warmup', 'margin': 'margin', 'seed': 'seed',
}


def banner(title: str):
    print("\n" + "=" * 70)
    print(title)
    print("=" * 70)


# =============================================================================
# PARSER
# =============================================================================

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='Archivo TOML plano con la configuración')
    common.add_argument('--log-level', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'])
    common.add_argument('--seed', type=int, help='Semilla (por defecto 0)')
    common.add_argument('--threads', type=int, help='Hilos para puntuar (por defecto 1)')
    common.add_argument('--out', help='Archivo de salida')

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument('--target', help='TSV del grafo objetivo (G1)')
    data.add_argument('--external', help='TSV del grafo externo (G2)')
    data.add_argument('--aliases', help='TSV canónico\\talias')
    data.add_argument('--overlap-fraction', type=float, help='Fracción de entidades solapadas a conservar')
    data.add_argument('--external-triplets', type=int, help='Submuestrear G2 a N tripletes')

    training = argparse.ArgumentParser(add_help=False)
    training.add_argument('--model', choices=['distmult', 'complex', 'simple', 'transe'])
    training.add_argument('--dim', type=int, help=f"Dimensión (por defecto {Config.EMBEDDING_DIM})")
    training.add_argument('--lr', type=float, help=f"Learning rate (por defecto {Config.LEARNING_RATE})")
    training.add_argument('--batch', type=int, help=f"Tamaño de lote (por defecto {Config.BATCH_SIZE})")
    training.add_argument('--epochs', type=int, help=f"Épocas (por defecto {Config.EPOCHS})")
    training.add_argument('--lambda', dest='lambda_', type=float, help='Peso λ de la pérdida de G2')
    training.add_argument('--theta', type=float, help='Umbral θ de confianza')
    training.add_argument('--l2', type=float, help='Coeficiente L2')
    training.add_argument('--neg-conventional', type=int, help='Negativos convencionales por positivo')
    training.add_argument('--neg-cross', choices=['on', 'off'],
                          help='Negativos cross-KG (reemplazo de relación y de entidades)')
    training.add_argument('--neg-relation', type=int, help='Negativos por reemplazo de relación')
    training.add_argument('--neg-entity', type=int, help='Negativos por reemplazo de entidades')
    training.add_argument('--no-confidence', action='store_true', help='Desactiva la confianza π')
    training.add_argument('--confidence-warmup', type=int, help='Épocas iniciales con π ≡ 1')
    training.add_argument('--margin', type=float, help='Margen γ (TransE)')

    parser = argparse.ArgumentParser(
        description='Validación de grafos de conocimiento con un grafo externo'
    )
    sub = parser.add_subparsers(dest='command', required=True)

    sub.add_parser('ingest-check', parents=[common, data],
                   help='Estadísticas de ingesta y alineamiento')

    sub.add_parser('train', parents=[common, data, training],
                   help='Entrena y guarda un checkpoint')

    validate = sub.add_parser('validate', parents=[common], help='Rankea un conjunto etiquetado')
    validate.add_argument('--checkpoint', help='Checkpoint entrenado')
    validate.add_argument('--eval', help='TSV etiquetado s\\tr\\to\\t(+1|-1)')
    validate.add_argument('--report', help='Ruta del reporte JSON')
    validate.add_argument('--tuning-fraction', type=float,
                          help='Separar esta fracción para ajuste y reportar sobre el resto')
    validate.add_argument('--precision-k', type=int, nargs='+', help='Valores de K para Precision@K')

    corrupt = sub.add_parser('corrupt', parents=[common], help='Inyecta errores y escribe un TSV etiquetado')
    corrupt.add_argument('--target', help='TSV del grafo objetivo')
    corrupt.add_argument('--n', type=int, required=True, help='Número de errores')
    corrupt.add_argument('--tuning-fraction', type=float, help='Escribir también la partición ajuste/test')

    bench = sub.add_parser('bench', parents=[common], help='Tiempo de puntuación frente al tamaño')
    bench.add_argument('--checkpoint', help='Checkpoint entrenado')
    bench.add_argument('--sizes', type=int, nargs='+', default=list(Config.BENCH_SIZES))
    bench.add_argument('--repeats', type=int, default=Config.BENCH_REPEATS)

    experiment = sub.add_parser('experiment', parents=[common, data, training],
                                help='Ablación o barrido de sensibilidad')
    experiment.add_argument('--study', required=True,
                            choices=['ablation', 'lambda', 'theta', 'negatives', 'overlap', 'external-size'])
    experiment.add_argument('--values', nargs='+', default=[], help='Valores del parámetro barrido')
    experiment.add_argument('--seeds', type=int, nargs='+', default=[0])
    experiment.add_argument('--eval', help='TSV etiquetado (sin --target se usan pares sintéticos)')
    experiment.add_argument('--precision-k', type=int, nargs='+')

    return parser


def build_config(args: argparse.Namespace) -> RunConfig:
    """Archivo de configuración (si hay) y después los flags, que ganan"""
    config = RunConfig.from_file(args.config) if args.config else RunConfig()

    overrides: Dict = {}
    for dest, key in _OVERRIDE_KEYS.items():
        value = getattr(args, dest, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, 'neg_cross', None) is not None:
        overrides['neg_cross'] = args.neg_cross == 'on'
    if getattr(args, 'no_confidence', False):
        overrides['use_confidence'] = False

    return config.apply_overrides(overrides)


# =============================================================================
# COMANDOS
# =============================================================================

def run_ingest_check(config: RunConfig, args) -> int:
    from services.validation_service import ValidationService

    config.validate(require=('target',))
    stats = ValidationService(config).ingest_check()

    banner("ESTADÍSTICAS DE INGESTA")
    for name in ('target', 'external'):
        if name in stats:
            s = stats[name]
            print(f"  {s['tag']}: {s['entities']} entidades, {s['relations']} relaciones, "
                  f"{s['triplets']} tripletes ({s['duplicates_dropped']} duplicados descartados)")
    if 'external' in stats:
        print(f"  Entidades solapadas:           {stats['overlapping_entities']}")
        print(f"  Entidades en espacio común:    {stats['shared_entities']}")
        print(f"  Pares r¹ ⊥ r² (cross-KG):      {stats['cross_kg_negative_pairs']}")
        print(f"  Tripletes idénticos en G2:     {stats['exact_triplet_matches']}")

    if config.out:
        from services.storage_service import StorageService
        StorageService().save_report(config.out, stats)
    return 0


def run_train(config: RunConfig, args) -> int:
    from services.validation_service import ValidationService

    outcome = ValidationService(config).cmd_train()
    last = outcome.result.log[-1] if outcome.result.log else None

    banner("ENTRENAMIENTO COMPLETADO")
    print(f"  Modelo:      {outcome.result.model!r}")
    if last:
        print(f"  Última época: L_G1 {last['mean_loss_g1']:.4f} | L_G2 {last['mean_loss_g2']:.4f} | "
              f"filtrados {last['gated_fraction']:.1%}")
    print(f"  ✓ Checkpoint: {outcome.checkpoint_path}")
    print(f"  ✓ Log:        {outcome.log_path}")
    return 0


def run_validate(config: RunConfig, args) -> int:
    from services.validation_service import ValidationService

    report = ValidationService(config).cmd_validate()
    metrics = report['metrics']

    banner("RESULTADOS DE VALIDACIÓN")
    print(f"  Tripletes evaluados:  {report['evaluation']['size']} "
          f"({report['evaluation']['negatives']} negativos)")
    print(f"  Recall of Ranking:    {metrics['recall']:.4f}")
    print(f"  Mean Filtered Rank:   {metrics['mean_rank_filter']:.2f}")
    print(f"  Mean Raw Rank:        {metrics['mean_rank_raw']:.2f}")
    for k, value in metrics['precision_at'].items():
        print(f"  Precision@{k:<10} {value:.4f}")
    print(f"  ✓ Reporte: {report['path']}")
    return 0


def run_corrupt(config: RunConfig, args) -> int:
    from services.validation_service import ValidationService

    paths = ValidationService(config).cmd_corrupt(args.n)

    banner("ERRORES INYECTADOS")
    for name, path in paths.items():
        print(f"  ✓ {name:8} {path}")
    return 0


def run_bench(config: RunConfig, args) -> int:
    from services.validation_service import ValidationService

    if args.repeats < 1:
        raise ConfigError(f"--repeats debe ser ≥ 1: {args.repeats}")
    result = ValidationService(config).cmd_bench(args.sizes, args.repeats)

    banner("BENCHMARK DE PUNTUACIÓN")
    print(f"  {'tripletes':>10} | {'mediana (s)':>12} | {'tripletes/s':>14}")
    for row in result.rows:
        print(f"  {row['size']:>10} | {row['median_seconds']:>12.6f} | {row['triplets_per_second']:>14.1f}")
    print(f"  Ajuste lineal R² = {result.r_squared:.4f}")
    if result.csv_path:
        print(f"  ✓ CSV: {result.csv_path}")
    return 0


def run_experiment(config: RunConfig, args) -> int:
    from core.embedding_models import ModelKind
    from core.synthetic import SyntheticConfig, synthetic_pair
    from services.experiment_service import (SWEEP_STUDIES, ExperimentInput, format_table,
                                             run_ablation, run_sweep)
    from services.storage_service import StorageService

    kind = ModelKind.parse(config.model)
    config.trainer.validate(kind)

    if config.target:
        if not config.eval_path:
            raise ConfigError("experiment con --target necesita --eval")
        config.validate(require=('target', 'eval_path'))
        inputs = [ExperimentInput.from_files(config.target, config.external, config.eval_path, seed)
                  for seed in args.seeds]
    else:
        inputs = [ExperimentInput.from_pair(synthetic_pair(SyntheticConfig(), seed)) for seed in args.seeds]

    ks = config.precision_k
    if args.study == 'ablation':
        rows = run_ablation(inputs, config.trainer, kind, int(config.dim), ks)
        key = 'variant'
    else:
        if not args.values:
            raise ConfigError(f"El estudio '{args.study}' necesita --values")
        rows = run_sweep(inputs, SWEEP_STUDIES[args.study], args.values, config.trainer,
                         kind, int(config.dim), ks)
        key = 'value'

    banner(f"ESTUDIO: {args.study} ({len(inputs)} semillas)")
    print(format_table(rows, key))

    if config.out:
        StorageService().save_report(config.out, {
            'study': args.study,
            'seeds': list(args.seeds),
            'run_config': config.to_dict(),
            'rows': rows,
        })
        print(f"\n  ✓ Resultados: {config.out}")
    return 0


COMMANDS = {
    'ingest-check': run_ingest_check,
    'train': run_train,
    'validate': run_validate,
    'corrupt': run_corrupt,
    'bench': run_bench,
    'experiment': run_experiment,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    logger = setup_logger(level=args.log_level or Config.LOG_LEVEL,
                          log_to_console=Config.LOG_TO_CONSOLE,
                          log_to_file=Config.LOG_TO_FILE)

    try:
        config = build_config(args)
        logger.setLevel(config.log_level.upper())
        log_system_info(logger)
        return COMMANDS[args.command](config, args)

    except CrossValError as e:
        log_error_with_context(logger, e, {'command': args.command, 'stage': e.stage})
        print(f"✗ {e}", file=sys.stderr)
        return e.exit_code

    except KeyboardInterrupt:
        print("\n⚠ Interrumpido por el usuario", file=sys.stderr)
        return 130

    except Exception as e:
        logger.exception(f"Error inesperado en '{args.command}': {e}")
        print(f"✗ Error inesperado: {e}", file=sys.stderr)
        return 1


if __name__ == '__main__':
    sys.exit(main())
