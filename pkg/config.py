# config.py - Configuración centralizada
"""
crossval/
│
├── main.py                          # CLI (ingest-check, train, validate, corrupt, bench, experiment)
├── config.py                        # Configuración global + RunConfig
├── requirements.txt                 # Dependencias
│
├── core/                            # Núcleo numérico
│   ├── graph_store.py              # Ingesta e índices de tripletes
│   ├── alignment.py                # Alineamiento de entidades entre grafos
│   ├── negative_sampling.py        # Muestreo negativo convencional y cross-KG
│   ├── embedding_models.py         # DistMult, ComplEx, SimplE, TransE
│   ├── optimizer.py                # Adam disperso
│   ├── trainer.py                  # Confianza, pérdidas y bucle de entrenamiento
│   ├── evaluation.py               # Ranking, métricas e inyección de errores
│   ├── synthetic.py                # Pares de grafos sintéticos
│   └── exceptions.py               # Errores y códigos de salida
│
├── services/                        # Orquestación
│   ├── validation_service.py       # Pipeline train / validate / corrupt / bench
│   ├── experiment_service.py       # Ablaciones y barridos de hiperparámetros
│   └── storage_service.py          # Checkpoints, reportes, TSV/JSONL/CSV
│
├── utils/
│   └── logger.py                   # Sistema de logging
│
├── data/                            # Datos persistentes
│   ├── checkpoints/
│   ├── reports/
│   └── logs/
│
└── tests/                           # Tests (pytest)
"""

from dataclasses import dataclass, field, fields, asdict
from pathlib import Path
from typing import Any, Dict, List, Optional, Union, get_args, get_origin

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from core.exceptions import ConfigError


class Config:
    # Rutas base
    BASE_DIR = Path(__file__).parent
    DATA_DIR = BASE_DIR / 'data'
    CHECKPOINTS_DIR = DATA_DIR / 'checkpoints'
    REPORTS_DIR = DATA_DIR / 'reports'
    LOGS_DIR = DATA_DIR / 'logs'

    # Crear directorios si no existen
    for directory in [DATA_DIR, CHECKPOINTS_DIR, REPORTS_DIR, LOGS_DIR]:
        directory.mkdir(parents=True, exist_ok=True)

    # Modelo de embeddings
    MODEL_KIND = 'distmult'  # distmult | complex | simple | transe
    EMBEDDING_DIM = 64
    RECOMMENDED_DIMS = (32, 64, 128, 256)

    # Entrenamiento
    LEARNING_RATE = 0.001
    RECOMMENDED_LEARNING_RATES = (0.0001, 0.0005, 0.001, 0.01)
    BATCH_SIZE = 256
    EPOCHS = 50
    LAMBDA_WEIGHT = 1.0  # Peso de la pérdida del grafo externo
    CONFIDENCE_THRESHOLD = 0.5  # θ: por debajo, el triplete no aporta
    CONFIDENCE_WARMUP_EPOCHS = 5  # Épocas iniciales con confianza 1
    L2_COEFF = 0.001
    MARGIN = 1.0  # γ, solo TransE

    # Adam
    ADAM_BETA1 = 0.9
    ADAM_BETA2 = 0.999
    ADAM_EPSILON = 1e-8

    # Muestreo negativo
    NEG_CONVENTIONAL = 5
    NEG_CROSS = True
    NEG_RELATION_REPLACED = 1
    NEG_ENTITY_REPLACED = 1
    MAX_SAMPLING_RETRIES = 100

    # Probabilidades
    SCORE_CLAMP = 30.0  # σ(φ) se evalúa con φ recortado a ±30

    # Evaluación
    PRECISION_K = (100, 200, 500)
    PRECISION_K_REFERENCE_SIZE = 2000  # Tamaño del test donde aplican los K de arriba
    TUNING_FRACTION = 0.2

    # Benchmark
    BENCH_SIZES = (10000, 20000, 40000, 80000, 160000)
    BENCH_REPEATS = 5

    # Logging
    LOG_LEVEL = 'INFO'  # DEBUG, INFO, WARNING, ERROR
    LOG_TO_FILE = True
    LOG_TO_CONSOLE = True


# =============================================================================
# CONFIGURACIÓN DE UNA EJECUCIÓN
# =============================================================================

_PATH_FIELDS = ('target', 'external', 'aliases', 'eval_path', 'checkpoint', 'report', 'out')
_INPUT_PATH_FIELDS = ('target', 'external', 'aliases', 'eval_path')


def _coerce(key: str, value: Any, annotation: Any) -> Any:
    """Comprueba el valor contra el tipo declarado del campo (int se acepta como float)"""
    if get_origin(annotation) is Union:
        annotation = next(a for a in get_args(annotation) if a is not type(None))

    if get_origin(annotation) is list:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"'{key}' debe ser una lista: {value!r}")
        item = get_args(annotation)[0]
        return [_coerce(key, v, item) for v in value]

    if annotation is bool:
        ok = isinstance(value, bool)
    elif annotation is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif annotation is float:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    elif annotation is str:
        value = str(value) if isinstance(value, Path) else value
        ok = isinstance(value, str)
    else:
        ok = True

    if not ok:
        raise ConfigError(f"'{key}' debe ser {annotation.__name__}: {value!r}")
    return value


def _default_trainer():
    from core.trainer import TrainerConfig
    return TrainerConfig()


@dataclass
class RunConfig:
    """
    Todo lo que define una ejecución reproducible

    Se serializa dentro de cada checkpoint y reporte; volver a ejecutar con
    el diccionario embebido reproduce las métricas.
    """
    target: Optional[str] = None
    external: Optional[str] = None
    aliases: Optional[str] = None
    eval_path: Optional[str] = None
    checkpoint: Optional[str] = None
    report: Optional[str] = None
    out: Optional[str] = None

    model: str = Config.MODEL_KIND
    dim: int = Config.EMBEDDING_DIM
    overlap_fraction: float = 1.0
    external_triplets: Optional[int] = None
    threads: int = 1
    precision_k: Optional[List[int]] = None
    tuning_fraction: Optional[float] = None
    log_level: str = Config.LOG_LEVEL

    trainer: Any = field(default_factory=_default_trainer)

    @property
    def seed(self) -> int:
        return self.trainer.seed

    # -------------------------------------------------------------------------

    @classmethod
    def run_field_names(cls) -> List[str]:
        return [f.name for f in fields(cls) if f.name != 'trainer']

    @classmethod
    def from_dict(cls, values: Dict[str, Any]) -> 'RunConfig':
        """Construye desde un diccionario plano (claves de RunConfig o TrainerConfig)"""
        config = cls()
        config.apply_overrides(values)
        return config

    @classmethod
    def from_file(cls, path) -> 'RunConfig':
        """Lee un archivo TOML plano (clave = valor)"""
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"No existe el archivo de configuración: {path}")

        try:
            with open(path, 'rb') as f:
                values = tomllib.load(f)
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"Configuración inválida en {path}: {e}") from e

        nested = [k for k, v in values.items() if isinstance(v, dict)]
        if nested:
            raise ConfigError(f"La configuración debe ser plana; secciones no soportadas: {nested}")

        return cls.from_dict(values)

    def apply_overrides(self, values: Dict[str, Any]) -> 'RunConfig':
        """Aplica overrides (los flags de la CLI ganan sobre el archivo)"""
        run_types = {f.name: f.type for f in fields(self) if f.name != 'trainer'}
        trainer_types = {f.name: f.type for f in fields(self.trainer)}
        run_names = set(run_types)
        trainer_names = set(trainer_types)

        unknown = [k for k in values if k not in run_names and k not in trainer_names]
        if unknown:
            raise ConfigError(f"Claves de configuración desconocidas: {sorted(unknown)}")

        for key, value in values.items():
            if value is None:
                continue
            if key in run_names:
                setattr(self, key, _coerce(key, value, run_types[key]))
            else:
                setattr(self.trainer, key, _coerce(key, value, trainer_types[key]))

        return self

    def to_dict(self) -> Dict[str, Any]:
        """Diccionario plano, serializable a JSON"""
        values = {name: getattr(self, name) for name in self.run_field_names()}
        if values['precision_k'] is not None:
            values['precision_k'] = [int(k) for k in values['precision_k']]
        values.update(asdict(self.trainer))
        return values

    def validate(self, require: tuple = ()) -> 'RunConfig':
        """
        Verifica rangos y rutas

        Args:
            require: Campos de ruta obligatorios para el comando actual
        """
        for name in require:
            if getattr(self, name) is None:
                raise ConfigError(f"Falta la ruta obligatoria '{name}'")

        for name in _INPUT_PATH_FIELDS:
            value = getattr(self, name)
            if value is not None and not Path(value).exists():
                raise ConfigError(f"No existe el archivo '{value}' ({name})")

        if not 0.0 < float(self.overlap_fraction) <= 1.0:
            raise ConfigError(f"overlap_fraction debe estar en (0, 1]: {self.overlap_fraction}")

        if self.external_triplets is not None and int(self.external_triplets) < 1:
            raise ConfigError(f"external_triplets debe ser ≥ 1: {self.external_triplets}")

        if int(self.dim) < 1:
            raise ConfigError(f"dim debe ser ≥ 1: {self.dim}")

        if int(self.threads) < 1:
            raise ConfigError(f"threads debe ser ≥ 1: {self.threads}")

        if self.tuning_fraction is not None and not 0.0 < float(self.tuning_fraction) < 1.0:
            raise ConfigError(f"tuning_fraction debe estar en (0, 1): {self.tuning_fraction}")

        from core.embedding_models import ModelKind
        kind = ModelKind.parse(self.model)
        self.trainer.validate(kind)

        return self
