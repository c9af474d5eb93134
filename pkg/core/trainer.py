# core/trainer.py
"""
Entrenamiento conjunto con estimación de confianza

    L_G1    = −Σ π(P(s₁)) · Σ_{s₁′} [log P(s₁) + log(1 − P(s₁′))]
    L_G2    = −Σ [log P(s₂) + Σ log(1 − P(s₂′)) + Σ log(1 − P(s′_e)) + Σ log(1 − P(s′_r))]
    L_final = L_G1 + λ · L_G2

π(P) = P si P ≥ θ, 0 en otro caso; se evalúa con los parámetros actuales y
actúa como peso constante (no se deriva a través de π).
"""

import math
from dataclasses import dataclass, field, asdict
from typing import Callable, Dict, List, NamedTuple, Optional, Tuple

import numpy as np

from config import Config
from core.embedding_models import (EmbeddingModel, GradientBuffer, ModelKind,
                                   log_one_minus_sigmoid, log_sigmoid, sigmoid)
from core.exceptions import ConfigError, NumericError
from core.graph_store import KnowledgeGraph, Triplet
from core.negative_sampling import (NegativeBatch, NegativeRelationIndex, NegativeSampler,
                                    spawn_generators)
from core.optimizer import SparseAdam
from utils.logger import get_logger

logger = get_logger(__name__)


@dataclass
class TrainerConfig:
    """Hiperparámetros del entrenamiento (valores por defecto en Config)"""
    learning_rate: float = Config.LEARNING_RATE
    batch_size: int = Config.BATCH_SIZE
    epochs: int = Config.EPOCHS
    lambda_weight: float = Config.LAMBDA_WEIGHT
    theta: float = Config.CONFIDENCE_THRESHOLD
    l2_coeff: float = Config.L2_COEFF
    neg_conventional: int = Config.NEG_CONVENTIONAL
    neg_cross: bool = Config.NEG_CROSS
    neg_relation: int = Config.NEG_RELATION_REPLACED
    neg_entity: int = Config.NEG_ENTITY_REPLACED
    use_confidence: bool = True
    confidence_warmup: int = Config.CONFIDENCE_WARMUP_EPOCHS
    margin: float = Config.MARGIN
    max_retries: int = Config.MAX_SAMPLING_RETRIES
    seed: int = 0

    def validate(self, kind: ModelKind = ModelKind.DISTMULT) -> 'TrainerConfig':
        checks = [
            (self.learning_rate >= 0, f"learning_rate debe ser ≥ 0: {self.learning_rate}"),
            (self.batch_size >= 1, f"batch_size debe ser ≥ 1: {self.batch_size}"),
            (self.epochs >= 0, f"epochs debe ser ≥ 0: {self.epochs}"),
            (self.lambda_weight >= 0, f"lambda debe ser ≥ 0: {self.lambda_weight}"),
            (0.0 <= self.theta < 1.0, f"theta debe estar en [0, 1): {self.theta}"),
            (self.l2_coeff >= 0, f"l2_coeff debe ser ≥ 0: {self.l2_coeff}"),
            (self.neg_conventional >= 1, f"neg_conventional debe ser ≥ 1: {self.neg_conventional}"),
            (self.neg_relation >= 0 and self.neg_entity >= 0, "los negativos cross-KG deben ser ≥ 0"),
            (self.confidence_warmup >= 0, f"confidence_warmup debe ser ≥ 0: {self.confidence_warmup}"),
            (self.margin > 0, f"margin debe ser > 0: {self.margin}"),
            (self.max_retries >= 0, f"max_retries debe ser ≥ 0: {self.max_retries}"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)

        kind = ModelKind.parse(kind)
        if self.use_confidence and not kind.multiplicative:
            logger.warning(f"{kind.value} no tiene puntuación multiplicativa: se entrena sin confianza")
            self.use_confidence = False

        if self.learning_rate not in Config.RECOMMENDED_LEARNING_RATES:
            logger.warning(f"learning_rate {self.learning_rate} fuera de la rejilla "
                           f"{Config.RECOMMENDED_LEARNING_RATES}")
        return self

    def to_dict(self) -> Dict:
        return asdict(self)


class LabeledTriplet(NamedTuple):
    triplet: Triplet
    label: int  # +1 verdadero, −1 falso


# =============================================================================
# CONFIANZA Y PÉRDIDAS
# =============================================================================

def confidence(p, theta: float = Config.CONFIDENCE_THRESHOLD):
    """π(P) = P si P ≥ θ, 0 en otro caso"""
    p = np.asarray(p, dtype=np.float64)
    out = np.where(p >= theta, p, 0.0)
    return float(out) if out.ndim == 0 else out


def target_loss(model: EmbeddingModel, positives, negatives,
                theta: float = Config.CONFIDENCE_THRESHOLD,
                weights: Optional[np.ndarray] = None,
                scale: float = 1.0,
                grads: Optional[GradientBuffer] = None) -> Tuple[float, np.ndarray]:
    """
    Pérdida ponderada por confianza sobre tripletes de G1

    Args:
        positives: (B, 3) tripletes de S₁
        negatives: (B, k, 3) corrupciones convencionales de cada positivo
        theta: Umbral de π
        weights: Pesos fijos (B,) en lugar de π(P) (p. ej. 1 durante el calentamiento)
        scale: Factor aplicado a pérdida y gradientes (1/|lote| en el entrenamiento)
        grads: Buffer donde acumular gradientes (None = solo la pérdida)

    Returns:
        (pérdida, pesos usados por positivo)
    """
    positives = np.asarray(positives, dtype=np.int64).reshape(-1, 3)
    negatives = np.asarray(negatives, dtype=np.int64).reshape(len(positives), -1, 3)
    k = negatives.shape[1]

    if weights is None:
        weights = confidence(model.probability_batch(positives), theta)
        weights = np.atleast_1d(weights)
    weights = np.asarray(weights, dtype=np.float64).reshape(-1)

    if k == 0 or len(positives) == 0:
        return 0.0, weights

    # Positivos con π = 0 no aportan pérdida ni gradiente ni tocan sus filas
    active = weights > 0
    if not active.any():
        return 0.0, weights

    pos = positives[active]
    neg = negatives[active]
    w = weights[active]

    phi_pos = model.score_batch(pos)
    phi_neg = model.score_batch(neg.reshape(-1, 3)).reshape(len(pos), k)

    per_triplet = -w * (k * log_sigmoid(phi_pos) + log_one_minus_sigmoid(phi_neg).sum(axis=1))
    loss = scale * float(per_triplet.sum())

    if grads is not None:
        up_pos = scale * w * k * (sigmoid(phi_pos) - 1.0)
        up_neg = scale * w[:, None] * sigmoid(phi_neg)
        model.score_and_grad(pos, up_pos, grads)
        model.score_and_grad(neg.reshape(-1, 3), up_neg.reshape(-1), grads)

    return loss, weights


def external_loss(model: EmbeddingModel, positives, negatives: NegativeBatch,
                  scale: float = 1.0,
                  grads: Optional[GradientBuffer] = None) -> float:
    """
    Pérdida logística sin ponderar sobre tripletes de G2

    Suma el positivo y las tres categorías de negativos (las vacías no aportan).
    """
    positives = np.asarray(positives, dtype=np.int64).reshape(-1, 3)
    if len(positives) == 0:
        return 0.0

    phi_pos = model.score_batch(positives)
    flat_neg = negatives.all_triplets()
    phi_neg = model.score_batch(flat_neg) if len(flat_neg) else np.zeros(0)

    loss = -float(log_sigmoid(phi_pos).sum()) - float(log_one_minus_sigmoid(phi_neg).sum())
    loss *= scale

    if grads is not None:
        model.score_and_grad(positives, scale * (sigmoid(phi_pos) - 1.0), grads)
        if len(flat_neg):
            model.score_and_grad(flat_neg, scale * sigmoid(phi_neg), grads)

    return loss


def margin_loss(model: EmbeddingModel, positives, negatives: NegativeBatch,
                margin: float = Config.MARGIN, scale: float = 1.0,
                grads: Optional[GradientBuffer] = None) -> float:
    """
    Pérdida de margen por pares max(φ(s′) − φ(s) + γ, 0), usada por TransE

    Cada positivo se compara con todos sus negativos válidos.
    """
    positives = np.asarray(positives, dtype=np.int64).reshape(-1, 3)
    b = len(positives)
    if b == 0:
        return 0.0

    parts = [negatives.conventional.reshape(b, -1, 3)]
    masks = [np.ones(parts[0].shape[:2], dtype=bool)]
    for extra, mask in ((negatives.relation_replaced, negatives.relation_mask),
                        (negatives.entity_replaced, negatives.entity_mask)):
        if extra.shape[1]:
            parts.append(extra)
            masks.append(mask)
    neg = np.concatenate(parts, axis=1)
    mask = np.concatenate(masks, axis=1)
    if neg.shape[1] == 0:
        return 0.0

    phi_pos = model.score_batch(positives)
    phi_neg = model.score_batch(neg.reshape(-1, 3)).reshape(b, -1)

    hinge = phi_neg - phi_pos[:, None] + margin
    active = (hinge > 0) & mask
    loss = scale * float(np.where(active, hinge, 0.0).sum())

    if grads is not None and active.any():
        counts = active.sum(axis=1).astype(np.float64)
        model.score_and_grad(positives, -scale * counts, grads)
        model.score_and_grad(neg.reshape(-1, 3), scale * active.reshape(-1).astype(np.float64), grads)

    return loss


# =============================================================================
# OBJETIVO CONJUNTO DE UN PASO
# =============================================================================

@dataclass
class StepResult:
    loss: float
    loss_g1: float
    loss_g2: float
    grads: GradientBuffer
    weights: np.ndarray


def joint_loss(model: EmbeddingModel, config: TrainerConfig,
               positives_g1, negatives_g1: NegativeBatch,
               positives_g2, negatives_g2: Optional[NegativeBatch],
               lambda_weight: Optional[float] = None,
               gating: bool = True,
               with_grads: bool = True) -> StepResult:
    """
    L_final = (L_G1 + R_G1) + λ (L_G2 + R_G2) para un paso

    Cada parte se promedia sobre su lote y R es la penalización L2 de las
    filas que esa parte toca; así L_final es afín en λ.

    Args:
        gating: False fuerza π ≡ 1 (calentamiento o ablación sin confianza)
    """
    lam = config.lambda_weight if lambda_weight is None else lambda_weight
    kind = model.kind

    positives_g1 = np.asarray(positives_g1, dtype=np.int64).reshape(-1, 3)
    positives_g2 = np.asarray(positives_g2, dtype=np.int64).reshape(-1, 3)

    # Los buffers se llenan siempre: R depende de las filas tocadas
    buf1 = GradientBuffer()
    scale1 = 1.0 / max(len(positives_g1), 1)
    weights = np.ones(len(positives_g1))

    if kind.multiplicative:
        use_pi = gating and config.use_confidence
        loss1, weights = target_loss(
            model, positives_g1, negatives_g1.conventional, config.theta,
            weights=None if use_pi else np.ones(len(positives_g1)),
            scale=scale1, grads=buf1,
        )
    else:
        loss1 = margin_loss(model, positives_g1, negatives_g1, config.margin, scale1, buf1)

    touched1 = buf1.touched()
    reg1 = model.l2_penalty_and_grad(touched1, config.l2_coeff, buf1) if touched1 else 0.0

    loss2 = reg2 = 0.0
    buf2 = GradientBuffer()
    if negatives_g2 is not None and len(positives_g2):
        scale2 = 1.0 / len(positives_g2)
        if kind.multiplicative:
            loss2 = external_loss(model, positives_g2, negatives_g2, scale2, buf2)
        else:
            loss2 = margin_loss(model, positives_g2, negatives_g2, config.margin, scale2, buf2)
        touched2 = buf2.touched()
        reg2 = model.l2_penalty_and_grad(touched2, config.l2_coeff, buf2) if touched2 else 0.0

    grads = GradientBuffer()
    if with_grads:
        grads.extend(buf1)
        if lam != 0:
            grads.extend(buf2, scale=lam)

    total = (loss1 + reg1) + lam * (loss2 + reg2)
    return StepResult(loss=total, loss_g1=loss1, loss_g2=loss2, grads=grads, weights=weights)


# =============================================================================
# BUCLE DE ENTRENAMIENTO
# =============================================================================

@dataclass
class TrainingResult:
    model: EmbeddingModel
    log: List[Dict] = field(default_factory=list)


def train(g1: KnowledgeGraph, g2: Optional[KnowledgeGraph], config: TrainerConfig,
          kind=Config.MODEL_KIND, dim: int = Config.EMBEDDING_DIM,
          index: Optional[NegativeRelationIndex] = None,
          model: Optional[EmbeddingModel] = None,
          on_epoch: Optional[Callable[[Dict], None]] = None) -> TrainingResult:
    """
    Entrena el modelo sobre G1 (y G2 si se da) con L_G1 + λ L_G2

    Cada paso toma un lote de G1 y un lote de G2; el tamaño del lote de G2 es
    proporcional para recorrer ambos grafos una vez por época.

    Args:
        g1: Grafo objetivo en el espacio compartido
        g2: Grafo externo en el espacio compartido (None = un solo grafo)
        config: Hiperparámetros
        kind: Tipo de modelo
        dim: Dimensión de los embeddings
        index: Índice de relaciones negativas (necesario con neg_cross)
        model: Modelo inicial (None = inicializar con config.seed)
        on_epoch: Callback con la entrada del log de cada época

    Returns:
        TrainingResult con el modelo y una entrada de log por época
    """
    kind = ModelKind.parse(kind)
    config.validate(kind)

    if len(g1) == 0:
        raise ConfigError("El grafo objetivo no tiene tripletes para entrenar")

    if model is None:
        model = EmbeddingModel.init(kind, dim, g1.num_entities, g1.num_relations, config.seed)

    use_g2 = g2 is not None and len(g2) > 0 and config.lambda_weight > 0
    if config.neg_cross and use_g2 and index is None:
        raise ConfigError("El muestreo cross-KG requiere el índice de relaciones negativas")

    shuffle_rng, sampler_rng = spawn_generators(config.seed, 2)
    sampler = NegativeSampler(
        g1, g2 if use_g2 else None, index if use_g2 else None, sampler_rng,
        k_conventional=config.neg_conventional,
        cross=config.neg_cross,
        relation_replaced=config.neg_relation,
        entity_replaced=config.neg_entity,
        max_retries=config.max_retries,
    )
    optimizer = SparseAdam(lr=config.learning_rate)

    n1 = len(g1)
    n2 = len(g2) if use_g2 else 0
    steps = math.ceil(n1 / config.batch_size)
    batch2 = math.ceil(n2 / steps) if n2 else 0

    logger.info(f"Entrenando {kind.value} d={model.dim}: {n1} tripletes G1, {n2} tripletes G2, "
                f"{steps} pasos/época, {config.epochs} épocas")

    result = TrainingResult(model=model)

    for epoch in range(config.epochs):
        perm1 = shuffle_rng.permutation(n1)
        perm2 = shuffle_rng.permutation(n2) if n2 else None
        gating = epoch >= config.confidence_warmup
        sampler.reset_counters()

        sum1 = sum2 = 0.0
        gated = 0

        for step in range(steps):
            batch_id = epoch * steps + step
            pos1 = g1.triplets[perm1[step * config.batch_size:(step + 1) * config.batch_size]]
            negs1 = sampler.sample_target(pos1)

            if n2:
                pos2 = g2.triplets[perm2[step * batch2:(step + 1) * batch2]]
                negs2 = sampler.sample_external(pos2) if len(pos2) else None
            else:
                pos2, negs2 = np.empty((0, 3), dtype=np.int64), None

            step_result = joint_loss(model, config, pos1, negs1, pos2, negs2, gating=gating)

            if not np.isfinite(step_result.loss):
                raise NumericError(
                    f"Pérdida no finita ({step_result.loss}) en la época {epoch}, lote {batch_id}",
                    epoch=epoch, batch_id=batch_id,
                )

            optimizer.step(model.params, step_result.grads.reduce())

            sum1 += step_result.loss_g1
            sum2 += step_result.loss_g2
            if kind.multiplicative and gating and config.use_confidence:
                gated += int((step_result.weights == 0).sum())

        entry = {
            'epoch': epoch,
            'mean_loss_g1': sum1 / steps,
            'mean_loss_g2': sum2 / steps if n2 else 0.0,
            'gated_fraction': gated / n1,
        }
        result.log.append(entry)

        if sampler.cross and any(sampler.no_candidate.values()):
            logger.info(f"Época {epoch}: categorías cross-KG sin candidato {sampler.no_candidate}")
        logger.info(f"Época {epoch + 1}/{config.epochs} | L_G1 {entry['mean_loss_g1']:.4f} | "
                    f"L_G2 {entry['mean_loss_g2']:.4f} | filtrados {entry['gated_fraction']:.1%}")

        if on_epoch is not None:
            on_epoch(entry)

    if not model.is_finite():
        raise NumericError("Parámetros no finitos al terminar el entrenamiento")

    return result
