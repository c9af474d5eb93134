# tests/test_trainer.py

import math

import numpy as np
import pytest

from core.embedding_models import EmbeddingModel, GradientBuffer, ModelKind
from core.exceptions import ConfigError, NumericError
from core.negative_sampling import NegativeBatch, NegativeSampler
from core.synthetic import SyntheticConfig, synthetic_pair
from core.alignment import align_graphs
from core.negative_sampling import build_negative_relation_index
from core.trainer import (TrainerConfig, confidence, external_loss, joint_loss, margin_loss,
                          target_loss, train)
from test_embedding_models import max_relative_error, numeric_gradient

SMALL_WORLD = SyntheticConfig(
    target_entities=60, target_relations=4, target_triplets=300,
    external_entities=80, external_relations=5, external_triplets=400, clusters=2,
)


def zero_model(kind='distmult', num_entities=5, num_relations=4, dim=2):
    m = EmbeddingModel.init(kind, dim, num_entities, num_relations, seed=0)
    for p in m.params.values():
        p[:] = 0.0
    return m


def batch_of(conventional, relation=None, entity=None):
    conventional = np.asarray(conventional, dtype=np.int64)
    b = conventional.shape[0]
    relation = np.zeros((b, 0, 3), dtype=np.int64) if relation is None else np.asarray(relation)
    entity = np.zeros((b, 0, 3), dtype=np.int64) if entity is None else np.asarray(entity)
    return NegativeBatch(conventional, relation, np.ones(relation.shape[:2], dtype=bool),
                         entity, np.ones(entity.shape[:2], dtype=bool))


def example_batches(shared_graphs, negative_index, seed=0):
    g1, g2, _ = shared_graphs
    sampler = NegativeSampler(g1, g2, negative_index, np.random.default_rng(seed), k_conventional=2)
    return g1.triplets, sampler.sample_target(g1.triplets), g2.triplets, sampler.sample_external(g2.triplets)


# =============================================================================
# CONFIANZA
# =============================================================================

def test_confidence_thresholds_probability():
    assert confidence(0.7, 0.5) == pytest.approx(0.7)
    assert confidence(0.3, 0.5) == 0.0
    assert confidence(0.5, 0.5) == pytest.approx(0.5)
    p = np.linspace(0.0, 1.0, 11)
    np.testing.assert_array_equal(confidence(p, 0.0), p)


# =============================================================================
# PÉRDIDAS
# =============================================================================

def test_target_loss_hand_arithmetic():
    m = zero_model()
    loss, weights = target_loss(m, [[0, 0, 1]], [[[2, 0, 1]]], theta=0.5)
    assert loss == pytest.approx(-0.5 * (math.log(0.5) + math.log(0.5)))
    assert loss == pytest.approx(0.693147, abs=1e-6)
    np.testing.assert_allclose(weights, [0.5])


def test_target_below_threshold_contributes_nothing():
    m = EmbeddingModel.init('distmult', 2, 3, 1, seed=0)
    m.params['entity'][:] = 1.0
    m.params['relation'][:] = -1.0  # φ = −2 para todo triplete, P ≈ 0.12

    grads = GradientBuffer()
    loss, weights = target_loss(m, [[0, 0, 1]], [[[2, 0, 1], [0, 0, 2]]], theta=0.5, grads=grads)

    assert loss == 0.0
    np.testing.assert_array_equal(weights, [0.0])
    assert grads.is_empty()


def test_negative_terms_share_the_weight_of_their_positive():
    rng = np.random.default_rng(5)
    m = EmbeddingModel.init('distmult', 8, 6, 2, seed=1)
    positives = np.array([[0, 0, 1], [2, 1, 3]])
    negatives = rng.integers(0, 2, size=(2, 3, 3))
    negatives[..., 0] = rng.integers(0, 6, size=(2, 3))
    negatives[..., 2] = rng.integers(0, 6, size=(2, 3))
    weights = np.array([0.8, 0.6])

    loss, _ = target_loss(m, positives, negatives, weights=weights)

    expected = 0.0
    for i in range(2):
        p = m.probability_batch(positives[i:i + 1])[0]
        p_neg = 1.0 / (1.0 + np.exp(-m.score_batch(negatives[i])))
        expected -= weights[i] * (3 * np.log(p) + np.log(1.0 - p_neg).sum())
    assert loss == pytest.approx(expected, rel=1e-10)


def test_external_loss_hand_arithmetic():
    m = zero_model()
    t = [[0, 2, 1]]
    batch = batch_of([[[3, 2, 1]]], relation=[[[0, 0, 1]]], entity=[[[4, 2, 3]]])
    assert external_loss(m, t, batch) == pytest.approx(-(math.log(0.5) + 3 * math.log(0.5)))
    assert external_loss(m, t, batch) == pytest.approx(2.772588, abs=1e-6)

    empty = batch_of(np.zeros((1, 0, 3), dtype=np.int64))
    assert external_loss(m, t, empty) == pytest.approx(-math.log(0.5))


@pytest.mark.parametrize('kind', ['distmult', 'complex', 'simple'])
def test_target_loss_gradient_matches_finite_differences(kind):
    rng = np.random.default_rng(21)
    for draw in range(10):
        m = EmbeddingModel.init(kind, 4, 6, 3, seed=draw)
        positives = np.column_stack([rng.integers(0, 6, 3), rng.integers(0, 3, 3), rng.integers(0, 6, 3)])
        negatives = np.stack([positives] * 2, axis=1).copy()
        negatives[:, :, 2] = rng.integers(0, 6, size=(3, 2))
        weights = rng.uniform(0.5, 1.0, size=3)

        grads = GradientBuffer()
        target_loss(m, positives, negatives, weights=weights, scale=0.5, grads=grads)
        numeric = numeric_gradient(m, lambda: target_loss(m, positives, negatives, weights=weights, scale=0.5)[0])
        assert max_relative_error(grads.dense(m), numeric) < 1e-4


@pytest.mark.parametrize('kind', ['distmult', 'complex', 'simple'])
def test_external_loss_gradient_matches_finite_differences(kind, shared_graphs, negative_index):
    g1, g2, _ = shared_graphs
    for draw in range(10):
        m = EmbeddingModel.init(kind, 4, g1.num_entities, g1.num_relations, seed=draw)
        _, _, pos2, negs2 = example_batches(shared_graphs, negative_index, seed=draw)

        grads = GradientBuffer()
        external_loss(m, pos2, negs2, scale=1.0 / 3, grads=grads)
        numeric = numeric_gradient(m, lambda: external_loss(m, pos2, negs2, scale=1.0 / 3))
        assert max_relative_error(grads.dense(m), numeric) < 1e-4


def test_margin_loss_gradient_matches_finite_differences(shared_graphs, negative_index):
    g1, _, _ = shared_graphs
    for draw in range(10):
        m = EmbeddingModel.init('transe', 4, g1.num_entities, g1.num_relations, seed=draw)
        _, _, pos2, negs2 = example_batches(shared_graphs, negative_index, seed=draw)

        grads = GradientBuffer()
        margin_loss(m, pos2, negs2, margin=2.0, grads=grads)
        numeric = numeric_gradient(m, lambda: margin_loss(m, pos2, negs2, margin=2.0))
        assert max_relative_error(grads.dense(m), numeric) < 1e-4


def test_joint_loss_gradient_matches_finite_differences(shared_graphs, negative_index):
    g1, _, _ = shared_graphs
    config = TrainerConfig(l2_coeff=0.01, lambda_weight=0.7)
    pos1, negs1, pos2, negs2 = example_batches(shared_graphs, negative_index)

    for draw in range(5):
        m = EmbeddingModel.init('distmult', 4, g1.num_entities, g1.num_relations, seed=draw)
        step = joint_loss(m, config, pos1, negs1, pos2, negs2, gating=False)
        numeric = numeric_gradient(
            m, lambda: joint_loss(m, config, pos1, negs1, pos2, negs2, gating=False, with_grads=False).loss
        )
        assert max_relative_error(step.grads.dense(m), numeric) < 1e-4


# =============================================================================
# OBJETIVO CONJUNTO
# =============================================================================

def test_final_loss_is_affine_in_lambda(shared_graphs, negative_index):
    g1, _, _ = shared_graphs
    m = EmbeddingModel.init('distmult', 32, g1.num_entities, g1.num_relations, seed=4)
    config = TrainerConfig()
    batches = example_batches(shared_graphs, negative_index)

    losses = [joint_loss(m, config, *batches, lambda_weight=lam, with_grads=False).loss for lam in (0.0, 1.0, 2.0)]
    assert losses[2] - losses[1] == pytest.approx(losses[1] - losses[0], rel=1e-12, abs=1e-12)


def test_lambda_zero_removes_external_gradients(shared_graphs, negative_index):
    g1, _, _ = shared_graphs
    m = EmbeddingModel.init('distmult', 32, g1.num_entities, g1.num_relations, seed=4)
    config = TrainerConfig()
    pos1, negs1, pos2, negs2 = example_batches(shared_graphs, negative_index)

    with_external = joint_loss(m, config, pos1, negs1, pos2, negs2, lambda_weight=0.0, gating=False)
    target_only = joint_loss(m, config, pos1, negs1, np.empty((0, 3)), None, lambda_weight=0.0, gating=False)

    assert with_external.loss == pytest.approx(target_only.loss)
    a, b = with_external.grads.dense(m), target_only.grads.dense(m)
    for name in a:
        np.testing.assert_array_equal(a[name], b[name])


# =============================================================================
# CONFIGURACIÓN
# =============================================================================

def test_trainer_config_validation():
    TrainerConfig().validate(ModelKind.DISTMULT)
    with pytest.raises(ConfigError):
        TrainerConfig(theta=1.0).validate()
    with pytest.raises(ConfigError):
        TrainerConfig(batch_size=0).validate()
    with pytest.raises(ConfigError):
        TrainerConfig(lambda_weight=-1.0).validate()


def test_transe_trains_without_confidence(shared_graphs):
    config = TrainerConfig().validate(ModelKind.TRANSE)
    assert config.use_confidence is False
    assert TrainerConfig().validate(ModelKind.COMPLEX).use_confidence is True

    g1, _, _ = shared_graphs
    result = train(g1, None, small_config(epochs=2, confidence_warmup=0), 'transe', 32)
    assert all(entry['gated_fraction'] == 0.0 for entry in result.log)


# =============================================================================
# BUCLE DE ENTRENAMIENTO
# =============================================================================

def small_config(**overrides):
    values = dict(learning_rate=0.01, batch_size=2, epochs=3, neg_conventional=2, seed=0)
    values.update(overrides)
    return TrainerConfig(**values)


def test_zero_learning_rate_keeps_parameters(shared_graphs, negative_index):
    g1, g2, _ = shared_graphs
    initial = EmbeddingModel.init('distmult', 32, g1.num_entities, g1.num_relations, seed=0)
    model = initial.copy()

    train(g1, g2, small_config(learning_rate=0.0, epochs=1), 'distmult', 32, negative_index, model=model)
    assert model.equals(initial)


def test_zero_epochs_returns_initialization(shared_graphs, negative_index):
    g1, g2, _ = shared_graphs
    result = train(g1, g2, small_config(epochs=0, seed=5), 'distmult', 32, negative_index)
    assert result.log == []
    assert result.model.equals(EmbeddingModel.init('distmult', 32, g1.num_entities, g1.num_relations, seed=5))


def test_training_is_deterministic(shared_graphs, negative_index):
    g1, g2, _ = shared_graphs
    a = train(g1, g2, small_config(), 'complex', 32, negative_index)
    b = train(g1, g2, small_config(), 'complex', 32, negative_index)
    assert a.model.equals(b.model)
    assert a.log == b.log

    c = train(g1, g2, small_config(seed=1), 'complex', 32, negative_index)
    assert not a.model.equals(c.model)


def test_training_log_entries(shared_graphs, negative_index):
    g1, g2, _ = shared_graphs
    result = train(g1, g2, small_config(epochs=4), 'distmult', 32, negative_index)

    assert [e['epoch'] for e in result.log] == [0, 1, 2, 3]
    for entry in result.log:
        assert set(entry) == {'epoch', 'mean_loss_g1', 'mean_loss_g2', 'gated_fraction'}
        assert 0.0 <= entry['gated_fraction'] <= 1.0
        assert np.isfinite(entry['mean_loss_g1']) and entry['mean_loss_g2'] > 0
    assert result.log[0]['gated_fraction'] == 0.0  # calentamiento


def test_single_graph_and_transe_training(shared_graphs):
    g1, _, _ = shared_graphs
    single = train(g1, None, small_config(), 'distmult', 32)
    assert all(e['mean_loss_g2'] == 0.0 for e in single.log)

    transe = train(g1, None, small_config(use_confidence=False), 'transe', 32)
    assert transe.model.is_finite()


def test_non_finite_loss_aborts_with_batch_id(shared_graphs, negative_index):
    g1, g2, _ = shared_graphs
    model = EmbeddingModel.init('distmult', 32, g1.num_entities, g1.num_relations, seed=0)
    model.params['entity'][:] = np.nan

    with pytest.raises(NumericError) as info:
        train(g1, g2, small_config(), 'distmult', 32, negative_index, model=model)
    assert info.value.epoch == 0
    assert info.value.batch_id == 0
    assert info.value.exit_code == 4


def test_cross_sampling_requires_index(shared_graphs):
    g1, g2, _ = shared_graphs
    with pytest.raises(ConfigError):
        train(g1, g2, small_config(), 'distmult', 32)


def test_loss_decreases_on_toy_pair():
    improved = 0
    for seed in range(5):
        g1, g2 = synthetic_pair(SMALL_WORLD, seed).graphs()
        s1, s2, _ = align_graphs(g1, g2)
        index = build_negative_relation_index(s1, s2)
        config = TrainerConfig(learning_rate=0.01, batch_size=64, epochs=10, use_confidence=False, seed=seed)
        log = train(s1, s2, config, 'distmult', 32, index).log

        first = log[0]['mean_loss_g1'] + log[0]['mean_loss_g2']
        last = log[-1]['mean_loss_g1'] + log[-1]['mean_loss_g2']
        improved += last < first
    assert improved >= 4
