# tests/test_evaluation.py

import numpy as np
import pytest

import core.evaluation as evaluation
from core.embedding_models import EmbeddingModel
from core.evaluation import (NEGATIVE, POSITIVE, EvaluationSet, default_precision_k, evaluate,
                             inject_errors, mean_filtered_rank, mean_raw_rank, precision_at, rank,
                             rank_scores, recall_of_ranking, resolve_labeled, score_triplets,
                             split_eval, summarize)
from core.exceptions import EvaluationError, VocabularyMismatchError
from core.graph_store import GraphTag, build_graph


def zero_model(num_entities=6, num_relations=3):
    m = EmbeddingModel.init('distmult', 32, num_entities, num_relations, seed=0)
    for p in m.params.values():
        p[:] = 0.0
    return m


# =============================================================================
# MÉTRICAS (CÁLCULO A MANO)
# =============================================================================

def test_metrics_hand_arithmetic():
    ranks = [1, 2, 4, 7]
    assert mean_filtered_rank(ranks) == pytest.approx(1.0)
    assert mean_raw_rank(ranks) == pytest.approx(3.5)
    assert recall_of_ranking(ranks) == pytest.approx(0.75)
    assert precision_at(ranks, 2) == pytest.approx(1.0)
    assert precision_at(ranks, 5) == pytest.approx(0.6)


def test_perfect_ranking():
    ranks = [1, 2, 3]
    assert mean_filtered_rank(ranks) == 0.0
    assert recall_of_ranking(ranks) == 1.0


def test_metrics_need_negatives():
    with pytest.raises(EvaluationError):
        mean_raw_rank([])
    report = rank_scores([0.1, 0.2], labels=[POSITIVE, POSITIVE])
    with pytest.raises(EvaluationError):
        summarize(report)


def test_precision_k_must_fit_the_ranking():
    report = rank_scores([0.3, 0.1, 0.2], labels=[POSITIVE, NEGATIVE, POSITIVE])
    assert precision_at(report, 3) == pytest.approx(1 / 3)
    with pytest.raises(EvaluationError):
        precision_at(report, 4)
    with pytest.raises(EvaluationError):
        precision_at(report, 0)


def test_metric_identities_on_random_labelings():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        n = int(rng.integers(1, 61))
        scores = rng.normal(size=n).round(1)  # redondeo para forzar empates
        labels = np.where(rng.random(n) < 0.3, NEGATIVE, POSITIVE)
        labels[rng.integers(n)] = NEGATIVE
        report = rank_scores(scores, labels)
        m = int((labels == NEGATIVE).sum())

        raw = mean_raw_rank(report)
        filtered = mean_filtered_rank(report)
        recall = recall_of_ranking(report)

        assert raw - filtered == pytest.approx((m + 1) / 2)
        assert 0.0 <= filtered <= n - m
        assert recall == pytest.approx(precision_at(report, m))
        negatives_in_top = np.isin(report.order[:m], np.flatnonzero(labels == NEGATIVE)).sum()
        assert recall == pytest.approx(negatives_in_top / m)


# =============================================================================
# RANKING
# =============================================================================

def test_rank_is_ascending_with_ties_by_ingestion_order():
    report = rank_scores([0.5, -1.0, 0.5, 0.5, -2.0])
    np.testing.assert_array_equal(report.ranks, [3, 2, 4, 5, 1])
    np.testing.assert_array_equal(report.order, [4, 1, 0, 2, 3])


def test_evaluate_with_all_scores_tied():
    d = EvaluationSet.from_parts([[0, 0, 1], [1, 0, 2], [2, 1, 3]], [[3, 2, 4], [4, 0, 0]])
    report = evaluate(zero_model(), d, ks=(1, 5))

    np.testing.assert_array_equal(report.negative_ranks(), [4, 5])
    assert report.metrics == {
        'recall': 0.0,
        'mean_rank_filter': 3.0,
        'mean_rank_raw': 4.5,
        'precision_at': {'1': 0.0, '5': pytest.approx(0.4)},
    }


def test_report_rows_follow_rank_order(shared_graphs):
    g1, _, _ = shared_graphs
    model = EmbeddingModel.init('distmult', 32, g1.num_entities, g1.num_relations, seed=1)
    d = EvaluationSet.from_parts(g1.triplets, [[3, 0, 1]])
    report = rank(model, d)
    rows = report.to_rows(g1.entities, g1.relations)

    assert [row['rank'] for row in rows] == [1, 2, 3, 4]
    assert [row['score'] for row in rows] == sorted(row['score'] for row in rows)
    assert {row['s'] for row in rows} <= set(g1.entities.names)
    assert sum(row['label'] == NEGATIVE for row in rows) == 1


def test_rank_rejects_empty_and_out_of_vocabulary_sets():
    model = zero_model()
    with pytest.raises(EvaluationError):
        rank(model, EvaluationSet(np.empty((0, 3)), []))
    with pytest.raises(VocabularyMismatchError):
        rank(model, EvaluationSet([[0, 0, 99]], [NEGATIVE]))


def test_threaded_scoring_keeps_order(monkeypatch):
    monkeypatch.setattr(evaluation, 'SCORE_CHUNK', 3)
    model = EmbeddingModel.init('complex', 32, 6, 3, seed=2)
    rng = np.random.default_rng(0)
    triplets = np.column_stack([rng.integers(0, 6, 20), rng.integers(0, 3, 20), rng.integers(0, 6, 20)])

    np.testing.assert_allclose(score_triplets(model, triplets, threads=4), model.score_batch(triplets))


def test_default_precision_k():
    assert default_precision_k(3000) == (100, 200, 500)
    assert default_precision_k(2000) == (100, 200, 500)
    assert default_precision_k(500) == (25, 50, 125)
    assert default_precision_k(20) == (1, 2, 5)


# =============================================================================
# CONJUNTO DE EVALUACIÓN
# =============================================================================

def test_evaluation_set_validation():
    with pytest.raises(EvaluationError):
        EvaluationSet([[0, 0, 1]], [0])
    with pytest.raises(EvaluationError):
        EvaluationSet([[0, 0, 1], [0, 0, 1]], [POSITIVE, NEGATIVE])
    with pytest.raises(EvaluationError):
        EvaluationSet([[0, 0, 1]], [POSITIVE, NEGATIVE])


def test_from_parts_puts_positives_first():
    d = EvaluationSet.from_parts([[0, 0, 1]], [[1, 0, 0], [2, 0, 0]])
    np.testing.assert_array_equal(d.labels, [POSITIVE, NEGATIVE, NEGATIVE])
    assert d.num_negatives == 2
    assert EvaluationSet.from_labeled(d.labeled()).labels.tolist() == d.labels.tolist()


def test_resolve_labeled_names(shared_graphs):
    g1, _, _ = shared_graphs
    rows = [('Obama', 'livesin', 'Washington', POSITIVE), ('Mexico', 'locatedat', 'USA', NEGATIVE)]
    d = resolve_labeled(rows, g1.entities, g1.relations)
    assert g1.names(d.negatives[0]) == ('Mexico', 'locatedat', 'USA')

    with pytest.raises(VocabularyMismatchError) as info:
        resolve_labeled([('Obama', 'livesin', 'Atlantis', NEGATIVE)], g1.entities, g1.relations)
    assert info.value.exit_code == 3


# =============================================================================
# INYECCIÓN DE ERRORES Y PARTICIÓN
# =============================================================================

def test_inject_errors_corrupts_one_slot():
    rows = [(f"e{i}", f"r{i % 3}", f"e{(i * 7) % 40}") for i in range(40)]
    g = build_graph(rows, GraphTag.TARGET)
    positives, corrupted = inject_errors(g, 10, np.random.default_rng(3))

    assert positives.shape == corrupted.shape == (10, 3)
    for p, c in zip(positives, corrupted):
        assert g.contains(p)
        assert not g.contains(c)
        assert p[1] == c[1]
        assert (p[0] != c[0]) + (p[2] != c[2]) == 1
    assert len({tuple(p) for p in positives.tolist()}) == 10


def test_inject_errors_bounds(raw_graphs):
    g1, _ = raw_graphs
    positives, corrupted = inject_errors(g1, 0, np.random.default_rng(0))
    assert len(positives) == len(corrupted) == 0
    with pytest.raises(EvaluationError):
        inject_errors(g1, len(g1) + 1, np.random.default_rng(0))


def test_split_eval_is_stratified():
    triplets = np.column_stack([np.arange(2500), np.zeros(2500), np.zeros(2500)])
    labels = np.where(np.arange(2500) % 5 == 0, NEGATIVE, POSITIVE)
    tuning, test = split_eval(EvaluationSet(triplets, labels), 0.2, np.random.default_rng(0))

    assert len(tuning) == 500 and len(test) == 2000
    assert tuning.num_negatives == 100 and test.num_negatives == 400
    assert list(test.triplets[:, 0]) == sorted(test.triplets[:, 0])
    assert not set(tuning.triplets[:, 0]) & set(test.triplets[:, 0])


def test_split_eval_rejects_degenerate_split():
    d = EvaluationSet.from_parts([[0, 0, 1]], [[1, 0, 0]])
    with pytest.raises(EvaluationError):
        split_eval(d, 0.2)
    with pytest.raises(EvaluationError):
        split_eval(d, 1.0)
