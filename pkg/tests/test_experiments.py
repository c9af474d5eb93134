# tests/test_experiments.py

import numpy as np
import pytest

from core.alignment import align_graphs
from core.exceptions import ConfigError
from core.graph_store import GraphTag, build_graph, ingest
from core.negative_sampling import build_negative_relation_index, overlapping_pairs
from core.synthetic import SyntheticConfig, random_pair, running_example, synthetic_pair, write_pair
from core.trainer import TrainerConfig
from services.experiment_service import (ABLATION_VARIANTS, ExperimentInput, VariantSpec,
                                         ablation_variants, exact_match_baseline, format_table,
                                         run_ablation, run_sweep, run_variant)
from services.storage_service import StorageService

SMALL_WORLD = SyntheticConfig(
    target_entities=60, target_relations=4, target_triplets=300,
    external_entities=80, external_relations=5, external_triplets=400, clusters=2,
)

QUICK = TrainerConfig(learning_rate=0.01, batch_size=64, epochs=2, seed=0)


# =============================================================================
# DATOS SINTÉTICOS
# =============================================================================

def test_running_example_rows():
    target, external = running_example()
    assert ('Obama', 'livesin', 'Washington') in target
    assert ('Mexico', 'hasneighbor', 'USA') in external
    assert len(target) == len(external) == 3


def test_random_pair_shares_entity_names():
    g1, g2 = random_pair(20, 3, 30, np.random.default_rng(0), overlap=0.5)
    assert g1.tag == GraphTag.TARGET and g2.tag == GraphTag.EXTERNAL
    assert set(g1.entities.names) & set(g2.entities.names)
    assert not set(g1.relations.names) & set(g2.relations.names)


def test_synthetic_pair_is_deterministic():
    a = synthetic_pair(SMALL_WORLD, seed=3)
    b = synthetic_pair(SMALL_WORLD, seed=3)
    c = synthetic_pair(SMALL_WORLD, seed=4)
    assert a.target_rows == b.target_rows
    assert a.eval_rows == b.eval_rows
    assert a.target_rows != c.target_rows


def test_synthetic_pair_contents():
    pair = synthetic_pair(SMALL_WORLD, seed=1)
    summary = pair.summary()

    assert 285 <= summary['target_triplets'] <= 300
    assert summary['eval_negatives'] == 15
    assert summary['overlapping_entities'] == 32  # round(0.4 · 80)

    target = set(pair.target_rows)
    assert all((s, r, o) in target for s, r, o, _ in pair.eval_rows)
    assert {y for *_, y in pair.eval_rows} == {1, -1}

    target_entities = {e for s, _, o in pair.target_rows for e in (s, o)}
    external_entities = {e for s, _, o in pair.external_rows for e in (s, o)}
    assert target_entities & external_entities <= set(pair.overlap_names)
    assert all(r.startswith('x_rel_') for _, r, _ in pair.external_rows)


def test_synthetic_external_graph_carries_twin_relations():
    g1, g2 = synthetic_pair(seed=0).graphs()
    g1, g2, _ = align_graphs(g1, g2)
    index = build_negative_relation_index(g1, g2)

    for r1 in index.target_relations:
        shared = max(len(overlapping_pairs(r1, r2, g1, g2)) for r2 in index.external_relations)
        assert shared >= 10
        assert len(index.negatives(r1)) < len(index.external_relations)
    assert index.pair_count() > 0


def test_write_pair_round_trips_through_ingest(tmp_path):
    pair = synthetic_pair(SMALL_WORLD, seed=2)
    paths = write_pair(pair, tmp_path / 'pair')

    g1 = ingest(paths['target'], GraphTag.TARGET)
    assert len(g1) == len(pair.target_rows)
    rows = StorageService().read_eval_tsv(paths['eval'])
    assert rows == pair.eval_rows


# =============================================================================
# ESTUDIOS
# =============================================================================

def test_exact_match_baseline():
    g1 = build_graph([('a', 'r', 'b'), ('b', 'r', 'c')], GraphTag.TARGET)
    g2 = build_graph([('a', 'r', 'b'), ('a', 'q', 'c')], GraphTag.EXTERNAL)
    assert exact_match_baseline(g1, g2) == 1


def test_exact_match_baseline_of_running_example(raw_graphs):
    assert exact_match_baseline(*raw_graphs) == 0


def test_ablation_variants_switch_components():
    variants = ablation_variants()
    assert tuple(variants) == ABLATION_VARIANTS
    assert not variants['single-KG'].use_external
    assert variants['two-KG'].overrides == {'use_confidence': False, 'neg_cross': False}
    assert variants['full'].overrides == {'use_confidence': True, 'neg_cross': True}


def test_run_variant_reports_metrics():
    inp = ExperimentInput.from_pair(synthetic_pair(SMALL_WORLD, seed=0))
    metrics = run_variant(inp, QUICK, VariantSpec(), 'distmult', 16, ks=(1, 5))

    assert set(metrics) == {'recall', 'mean_rank_filter', 'mean_rank_raw', 'precision_at'}
    assert 0.0 <= metrics['recall'] <= 1.0
    assert set(metrics['precision_at']) == {'1', '5'}


def test_run_variant_is_seeded():
    inp = ExperimentInput.from_pair(synthetic_pair(SMALL_WORLD, seed=0))
    variant = VariantSpec(overlap_fraction=0.5, external_triplets=200)
    a = run_variant(inp, QUICK, variant, 'distmult', 16, ks=(5,))
    b = run_variant(inp, QUICK, variant, 'distmult', 16, ks=(5,))
    assert a == b


def test_sweep_rows_and_table():
    inputs = [ExperimentInput.from_pair(synthetic_pair(SMALL_WORLD, seed=0))]
    rows = run_sweep(inputs, 'lambda_weight', [0.0, 1.0], QUICK, 'distmult', 16, ks=(5,))

    assert [row['value'] for row in rows] == [0.0, 1.0]
    assert all(row['runs'] == 1 for row in rows)
    table = format_table(rows, 'value')
    assert 'recall' in table and 'P@' in table
    assert len(table.splitlines()) == 4


def test_sweep_rejects_unknown_parameter():
    with pytest.raises(ConfigError):
        run_sweep([], 'dropout', [0.1], QUICK)
    with pytest.raises(ConfigError):
        run_sweep([], 'theta', [], QUICK)


# =============================================================================
# EXPERIMENTOS DIRECCIONALES (LENTOS)
# =============================================================================

DIRECTIONAL = TrainerConfig(learning_rate=0.01, batch_size=128, epochs=24, confidence_warmup=8)


@pytest.fixture(scope='module')
def directional_inputs():
    return [ExperimentInput.from_pair(synthetic_pair(seed=seed)) for seed in range(5)]


@pytest.mark.slow
def test_ablation_direction(directional_inputs):
    rows = {row['variant']: row for row in run_ablation(directional_inputs, DIRECTIONAL, 'distmult', 32)}
    recall = {name: rows[name]['recall'] for name in ABLATION_VARIANTS}

    assert [rows[name]['runs'] for name in ABLATION_VARIANTS] == [5] * 4
    assert recall['two-KG'] >= recall['single-KG'] + 0.02
    assert recall['+confidence'] >= recall['two-KG']
    assert recall['full'] >= recall['+confidence'] + 0.02
    assert recall['full'] >= 0.80


@pytest.mark.slow
def test_external_graph_weight(directional_inputs):
    rows = run_sweep(directional_inputs, 'lambda_weight', [0.0, 0.1, 1.0, 10.0], DIRECTIONAL, 'distmult', 32)
    recall = {row['value']: row['recall'] for row in rows}

    weighted = [recall[0.1], recall[1.0], recall[10.0]]
    assert max(weighted) - min(weighted) < 0.05
    assert recall[0.0] <= recall[1.0] - 0.03
