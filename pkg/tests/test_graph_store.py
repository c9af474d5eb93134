# tests/test_graph_store.py

import gzip

import numpy as np
import pytest

from core.exceptions import EmptyGraphError, ParseError, UnknownRelationError
from core.graph_store import (GraphTag, Origin, Triplet, Vocabulary, build_graph, contains,
                              entity_pairs, ingest, write_tsv_rows)


# =============================================================================
# VOCABULARIO
# =============================================================================

def test_vocabulary_ids_follow_first_appearance():
    vocab = Vocabulary()
    assert vocab.intern('b') == 0
    assert vocab.intern('a') == 1
    assert vocab.intern('b') == 0
    assert vocab.names == ('b', 'a')
    assert len(vocab) == 2
    assert 'a' in vocab and 'z' not in vocab


def test_vocabulary_append_keeps_first_lookup():
    vocab = Vocabulary(['x'], default_origin=Origin.TARGET)
    idx = vocab.append('x', Origin.EXTERNAL)
    assert idx == 1
    assert vocab.id_of('x') == 0
    assert vocab.origin_of(1) == Origin.EXTERNAL
    assert vocab.get('missing') is None


# =============================================================================
# INGESTA
# =============================================================================

def test_ingest_drops_duplicates_and_blank_lines(tmp_path):
    path = tmp_path / 'g.tsv'
    path.write_bytes(b"a\tr\tb\r\n\r\na\tr\tb\nb\tq\tc\n   \n")

    g = ingest(path, GraphTag.TARGET)

    assert len(g) == 2
    assert g.duplicates_dropped == 1
    assert g.entities.names == ('a', 'b', 'c')
    assert g.relations.names == ('r', 'q')
    assert g.triplet(0) == Triplet(0, 0, 1)


def test_ingest_reads_gzip(tmp_path):
    path = tmp_path / 'g.tsv.gz'
    with gzip.open(path, 'wt', encoding='utf-8') as f:
        f.write("Ciudad de México\tlocatedat\tUSA\n")

    g = ingest(path, GraphTag.EXTERNAL)
    assert g.tag == GraphTag.EXTERNAL
    assert g.names(g.triplet(0)) == ('Ciudad de México', 'locatedat', 'USA')


def test_ingest_reports_malformed_line(tmp_path):
    path = tmp_path / 'bad.tsv'
    path.write_text("a\tr\tb\na\tr\n", encoding='utf-8')

    with pytest.raises(ParseError) as info:
        ingest(path, GraphTag.TARGET)
    assert info.value.line_number == 2
    assert info.value.exit_code == 3


def test_ingest_rejects_empty_field(tmp_path):
    path = tmp_path / 'bad.tsv'
    path.write_text("a\t\tb\n", encoding='utf-8')
    with pytest.raises(ParseError):
        ingest(path, GraphTag.TARGET)


def test_ingest_rejects_invalid_utf8(tmp_path):
    path = tmp_path / 'latin1.tsv'
    path.write_bytes(b"a\tr\tb\n\xff\xfe\tr\tc\n")

    with pytest.raises(ParseError) as info:
        ingest(path, GraphTag.TARGET)
    assert info.value.exit_code == 3


@pytest.mark.parametrize('payload', [
    b"a\tr\tb\n",                                   # sin cabecera gzip
    gzip.compress(b"a\tr\tb\n" * 200)[:-6],          # truncado
])
def test_ingest_rejects_corrupt_gzip(tmp_path, payload):
    path = tmp_path / 'g.tsv.gz'
    path.write_bytes(payload)

    with pytest.raises(ParseError) as info:
        ingest(path, GraphTag.TARGET)
    assert info.value.exit_code == 3


def test_ingest_empty_file_is_an_error(tmp_path):
    path = tmp_path / 'empty.tsv'
    path.write_text("\n\n", encoding='utf-8')
    with pytest.raises(EmptyGraphError):
        ingest(path, GraphTag.TARGET)


def test_write_then_ingest_preserves_rows(tmp_path):
    rows = [('a', 'r', 'b'), ('b', 'r', 'c')]
    path = write_tsv_rows(tmp_path / 'sub' / 'g.tsv', rows)
    g = ingest(path, GraphTag.TARGET)
    assert [g.names(t) for t in g] == rows


# =============================================================================
# ÍNDICES
# =============================================================================

def test_indices_match_triplet_list(raw_graphs):
    g1, _ = raw_graphs
    assert g1.exists == set(g1)
    for r in range(g1.num_relations):
        expected = {(s, o) for s, rr, o in g1 if rr == r}
        assert entity_pairs(g1, r) == expected


def test_contains_and_lookup(raw_graphs):
    g1, _ = raw_graphs
    t = g1.lookup('Obama', 'livesin', 'Washington')
    assert t is not None
    assert contains(g1, t)
    assert not contains(g1, (t.object, t.relation, t.subject))
    assert g1.lookup('Obama', 'livesin', 'Mars') is None


def test_entity_pairs_unknown_relation(raw_graphs):
    g1, _ = raw_graphs
    with pytest.raises(UnknownRelationError):
        g1.entity_pairs(99)


def test_relation_without_triplets_has_empty_pairs():
    g = build_graph([('a', 'r', 'b')], GraphTag.TARGET)
    relations = Vocabulary(['r', 'unused'])
    g2 = g.with_vocabularies(g.entities, relations)
    assert g2.entity_pairs(1) == frozenset()
    assert g2.relations_present() == [0]


def test_triplets_are_read_only(raw_graphs):
    g1, _ = raw_graphs
    with pytest.raises(ValueError):
        g1.triplets[0, 0] = 5


def test_subsample_is_seeded_and_ordered(raw_graphs):
    _, g2 = raw_graphs
    a = g2.subsample(2, np.random.default_rng(3))
    b = g2.subsample(2, np.random.default_rng(3))
    assert len(a) == 2
    np.testing.assert_array_equal(a.triplets, b.triplets)
    original = [tuple(t) for t in g2.triplets.tolist()]
    kept = [original.index(tuple(t)) for t in a.triplets.tolist()]
    assert kept == sorted(kept)
    assert g2.subsample(10, np.random.default_rng(3)) is g2


# =============================================================================
# EJEMPLO DE REFERENCIA Y ORÁCULOS DE RECORRIDO
# =============================================================================

def test_running_example_target_graph(raw_graphs):
    g1, _ = raw_graphs
    assert (g1.num_entities, g1.num_relations, len(g1)) == (4, 2, 3)
    assert g1.contains(g1.lookup('Washington', 'locatedat', 'USA'))
    obama, locatedat, usa = g1.entities.id_of('Obama'), g1.relations.id_of('locatedat'), g1.entities.id_of('USA')
    assert not g1.contains((obama, locatedat, usa))
    livesin = g1.relations.id_of('livesin')
    assert g1.entity_pairs(livesin) == {(obama, g1.entities.id_of('Washington'))}


def test_indices_agree_with_line_scan(tmp_path):
    rng = np.random.default_rng(8)
    lines = [(f"e{rng.integers(6)}", f"r{rng.integers(3)}", f"e{rng.integers(6)}") for _ in range(10)]
    path = write_tsv_rows(tmp_path / 'random.tsv', lines)
    g = ingest(path, GraphTag.TARGET)

    scanned = set(lines)
    assert {g.names(t) for t in g} == scanned
    assert len(g) == len(g.exists) == len(scanned)
    assert sum(len(g.entity_pairs(r)) for r in range(g.num_relations)) == len(g.exists)

    again = ingest(path, GraphTag.TARGET)
    assert again.entities.names == g.entities.names
    np.testing.assert_array_equal(again.triplets, g.triplets)
