# tests/conftest.py

import sys
from pathlib import Path

# Añadir el directorio raíz al path
sys.path.insert(0, str(Path(__file__).parent.parent))

import numpy as np
import pytest

from core.alignment import align_graphs
from core.negative_sampling import build_negative_relation_index
from core.synthetic import running_example, running_example_graphs


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False,
                     help='Ejecuta también los experimentos direccionales lentos')


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: experimento largo, solo con --runslow')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip_slow = pytest.mark.skip(reason='usa --runslow para ejecutarlo')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


# =============================================================================
# FIXTURES DEL EJEMPLO DE REFERENCIA
# =============================================================================

@pytest.fixture
def raw_graphs():
    """(G1, G2) en sus propios espacios de IDs"""
    return running_example_graphs()


@pytest.fixture
def shared_graphs(raw_graphs):
    """(G1, G2, mapa) en el espacio compartido"""
    return align_graphs(*raw_graphs)


@pytest.fixture
def negative_index(shared_graphs):
    g1, g2, _ = shared_graphs
    return build_negative_relation_index(g1, g2)


@pytest.fixture
def example_files(tmp_path):
    """El ejemplo escrito como TSV"""
    target, external = running_example()
    target_path = tmp_path / 'target.tsv'
    external_path = tmp_path / 'external.tsv'
    target_path.write_text(''.join('\t'.join(row) + '\n' for row in target), encoding='utf-8')
    external_path.write_text(''.join('\t'.join(row) + '\n' for row in external), encoding='utf-8')
    return target_path, external_path


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
