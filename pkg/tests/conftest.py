import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # for helpers.py

from qdnn_lab.data import DatasetSpec, generate_training_set


@pytest.fixture(scope="session")
def default_spec():
    return DatasetSpec()


@pytest.fixture(scope="session")
def default_dataset(default_spec):
    return generate_training_set(default_spec)


@pytest.fixture(scope="session")
def small_spec():
    """Reduced dataset for training smoke tests: 160 cores, 640 samples."""
    return DatasetSpec(ring_count=2, points_per_semicircle=20, subsamples_per_core=3, seed=7)


@pytest.fixture(scope="session")
def small_dataset(small_spec):
    return generate_training_set(small_spec)
