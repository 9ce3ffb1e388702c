import numpy as np
import pytest

from kgbench.core import Dataset, Triple
from helpers import tiny_vocab


@pytest.fixture
def toy_dataset() -> Dataset:
    """8 entities, 2 relations, a handful of triples in every split."""
    train = [
        Triple(0, 0, 1),
        Triple(1, 0, 2),
        Triple(2, 0, 3),
        Triple(3, 1, 4),
        Triple(4, 1, 5),
        Triple(5, 0, 6),
        Triple(6, 1, 7),
        Triple(7, 0, 0),
        Triple(0, 1, 2),
        Triple(1, 1, 3),
    ]
    dev = [Triple(2, 1, 4), Triple(3, 0, 5)]
    test = [Triple(4, 0, 6), Triple(5, 1, 7)]
    return Dataset.build(tiny_vocab(8, 2), train, dev, test)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
