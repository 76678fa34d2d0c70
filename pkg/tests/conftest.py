import numpy as np
import pytest

from discofit.bench import ExperimentConfig, gen_dataset, train_test_split_indices


@pytest.fixture(scope="session")
def cfg():
    return ExperimentConfig()


@pytest.fixture(scope="session")
def dataset_a(cfg):
    return gen_dataset(cfg, spiked=False)


@pytest.fixture(scope="session")
def dataset_b(cfg):
    return gen_dataset(cfg, spiked=True)


@pytest.fixture(scope="session")
def split(cfg):
    return train_test_split_indices(cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
