"""Shared fixtures: small seeded synthetic datasets."""

import numpy as np
import pytest

from raincdf.models.schemas import MissingDataPolicy, SyntheticConfig
from raincdf.services.ingest import derive_dataset, generate_synthetic, split


def pytest_addoption(parser):
    parser.addoption(
        "--runslow", action="store_true", default=False,
        help="run full-scale (33k / 100k) experiment checks",
    )


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-scale experiment, needs --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def synthetic_config():
    return SyntheticConfig(rows=4500)


@pytest.fixture(scope="session")
def raw_data(synthetic_config):
    return generate_synthetic(synthetic_config, seed=11)


@pytest.fixture(scope="session")
def raw_split(raw_data):
    """(train, test) raw datasets: 3000 / 1500 rows."""
    return split(raw_data, 3000, 1500, seed=5)


@pytest.fixture(scope="session")
def feature_split(raw_split):
    """(train, test) features under the default policy (RR2/RR3 dropped)."""
    train, test = raw_split
    return derive_dataset(train), derive_dataset(test)


@pytest.fixture(scope="session")
def ensemble_split(raw_split):
    """(train, test) features with RR2/RR3 retained."""
    train, test = raw_split
    policy = MissingDataPolicy.keep_all()
    return derive_dataset(train, policy), derive_dataset(test, policy)
