from __future__ import annotations

import numpy as np
import pytest

from modeguide.data import make_planted_model
from modeguide.oracle import GmmClassModel, Mixture
from modeguide.schedule import build_linear_schedule


@pytest.fixture(scope="session")
def sched():
    return build_linear_schedule()


@pytest.fixture(scope="session")
def planted():
    return make_planted_model(2, 8, 30.0, "imbalanced", 0.3, 1.0, 2)


@pytest.fixture(scope="session")
def two_mode():
    """Symmetric modes at (+-3, 0) with equal weights, one class."""
    return GmmClassModel({0: Mixture([0.5, 0.5], [[3.0, 0.0], [-3.0, 0.0]], [1.0, 1.0])})


@pytest.fixture(scope="session")
def std_normal():
    return GmmClassModel({0: Mixture([1.0], [[0.0, 0.0]], [1.0])})


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
