import numpy as np
import pytest

from shs6v.params import ModelParams, scaled_params


@pytest.fixture
def p_basic():
    """Comfortable generic parameters in the admissible region."""
    return ModelParams(q=2.0, I=2, J=1, alpha=-0.15)


@pytest.fixture
def p_j2():
    return ModelParams(q=1.8, I=2, J=2, alpha=-0.08)


@pytest.fixture
def p_scaled():
    """Weakly asymmetric point used across the tilted checks."""
    return scaled_params(2, 2, 0.8, 1.0, 0.04)


def random_admissible(rng: np.random.Generator, I_max=4, J_max=4):
    I = int(rng.integers(1, I_max + 1))
    J = int(rng.integers(1, J_max + 1))
    q = float(1.0 + rng.uniform(0.05, 2.0))
    bound = q ** (-(I + J - 1))
    alpha = -bound * float(rng.uniform(0.05, 0.95))
    return ModelParams(q=q, I=I, J=J, alpha=alpha)
