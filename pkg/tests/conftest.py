import pytest

from cliplearn.synthetic import family_kb, synthetic_kb


@pytest.fixture(scope="session")
def family():
    return family_kb()


@pytest.fixture(scope="session")
def synth():
    """Small KB: 50 individuals, 8 atomic concepts, 3 roles."""
    return synthetic_kb(n_individuals=50, n_concepts=8, n_roles=3, seed=0)
