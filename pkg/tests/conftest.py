import pytest

from echoed_walks.rng import RandomTape


@pytest.fixture
def tape():
    return RandomTape(20240611)
