import itertools
import random

import pytest
from loguru import logger

from app.commitment import setup_trapdoor
from app.group import fixed_test_params, generate_params
from app.models import CommitParams, GroupParams, Trapdoor


class FixedRandom:
    """Replays the given getrandbits results in a loop."""

    def __init__(self, *values: int):
        self._values = itertools.cycle(values)

    def getrandbits(self, k: int, /) -> int:
        return next(self._values)


@pytest.fixture(autouse=True, scope="session")
def quiet_logs():
    logger.remove()
    yield


@pytest.fixture
def toy_group() -> GroupParams:
    return fixed_test_params()


@pytest.fixture
def toy_setup(toy_group) -> tuple[CommitParams, Trapdoor]:
    """B = 8 with trapdoor b = 3."""
    return setup_trapdoor(toy_group, FixedRandom(3))


@pytest.fixture(scope="session")
def group_256() -> GroupParams:
    return generate_params(256, "tests")


@pytest.fixture
def rng() -> random.Random:
    return random.Random(1234)


@pytest.fixture
def fixed_random():
    return FixedRandom
