import random

import pytest

from leokv.geometry import ConstellationSpec
from leokv.topology import SatCoord


@pytest.fixture
def grid15():
    return ConstellationSpec(15, 15, 550_000.0)


@pytest.fixture
def center15():
    return SatCoord(7, 7)


@pytest.fixture
def rng():
    return random.Random(20240117)
