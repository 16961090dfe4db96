import numpy as np
import pytest

from isacslam.geometry import Environment, WallSegment

PA = (5.667, 6.290)


def box_walls(x0, y0, x1, y1):
    return [WallSegment((x0, y0), (x1, y0), "S"), WallSegment((x1, y0), (x1, y1), "E"),
            WallSegment((x1, y1), (x0, y1), "N"), WallSegment((x0, y1), (x0, y0), "W")]


@pytest.fixture
def room():
    return Environment(box_walls(0, 0, 12, 10), {"pa": PA}, {}, (0, 0, 12, 10))


@pytest.fixture
def rng():
    return np.random.default_rng(7)
