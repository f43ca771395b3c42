import numpy as np
import pytest

from offroad_planner.geomap import CellClass, GeoTransform, IntermediateMap

FLAT = GeoTransform(30.0, 56.0, 1e-5, -1e-5)


def blank_map(width, height, transform=FLAT):
    return IntermediateMap.blank(width, height, transform)


def map_from_grid(grid, transform=FLAT):
    grid = np.asarray(grid, dtype=np.uint8)
    h, w = grid.shape
    return IntermediateMap(w, h, grid.ravel(), transform)


def trail_map(width, height, trail_cells, transform=FLAT):
    """Blank map with the given (x, y) cells marked TRAIL."""
    m = blank_map(width, height, transform)
    g = m.grid
    for x, y in trail_cells:
        g[y, x] = int(CellClass.TRAIL)
    return m


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def flat_transform():
    return FLAT
