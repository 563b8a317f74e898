import numpy as np
import pytest

from hypermix import geometry as geo
from hypermix.gaussian import DEFAULT_BOX
from hypermix.normalizer import RadialModel, grid_for_box

_GRIDS: dict[int, RadialModel] = {}


def grid(d: int) -> RadialModel:
    """Default-box grid model, built once per dimension per session."""
    if d not in _GRIDS:
        _GRIDS[d] = grid_for_box(d, DEFAULT_BOX)
    return _GRIDS[d]


@pytest.fixture(scope="session")
def model2() -> RadialModel:
    return grid(2)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


def random_point(rng: np.random.Generator, d: int, scale: float = 1.0) -> np.ndarray:
    """Point at a random tangent vector from the origin with Gaussian coordinates."""
    v = np.zeros(d + 1)
    v[:-1] = scale * rng.standard_normal(d)
    return geo.exp_map(geo.origin(d), v)


def random_points(rng: np.random.Generator, n: int, d: int, scale: float = 1.0) -> np.ndarray:
    v = np.zeros((n, d + 1))
    v[:, :-1] = scale * rng.standard_normal((n, d))
    return geo.exp_map(geo.origin(d), v)
