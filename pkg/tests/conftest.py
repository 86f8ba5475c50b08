import numpy as np
import pytest

from anisofrac.exponents import ExponentField
from anisofrac.functions import Lcg64, random_nodal
from anisofrac.mesh import build_collar, build_mesh
from anisofrac.operators import PairingCache

INSTANCES = {
    "constant_2": ["2", "2"],
    "constant_pair": ["2", "2.5"],
    "variable": ["2 + 0.5/(1+dist(x,y))", "2 + 0.5/(1+dist(x,y))"],
}


def make_cache(components, resolution=8, *, q="2", r="1.5", s=0.5, collar=True, radius=3.0,
               **kwargs):
    field = ExponentField.from_text(components, q, r, s, 2)
    mesh = build_mesh((0.0, 0.0), (1.0, 1.0), resolution)
    col = build_collar(mesh, radius) if collar else None
    return PairingCache(mesh, field, col, **kwargs)


def random_set(cache, count, seed=1, amplitude=1.0):
    rng = Lcg64(seed)
    return [random_nodal(cache.mesh, amplitude, rng) for _ in range(count)]


@pytest.fixture(scope="session")
def caches():
    return {name: make_cache(comps) for name, comps in INSTANCES.items()}


@pytest.fixture(scope="session")
def default_cache():
    return make_cache(["2", "2.5"], 12, q="2 + 0.1*x1")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
