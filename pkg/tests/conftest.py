import numpy as np
import pytest

from twoweight import Measure, build_lattice
from twoweight.generate import random_measure


def leaf_coords(lat):
    side = 1 << lat.depth
    return np.array(np.unravel_index(np.arange(lat.num_leaves), (side,) * lat.n)).T


def in_cube(lat, Q):
    """Independent membership oracle from leaf coordinates."""
    c = leaf_coords(lat) >> (lat.depth - Q.level)
    return np.all(c == np.array(Q.index)[None, :], axis=1)


def oracle_average(f, Q, m):
    num = den = 0.0
    for i in np.flatnonzero(in_cube(m.lattice, Q)):
        num += f[i] * m.mass[i]
        den += m.mass[i]
    return num / den if den > 0 else 0.0


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def lebesgue(n, depth):
    return Measure.lebesgue(build_lattice(n, depth))


def random_pair(lat, rng, law="log-uniform"):
    return random_measure(lat, law, rng), random_measure(lat, law, rng)
