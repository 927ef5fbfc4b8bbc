import json

import numpy as np
import pytest

from conftest import lebesgue
from twoweight import ExponentPair, GeneralOperator, norm_l2_exact
from twoweight.generate import random_measure
from twoweight.lattice import Cube, Measure, average, build_lattice
from twoweight.stopping import (CubeFamily, StoppingTree, carleson_constant, carleson_embedding_constant,
                                embedding_matrix, principal_cubes, verify_sparse_carleson)


def test_principal_cubes_example():
    m = lebesgue(1, 2)
    lat = m.lattice
    f = lat.indicator(Cube(2, (0,)))
    tree = principal_cubes(f, CubeFamily.full(lat), m)
    assert set(tree.family) == {lat.root, Cube(2, (0,))}
    assert tree.children[lat.root] == (Cube(2, (0,)),)


@pytest.mark.parametrize("f", [np.full(8, 3.0), np.zeros(8)])
def test_principal_cubes_trivial(f):
    m = lebesgue(1, 3)
    lat = m.lattice
    D0 = CubeFamily(lat, lat.cubes(1) + lat.cubes(2) + lat.cubes(3))
    tree = principal_cubes(f, D0, m)
    assert set(tree.family) == set(lat.cubes(1))
    for Q in D0:
        assert tree.pi(Q) == Q.ancestor(Q.level - 1)


def test_principal_cubes_empty():
    m = lebesgue(1, 2)
    assert principal_cubes(np.ones(4), [], m).family == ()


@pytest.mark.parametrize("seed", range(20))
def test_stopping_rule_soundness(seed):
    rng = np.random.default_rng(seed)
    lat = build_lattice(int(rng.integers(1, 3)), 3)
    m = random_measure(lat, ("uniform", "log-uniform", "atomic-with-zeros")[seed % 3], rng)
    f = rng.standard_normal(lat.num_leaves) * np.exp(2 * rng.standard_normal(lat.num_leaves))
    D0 = CubeFamily(lat, [Q for Q in lat.all_cubes if rng.random() < 0.7] + [lat.root])
    tree = principal_cubes(f, D0, m)
    a = lambda Q: average(np.abs(f), Q, m)
    for F in tree.family:
        for c in tree.children[F]:
            assert F.contains(c) and c != F and a(c) > 2 * a(F)
        kids = tree.children[F]
        for i, c in enumerate(kids):
            assert not any(c.contains(d) or d.contains(c) for d in kids[i + 1:])
    for Q in D0:
        F = tree.pi(Q)
        assert F.contains(Q) and a(Q) <= 2 * a(F) * (1 + 1e-12)
        parent = Q.parent()
        if parent is not None and parent in D0:
            assert tree.pi(parent).contains(F)  # monotone projection
    E = [tree.exceptional(F) for F in tree.family]
    assert np.all(np.sum(E, axis=0) <= 1)  # exceptional sets are disjoint
    rep = verify_sparse_carleson(tree, m)
    assert rep.sparse_ok and rep.carleson_ok and rep.ok


def test_verify_singleton_and_chain():
    m = lebesgue(1, 2)
    lat = m.lattice
    rep = verify_sparse_carleson(StoppingTree.from_family(lat, [lat.root]), m)
    assert rep.sparse_ratio == 1.0 and rep.carleson_ratio == 1.0
    # chain of three equal-mass cubes: ratio = length x mass ratio = 3
    atom = Measure(lat, [1.0, 0.0, 0.0, 0.0])
    chain = StoppingTree.from_family(lat, [lat.root, Cube(1, (0,)), Cube(2, (0,))])
    rep = verify_sparse_carleson(chain, atom)
    assert rep.carleson_ratio == pytest.approx(3.0) and not rep.carleson_ok
    assert rep.sparse_ratio == 0.0 and rep.worst_carleson == lat.root


def test_carleson_constant_examples():
    m = lebesgue(1, 1)
    lat = m.lattice
    assert carleson_constant(lat.all_cubes, m) == pytest.approx(2.0)
    assert carleson_constant([Cube(1, (1,))], m) == pytest.approx(1.0)
    for D in range(5):
        m = lebesgue(1, D)
        assert carleson_constant(CubeFamily.full(m.lattice), m) == pytest.approx(D + 1)


def test_carleson_constant_zero_mass():
    lat = build_lattice(1, 2)
    m = Measure(lat, [0.0, 0.0, 1.0, 1.0])
    assert carleson_constant([Cube(1, (0,)), Cube(2, (0,))], m) == 0.0
    assert carleson_constant([Cube(1, (0,))], m, weights={Cube(1, (0,)): 1.0}) == np.inf


def test_embedding_root_probability():
    m = lebesgue(1, 3)
    C = carleson_embedding_constant([m.lattice.root], m, 2.5)
    assert C.value == pytest.approx(1.0, rel=1e-9)


def test_embedding_matches_svd_at_p2():
    m = lebesgue(1, 2)
    fam = CubeFamily.full(m.lattice)
    C = carleson_embedding_constant(fam, m, 2.0).value
    svd = norm_l2_exact(GeneralOperator(embedding_matrix(fam, m)), m, m).value
    assert C == pytest.approx(svd, rel=1e-6)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_embedding_exact_direction(p, rng):
    for _ in range(5):
        lat = build_lattice(1, 3)
        m = random_measure(lat, "log-uniform", rng)
        fam = [Q for Q in lat.all_cubes if rng.random() < 0.5] or [lat.root]
        C = carleson_embedding_constant(fam, m, p).value
        assert C ** p >= carleson_constant(fam, m) - 1e-6


def test_family_json_roundtrip():
    lat = build_lattice(2, 2)
    fam = CubeFamily(lat, [Cube(1, (0, 1)), lat.root, Cube(1, (0, 1))], weights={lat.root: 0.5})
    assert len(fam) == 2
    back = CubeFamily.from_json(lat, json.loads(json.dumps(fam.to_json())))
    assert back == fam and back.weights == {lat.root: 0.5}
    tree = StoppingTree.from_family(lat, fam)
    d = tree.to_json()
    assert d["v"] == 1 and len(d["nodes"]) == 2
    with pytest.raises(ValueError):
        CubeFamily(lat, [Cube(3, (0, 0))])
