import itertools

import numpy as np
import pytest

from conftest import small_specs
from projloss.errors import (DimensionMismatch, InfeasibleBounds, TooManyVertices,
                             Unbounded)
from projloss.polytopes import (Kind, Polytope, contains, enumerate_vertices, lmo,
                                smoothness_constant, vertex_count)


def test_ambient_dims():
    assert Polytope.simplex(3).ambient_dim == 3
    assert Polytope.birkhoff(3).ambient_dim == 9
    assert Polytope.row_stochastic(2).ambient_dim == 4
    assert Polytope.permutahedron([3, 2, 1]).ambient_dim == 3
    assert Polytope.order_simplex(4).ambient_dim == 3
    assert Polytope.full_space(5).ambient_dim == 5


def test_invalid_descriptors():
    with pytest.raises(InfeasibleBounds):
        Polytope.knapsack(3, 2, 1)
    with pytest.raises(ValueError):
        Polytope.knapsack(3, 0, 4)
    with pytest.raises(ValueError):
        Polytope.permutahedron([1, 2])


def test_lmo_examples():
    np.testing.assert_array_equal(lmo(Polytope.simplex(3), [0.1, 2.0, -1]), [0, 1, 0])
    np.testing.assert_array_equal(lmo(Polytope.cube(3), [1, -1, 0]), [1, 0, 0])
    np.testing.assert_array_equal(lmo(Polytope.permutahedron([2, 1]), [0.3, 0.9]), [1, 2])


def test_lmo_dimension_check():
    with pytest.raises(DimensionMismatch):
        lmo(Polytope.simplex(3), [1.0, 2.0])


def test_lmo_tie_breaks_to_lowest_index():
    np.testing.assert_array_equal(lmo(Polytope.simplex(3), [1, 1, 0]), [1, 0, 0])
    np.testing.assert_array_equal(lmo(Polytope.knapsack(3, 1, 1), [0, 0, 0]), [1, 0, 0])


def test_vertex_enumeration_examples():
    np.testing.assert_array_equal(enumerate_vertices(Polytope.simplex(2)), np.eye(2))
    np.testing.assert_array_equal(
        enumerate_vertices(Polytope.order_simplex(4)),
        [[0, 0, 0], [1, 0, 0], [1, 1, 0], [1, 1, 1]])
    verts = enumerate_vertices(Polytope.knapsack(3, 0, 2))
    assert len(verts) == 7
    assert {tuple(v) for v in verts} == {
        v for v in itertools.product([0.0, 1.0], repeat=3) if sum(v) <= 2}


def test_vertex_cap():
    with pytest.raises(TooManyVertices):
        enumerate_vertices(Polytope.birkhoff(8))
    assert vertex_count(Polytope.birkhoff(8)) == 40320


@pytest.mark.parametrize("spec", small_specs() + [Polytope.birkhoff(4)],
                         ids=lambda s: s.describe())
def test_lmo_matches_vertex_maximum(spec, rng):
    verts = enumerate_vertices(spec)
    assert len({tuple(v) for v in verts}) == len(verts)
    for _ in range(200):
        v = rng.normal(size=spec.ambient_dim)
        best = verts[np.argmax(verts @ v)]
        assert lmo(spec, v) @ v == pytest.approx(best @ v, abs=1e-12)


@pytest.mark.parametrize("spec", small_specs(), ids=lambda s: s.describe())
def test_vertices_are_members(spec):
    for v in enumerate_vertices(spec):
        assert contains(spec, v, 1e-12)


@pytest.mark.parametrize("spec", small_specs(), ids=lambda s: s.describe())
def test_smoothness_matches_vertex_supremum(spec):
    verts = enumerate_vertices(spec)
    assert smoothness_constant(spec, "kl") == np.max(np.abs(verts).sum(axis=1))
    assert smoothness_constant(spec, "euclidean") == 1.0


def test_smoothness_examples():
    assert smoothness_constant(Polytope.simplex(5), "kl") == 1
    assert smoothness_constant(Polytope.knapsack(10, 2, 4), "kl") == 4
    assert smoothness_constant(Polytope.full_space(3), "euclidean") == 1
    with pytest.raises(Unbounded):
        smoothness_constant(Polytope.full_space(3), "kl")


def test_smoothness_grows_with_inclusion():
    k = 5
    chain = [Polytope.simplex(k), Polytope.knapsack(k, 0, 3), Polytope.cube(k)]
    betas = [smoothness_constant(s, "kl") for s in chain]
    assert betas == sorted(betas)


def test_contains_examples():
    assert contains(Polytope.birkhoff(2), 0.5 * np.ones(4), 1e-9)
    assert not contains(Polytope.order_simplex(3), [0.4, 0.6], 1e-9)
    assert contains(Polytope.knapsack(3, 0, 2), [1, 0.85, 0.15], 1e-9)
    assert not contains(Polytope.knapsack(3, 0, 2), [1, 0.9, 0.15], 1e-9)
    assert contains(Polytope.permutahedron([3, 2, 1]), [2, 2, 2], 1e-9)
    assert not contains(Polytope.permutahedron([3, 2, 1]), [3.5, 1.5, 1], 1e-9)


@pytest.mark.parametrize("spec", small_specs(), ids=lambda s: s.describe())
def test_descriptor_round_trip(spec):
    assert Polytope.from_dict(spec.to_dict()) == spec
    assert spec.kind in Kind
