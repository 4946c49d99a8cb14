import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rcising.lattice import Box, GeometryError, Hyperplane, Torus, hyperplanes, mms_rearrangement, reflect


@pytest.mark.parametrize("d,n", [(2, 0), (2, 1), (2, 3), (3, 2), (4, 1), (5, 1)])
def test_box_counts(d, n):
    b = Box(d, n)
    side = 2 * n + 1
    assert b.num_vertices == side**d
    assert b.num_edges == d * side ** (d - 1) * (side - 1)
    assert np.all(np.abs(b.coords) <= n)


@pytest.mark.parametrize("d,L", [(2, 3), (2, 8), (3, 4), (4, 3)])
def test_torus_counts(d, L):
    t = Torus(d, L)
    assert t.num_vertices == L**d
    assert t.num_edges == d * L**d
    deg = np.bincount(t.edges.ravel(), minlength=t.num_vertices)
    assert np.all(deg == 2 * d)


def test_dimension_and_side_limits():
    with pytest.raises(GeometryError):
        Box(1, 3)
    with pytest.raises(GeometryError):
        Box(6, 1)
    with pytest.raises(GeometryError):
        Torus(2, 2)
    with pytest.raises(GeometryError):
        Box(2, -1)


def test_edges_are_unit_steps():
    b = Box(3, 2)
    diff = b.coords[b.edges[:, 1]] - b.coords[b.edges[:, 0]]
    assert np.all(np.abs(diff).sum(axis=1) == 1)
    assert np.all(diff.sum(axis=1) == 1)


def test_hyperplanes_are_the_2d_faces():
    hs = hyperplanes(3, 2)
    assert len(hs) == 6
    assert {(h.axis, h.sign) for h in hs} == {(a, s) for a in range(3) for s in (1, -1)}
    assert all(h.level == 2 for h in hs)


def test_hyperplane_sides():
    h = Hyperplane(0, 1, 1)
    pts = np.array([[0, 0], [1, 5], [2, -1]])
    assert h.side(pts).tolist() == [-1, 0, 1]
    hm = Hyperplane(1, -1, 2)
    assert hm.side(np.array([[0, -2], [0, -3], [0, 0]])).tolist() == [0, 1, -1]
    with pytest.raises(GeometryError):
        Hyperplane(0, 0, 1)


@given(
    st.lists(st.integers(-20, 20), min_size=2, max_size=5),
    st.integers(0, 4),
    st.sampled_from([1, -1]),
    st.integers(0, 10),
)
def test_reflection_is_an_involution(x, axis, sign, level):
    axis = axis % len(x)
    h = Hyperplane(axis, sign, level)
    y = reflect(x, h)
    assert np.array_equal(reflect(y, h), np.array(x))
    assert h.side(y) == -h.side(np.array(x))
    others = [k for k in range(len(x)) if k != axis]
    assert np.array_equal(y[others], np.array(x)[others])


def test_box_reflection_map_is_symmetric_for_centred_plane():
    b = Box(2, 2)
    h = Hyperplane(0, 1, 0)
    r = b.reflection_map(h)
    assert np.all(r >= 0)
    assert np.array_equal(r[r], np.arange(b.num_vertices))
    assert b.is_symmetric(h)
    assert not b.is_symmetric(Hyperplane(0, 1, 1))


def test_partition_edges():
    b = Box(2, 2)
    part = b.partition_edges(Hyperplane(0, 1, 1))
    total = len(part.minus) + len(part.plus) + len(part.zero)
    assert total == b.num_edges
    # edges inside the plane x_0 = 1 run along axis 1: 4 of them
    assert len(part.zero) == 4


def test_torus_has_no_sides():
    with pytest.raises(GeometryError):
        Torus(2, 4).partition_edges(Hyperplane(0, 1, 1))


@given(st.lists(st.integers(-9, 9), min_size=2, max_size=5).filter(lambda v: any(v)))
def test_mms_rearrangement(x):
    low, high = mms_rearrangement(x)
    a = np.abs(np.array(x))
    assert low[0] == a.sum() and high[0] == a.max()
    assert not np.any(low[1:]) and not np.any(high[1:])


def test_find_vertex_and_contains():
    b = Box(2, 2, offset=[1, 0])
    assert b.find_vertex([3, 0]) >= 0
    assert b.find_vertex([-2, 0]) == -1
    assert b.contains_box(1) and not b.contains_box(2)
    t = Torus(2, 5)
    assert t.find_vertex([6, -1]) == t.find_vertex([1, 4])
