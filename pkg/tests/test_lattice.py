import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from h22sigma.lattice import (
    Graph,
    LatticeError,
    build_torus,
    connected_components,
    cycle_graph,
    path_graph,
    star_graph,
)


@pytest.mark.parametrize(
    "d,L,sites,edges",
    [(1, 1, 1, 0), (1, 2, 2, 1), (1, 8, 8, 8), (2, 2, 4, 4), (2, 3, 9, 18), (3, 4, 64, 192), (3, 2, 8, 12)],
)
def test_torus_counts(d, L, sites, edges):
    T = build_torus(d, L)
    assert T.n_sites == sites
    assert T.n_edges == edges
    assert np.all(T.edges[:, 0] < T.edges[:, 1])


def test_invalid_dimension():
    with pytest.raises(LatticeError):
        build_torus(4, 3)
    with pytest.raises(LatticeError):
        build_torus(2, 0)


def test_site_coord_roundtrip():
    T = build_torus(3, 5)
    for i in range(T.n_sites):
        assert T.site(T.coord(i)) == i
    # axis 0 runs fastest
    assert T.site([1, 0, 0]) == 1 and T.site([0, 1, 0]) == 5


@given(st.integers(1, 3), st.integers(2, 7), st.data())
def test_distance_symmetry_and_offset_range(d, L, data):
    T = build_torus(d, L)
    x = data.draw(st.integers(0, T.n_sites - 1))
    y = data.draw(st.integers(0, T.n_sites - 1))
    off = T.wrapped_offset(x, y)
    assert np.all(off > -L / 2) and np.all(off <= L / 2)
    assert T.shift(x, off) == y
    assert T.distance(x, y) == T.distance(y, x) == np.abs(off).sum()
    assert T.euclidean_distance(x, y) == pytest.approx(T.euclidean_distance(y, x))
    assert T.distances_from(x)[y] == T.distance(x, y)


@pytest.mark.parametrize("d,L", [(1, 2), (1, 7), (2, 2), (2, 4), (3, 3), (3, 2)])
def test_fourier_eigenvalues_match_dense_laplacian(d, L):
    T = build_torus(d, L)
    dense = np.linalg.eigvalsh(T.laplacian())
    np.testing.assert_allclose(np.sort(T.fourier_eigenvalues()), dense, atol=1e-12)


def test_neighbors_are_symmetric():
    T = build_torus(3, 3)
    for i in range(T.n_sites):
        assert len(T.neighbors[i]) == 6
        for j in T.neighbors[i]:
            assert i in T.neighbors[j]


def test_components():
    g = path_graph(6)
    comps = connected_components(g, [0, 1, 3, 4, 5])
    assert sorted(map(sorted, comps)) == [[0, 1], [3, 4, 5]]
    assert g.is_connected()
    assert not g.is_connected([0, 2])


def test_small_graphs():
    assert star_graph(2).n_edges == 2 and star_graph(2).degree(0) == 2
    assert cycle_graph(3).n_edges == 3
    assert path_graph(1).n_edges == 0
    g = Graph.from_edges(3, [(0, 1), (1, 0), (2, 2), (1, 2)])
    assert g.n_edges == 2
