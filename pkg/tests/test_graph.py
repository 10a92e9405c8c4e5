import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from zdaswitch.graph import (Topology, all_connected_graphs, check_defense_condition,
                             circulant_graph, complete_graph, cycle_graph, defense_verdict,
                             laplacian, path_graph, random_connected_graph,
                             spectral_decomposition, star_graph, twin_pair_graph)
from zdaswitch.linalg import InvalidInputError, nullspace_basis


@st.composite
def connected_graphs(draw, max_n=7):
    n = draw(st.integers(2, max_n))
    seed = draw(st.integers(0, 2**32 - 1))
    p = draw(st.floats(0.0, 0.8))
    weighted = draw(st.booleans())
    rng = np.random.default_rng(seed)
    return random_connected_graph(n, rng, p, (0.5, 2.0) if weighted else 1.0)


# --- topology validation ----------------------------------------------------

@pytest.mark.parametrize("edges", [
    [(1, 1, 1.0)],
    [(1, 4, 1.0)],
    [(0, 1, 1.0)],
    [(1, 2, 0.0)],
    [(1, 2, -1.0)],
    [(1, 2, 1.0), (2, 1, 1.0)],
])
def test_topology_rejects_invalid_edges(edges):
    with pytest.raises(InvalidInputError):
        Topology(3, tuple(edges))


def test_topology_record_roundtrip():
    t = Topology(4, ((2, 1, 0.5), (3, 4, 2.0)), "a")
    assert Topology.from_record(t.to_record()) == t
    assert t.edges[0] == (1, 2, 0.5)


# --- laplacian --------------------------------------------------------------

def test_laplacian_empty_graph():
    assert np.array_equal(laplacian(Topology(3)), np.zeros((3, 3)))


def test_laplacian_path3():
    expected = [[1, -1, 0], [-1, 2, -1], [0, -1, 1]]
    assert np.array_equal(laplacian(path_graph(3)), expected)


def test_laplacian_k3():
    expected = 3 * np.eye(3) - np.ones((3, 3))
    assert np.array_equal(laplacian(complete_graph(3)), expected)


@given(connected_graphs())
def test_laplacian_structure(topo):
    L = laplacian(topo)
    assert np.array_equal(L, L.T)
    off = L - np.diag(np.diag(L))
    assert np.all(off <= 0)
    # diagonal is built as the row sum of the weights, so the balance is exact
    assert np.array_equal(np.diag(L), -off.sum(axis=1))


@given(st.integers(1, 7), st.integers(0, 2**32 - 1), st.floats(0, 0.6))
def test_kernel_dimension_matches_connectivity(n, seed, p):
    # arbitrary (possibly disconnected) graph; union-find decides connectivity
    rng = np.random.default_rng(seed)
    pairs = [(i, j) for i in range(1, n + 1) for j in range(i + 1, n + 1) if rng.random() < p]
    topo = Topology(n, tuple((i, j, 1.0) for i, j in pairs))
    K = nullspace_basis(laplacian(topo))
    assert K.contains(np.ones(n))
    if topo.is_connected():
        assert K.dim == 1
    else:
        assert K.dim > 1


# --- spectra ----------------------------------------------------------------

def test_spectrum_zero_matrix():
    assert np.allclose(spectral_decomposition(np.zeros((3, 3))).eigenvalues, 0)


def test_spectrum_path3():
    assert np.allclose(spectral_decomposition(laplacian(path_graph(3))).eigenvalues, [0, 1, 3])


def test_spectrum_k3():
    assert np.allclose(spectral_decomposition(laplacian(complete_graph(3))).eigenvalues, [0, 3, 3])


def test_spectrum_rejects_asymmetric():
    with pytest.raises(InvalidInputError):
        spectral_decomposition(np.array([[0.0, 1.0], [0.0, 0.0]]))


@given(connected_graphs())
def test_spectral_invariants(topo):
    L = laplacian(topo)
    sd = spectral_decomposition(L)
    lam, Q = sd.eigenvalues, sd.Q
    assert np.allclose(Q.T @ Q, np.eye(topo.n), atol=1e-10)
    assert np.max(np.abs(L @ Q - Q * lam)) <= 1e-9 * max(np.linalg.norm(L), 1)
    assert np.all(np.diff(lam) >= 0)
    assert abs(lam[0]) < 1e-9 and lam.min() > -1e-9
    for col in Q.T:
        nz = np.flatnonzero(np.abs(col) > 1e-12)
        assert col[nz[0]] > 0


# --- defense condition ------------------------------------------------------

def test_defense_k3_fails():
    v = defense_verdict(complete_graph(3), [1])
    assert not v.distinct_eigs and not v.satisfied


def test_defense_path16_passes():
    topo = path_graph(16)
    sd = spectral_decomposition(laplacian(topo))
    k = np.arange(16)
    # closed-form path spectrum 4 sin^2(k pi / 32), first eigenvector row cos((k pi / 16)(1/2))
    assert np.allclose(sd.eigenvalues, np.sort(4 * np.sin(k * np.pi / 32) ** 2), atol=1e-12)
    assert np.all(np.abs(np.cos(k * np.pi / 32)) > 0.04)
    v = check_defense_condition(sd, [1])
    assert v.satisfied and v.witness_agents == (1,)


def test_defense_star_repeated_eigenvalue():
    topo = star_graph(4, center=1)
    assert np.allclose(spectral_decomposition(laplacian(topo)).eigenvalues, [0, 1, 1, 4])
    assert not defense_verdict(topo, [1]).distinct_eigs


def test_defense_requires_valid_monitored_set():
    sd = spectral_decomposition(laplacian(path_graph(3)))
    with pytest.raises(InvalidInputError):
        check_defense_condition(sd, [])
    with pytest.raises(InvalidInputError):
        check_defense_condition(sd, [4])


def test_defense_invariant_under_automorphism_fixing_monitored():
    # cycle C6 with M = {1}: reflection about agent 1 is an automorphism
    topo = cycle_graph(6)
    perm = {2: 6, 6: 2, 3: 5, 5: 3}
    assert topo.relabel(perm).edges == topo.edges
    for graph in itertools.islice(all_connected_graphs(4), 0, None, 5):
        for p in itertools.permutations([2, 3, 4]):
            mapping = dict(zip([2, 3, 4], p))
            if graph.relabel(mapping).edges == graph.edges:
                assert defense_verdict(graph, [1]) == defense_verdict(graph.relabel(mapping), [1])


@given(connected_graphs(6), st.permutations([2, 3, 4, 5, 6]))
def test_defense_invariant_under_relabeling_unmonitored(topo, perm):
    if topo.n < 6:
        return
    mapping = dict(zip([2, 3, 4, 5, 6], perm))
    a = defense_verdict(topo, [1])
    b = defense_verdict(topo.relabel(mapping), [1])
    assert a.satisfied == b.satisfied and a.distinct_eigs == b.distinct_eigs


# --- generators -------------------------------------------------------------

def test_twin_pair_eigenvector():
    topo = twin_pair_graph(16, (4, 5), hub=6)
    L = laplacian(topo)
    e = np.zeros(16)
    e[3], e[4] = -1.0, 1.0
    assert np.allclose(L @ e, e)
    assert topo.is_connected()
    assert topo.neighbors(4) == topo.neighbors(5) == {6}


def test_twin_pair_rejects_bad_backbone():
    with pytest.raises(InvalidInputError):
        twin_pair_graph(6, (4, 5), hub=6, backbone=[1, 2, 3])
    with pytest.raises(InvalidInputError):
        twin_pair_graph(6, (4, 5), hub=4)


def test_generators_are_connected():
    rng = np.random.default_rng(0)
    for topo in (path_graph(5), cycle_graph(5), star_graph(5, 3), complete_graph(5),
                 circulant_graph(8, (1, 3)), random_connected_graph(9, rng, 0.1)):
        assert topo.is_connected()


def test_circulant_edge_count():
    assert len(circulant_graph(16, (1, 2)).edges) == 32


def test_all_connected_graphs_count():
    # number of connected labelled graphs on 4 vertices
    assert sum(1 for _ in all_connected_graphs(4)) == 38
