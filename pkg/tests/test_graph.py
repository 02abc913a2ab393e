import networkx as nx
import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings, strategies as st

from accep.graph import build_cycle_basis, build_incidence
from accep.netmodel import AcBranch, Bus, NetworkCase

from conftest import case_of


def _net(n, edges, x=None):
    x = x if x is not None else [0.1] * len(edges)
    buses = tuple(Bus(str(i)) for i in range(n))
    lines = tuple(AcBranch(f"l{k}", str(a), str(b), r=0.0, x=xl)
                  for k, ((a, b), xl) in enumerate(zip(edges, x)))
    return NetworkCase("g", buses, lines, ())


def test_two_bus_incidence():
    K = build_incidence(_net(2, [(0, 1)])).toarray()
    assert K.tolist() == [[1.0], [-1.0]]


def test_triangle_incidence_and_cycle():
    case = _net(3, [(0, 1), (1, 2), (0, 2)])
    K = build_incidence(case).toarray()
    assert K.shape == (3, 3) and np.all(K.sum(axis=0) == 0)
    cb = build_cycle_basis(case)
    assert len(cb) == 1
    col = cb.matrix.toarray()[:, 0]
    assert set(np.abs(col)) == {1.0}


def test_case5_structure():
    case, _ = case_of("case5")
    K = build_incidence(case)
    assert K.shape == (5, 6)
    assert np.all(np.asarray(K.sum(axis=0)) == 0)
    assert len(build_cycle_basis(case)) == 2


def test_tree_has_no_cycles():
    cb = build_cycle_basis(_net(4, [(0, 1), (1, 2), (1, 3)]))
    assert len(cb) == 0 and cb.matrix.shape == (3, 0)


def test_basis_is_deterministic():
    case, _ = case_of("case24")
    a, b = build_cycle_basis(case), build_cycle_basis(case)
    assert a.cycles == b.cycles
    assert (a.matrix != b.matrix).nnz == 0


@st.composite
def graphs(draw):
    n = draw(st.integers(2, 9))
    seed = draw(st.integers(0, 10_000))
    rng = np.random.default_rng(seed)
    # a random tree plus random chords, possibly several components
    edges = []
    comps = draw(st.integers(1, 2)) if n >= 4 else 1
    cut = n // 2 if comps == 2 else n
    for lo, hi in ((0, cut), (cut, n)) if comps == 2 else ((0, n),):
        for v in range(lo + 1, hi):
            edges.append((int(rng.integers(lo, v)), v))
        for _ in range(draw(st.integers(0, 5))):
            a, b = rng.integers(lo, hi, size=2)
            if a != b:
                edges.append((int(a), int(b)))
    x = rng.uniform(0.01, 1.0, size=len(edges))
    return n, edges, x, seed


@settings(max_examples=60, deadline=None)
@given(graphs())
def test_cycle_space_properties(data):
    n, edges, x, seed = data
    case = _net(n, edges, list(x))
    K = build_incidence(case).toarray()
    cb = build_cycle_basis(case)
    C = cb.matrix.toarray()
    comps = nx.number_connected_components(nx.MultiGraph(edges + [(i, i) for i in range(n)]))
    assert len(cb) == len(edges) - n + comps
    assert np.all(np.abs(K @ C) < 1e-12)
    assert np.all((np.abs(C) > 0).sum(axis=0) >= 2)
    if len(cb):
        assert np.linalg.matrix_rank(C) == len(cb)

    # any flow satisfying the cycle law derives from bus angles
    M = (C.T * x) if len(cb) else np.zeros((0, len(edges)))
    null = sla.null_space(M) if len(cb) else np.eye(len(edges))
    p = null @ np.random.default_rng(seed).normal(size=null.shape[1])
    theta = np.full(n, np.nan)
    g = nx.Graph()
    g.add_nodes_from(range(n))
    for k, (a, b) in enumerate(edges):
        if not g.has_edge(a, b):
            g.add_edge(a, b, k=k)
    for root in range(n):
        if not np.isnan(theta[root]):
            continue
        theta[root] = 0.0
        for u, v in nx.bfs_edges(g, root):
            k = g.edges[u, v]["k"]
            a, b = edges[k]
            d = p[k] * x[k]  # theta_a - theta_b
            theta[v] = theta[u] - d if u == a else theta[u] + d
    for k, (a, b) in enumerate(edges):
        assert p[k] * x[k] == pytest.approx(theta[a] - theta[b], abs=1e-9)
