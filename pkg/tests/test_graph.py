import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kindg.graph import (CycleDetected, DepGraph, build_dep_graph, flux_signs, parallel_levels, to_dot,
                         topological_order)
from kindg.mesh import build_box_macromesh


def _graph(n, edges):
    return DepGraph(n, np.array(edges, dtype=np.int64).reshape(-1, 2), "macrocell", (0.0,))


def test_diagonal_velocity_levels_on_3x3():
    mesh = build_box_macromesh([0, 0], [1, 1], [3, 3], [1, 1], 1)
    g = build_dep_graph(mesh, (1.0, 1.0))
    order = topological_order(g)
    levels = parallel_levels(g, order)
    assert levels[:3] == [[0], [1, 3], [2, 4, 6]]
    assert levels == [[0], [1, 3], [2, 4, 6], [5, 7], [8]]
    pos = order.position
    assert pos[0] < min(pos[1], pos[3])
    assert max(pos[1], pos[3]) < min(pos[2], pos[4], pos[6])


def test_rest_velocity_has_no_edges():
    mesh = build_box_macromesh([0, 0], [1, 1], [3, 3], [2, 2], 2)
    g = build_dep_graph(mesh, (0.0, 0.0))
    assert len(g.edges) == 0
    assert parallel_levels(g) == [list(range(9))]
    assert len(build_dep_graph(mesh, (0.0, 0.0), "subcell").edges) == 0


def test_axis_velocity_on_strip_is_a_chain():
    mesh = build_box_macromesh([0, 0], [5, 1], [5, 1], [1, 1], 2)
    g = build_dep_graph(mesh, (1.0, 0.0))
    assert sorted(map(tuple, g.edges.tolist())) == [(0, 1), (1, 2), (2, 3), (3, 4)]
    assert parallel_levels(g) == [[k] for k in range(5)]
    g = build_dep_graph(mesh, (-1.0, 0.0))
    assert list(topological_order(g).order) == [4, 3, 2, 1, 0]


def test_subcell_graph_inside_macrocell():
    mesh = build_box_macromesh([0, 0], [1, 1], [1, 1], [3, 3], 1)
    g = build_dep_graph(mesh, (1.0, 1.0), "subcell", cell=0)
    assert parallel_levels(g)[:3] == [[0], [1, 3], [2, 4, 6]]


def test_global_subcell_graph_is_acyclic():
    mesh = build_box_macromesh([0, 0], [1, 1], [2, 2], [2, 2], 1)
    for v in [(1, 0.5), (-1, 1), (0, -1), (-0.3, -1)]:
        g = build_dep_graph(mesh, v, "subcell")
        assert g.n_vertices == 16
        order = topological_order(g)
        for u, w in g.edges:
            assert order.position[u] < order.position[w]


def test_flux_signs_tangent_tolerance():
    normals = np.array([[1.0, 0.0], [0.0, 1.0], [1e-14, -1.0]])
    assert flux_signs(normals, (1.0, 0.0)).tolist() == [1, 0, 0]
    assert flux_signs(normals, (0.0, -2.0)).tolist() == [0, -1, 1]


def test_topological_order_examples():
    assert list(topological_order(_graph(3, [(0, 1), (1, 2)])).order) == [0, 1, 2]
    with pytest.raises(CycleDetected) as exc:
        topological_order(_graph(3, [(0, 1), (1, 0), (1, 2)]))
    assert set(exc.value.cycle) == {0, 1}
    assert parallel_levels(_graph(4, [])) == [[0, 1, 2, 3]]
    assert parallel_levels(_graph(4, [(0, 1), (1, 2), (2, 3)])) == [[0], [1], [2], [3]]


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 30), seed=st.integers(0, 10 ** 6), p=st.floats(0.0, 0.5))
def test_random_dag_orders_and_levels(n, seed, p):
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    edges = [(perm[i], perm[j]) for i in range(n) for j in range(i + 1, n) if rng.random() < p]
    g = _graph(n, edges)
    order = topological_order(g)
    assert sorted(order.order.tolist()) == list(range(n))
    for u, w in edges:
        assert order.position[u] < order.position[w]
    levels = parallel_levels(g, order)
    lev = {u: k for k, lv in enumerate(levels) for u in lv}
    assert len(lev) == n
    for u, w in edges:
        assert lev[u] < lev[w]


def test_dot_export():
    g = _graph(2, [(0, 1)])
    text = to_dot(g)
    assert text.startswith("digraph") and "0 -> 1;" in text
