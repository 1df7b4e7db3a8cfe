import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kindg.mesh import (DegenerateBox, Macrocell, NodeNotOnFace, NonConformalInterface, build_box_macromesh,
                        build_macromesh, cofactor, match_interface_nodes, scaled_normal)


def test_unit_square_counts():
    mesh = build_box_macromesh([0, 0], [1, 1], [4, 4], [1, 1], 1)
    assert mesh.n_macro == 16
    assert len(mesh.interfaces) == 24
    assert len(mesh.boundary_faces) == 16


def test_channel_geometry_node_count():
    # 16x16 macrocells of 4x20 subcells at degree 2: 12x60 points per macrocell
    mesh = build_box_macromesh([-1, -5], [1, 5], [16, 16], [4, 20], 2)
    assert mesh.nodes_per_macro == 720
    pts = mesh.points()[0]
    assert np.unique(np.round(pts[:, 0], 12)).size == 9
    assert pts.shape == (720, 2)


def test_single_cell_cube_weights():
    mesh = build_box_macromesh([0, 0, 0], [1, 1, 1], [1, 1, 1], [1, 1, 1], 1)
    np.testing.assert_allclose(mesh.weights()[0], np.full(8, 1 / 8))


def test_cofactor_examples():
    np.testing.assert_allclose(cofactor(np.eye(3)), np.eye(3))
    np.testing.assert_allclose(cofactor(np.diag([2.0, 3.0, 5.0])), np.diag([15.0, 10.0, 6.0]))
    a, b, c, d = 1.0, 2.0, 3.0, 4.0
    np.testing.assert_allclose(cofactor([[a, b], [c, d]]), [[d, -c], [-b, a]])
    # adjugate form stays valid for singular input
    np.testing.assert_allclose(cofactor(np.zeros((3, 3))), np.zeros((3, 3)))


@settings(max_examples=50, deadline=None)
@given(D=st.integers(2, 3), seed=st.integers(0, 2 ** 31))
def test_cofactor_is_det_inverse_transpose(D, seed):
    m = np.random.default_rng(seed).standard_normal((D, D)) + 3 * np.eye(D)
    np.testing.assert_allclose(cofactor(m), np.linalg.det(m) * np.linalg.inv(m).T, atol=1e-10)


def test_scaled_normal_reference_and_scaling():
    for h in (2.0, 0.5):
        mesh = build_box_macromesh([-1, -1, -1], [-1 + h, -1 + h, -1 + h], [1, 1, 1], [1, 1, 1], 1)
        c, ref = mesh.macrocells[0], mesh.ref
        n = scaled_normal(c, 0, 1, 1, ref)
        np.testing.assert_allclose(n, (h / 2) ** 2 * ref.face_normals[1])
        np.testing.assert_allclose(scaled_normal(c, 0, 0, 0, ref), -n)
    with pytest.raises(NodeNotOnFace):
        scaled_normal(c, 0, 0, 1, ref)


def test_match_interface_nodes():
    mesh = build_box_macromesh([0, 0], [2, 1], [2, 1], [1, 1], 2)
    it = mesh.interfaces[0]
    assert it.size == 3
    a, b = mesh.macrocells[it.left], mesh.macrocells[it.right]
    pl = a.x[it.left_nodes[:, 0], it.left_nodes[:, 1]]
    pr = b.x[it.right_nodes[:, 0], it.right_nodes[:, 1]]
    np.testing.assert_allclose(pl, pr, atol=1e-14)
    rng = np.random.default_rng(0)
    perm = rng.permutation(5)
    pts = rng.standard_normal((5, 2))
    p = match_interface_nodes(pts, pts[perm])
    np.testing.assert_allclose(pts[perm][p], pts)
    q = match_interface_nodes(pts[perm], pts)
    assert np.array_equal(q[p], np.arange(5)) or np.array_equal(p[q], np.arange(5))
    with pytest.raises(NonConformalInterface):
        match_interface_nodes(pts, pts[:4])


def test_mismatched_subdivision_rejected():
    left = Macrocell(0, np.array([[0, 0], [1, 0], [0, 1], [1, 1]], dtype=float), (1, 1))
    right = Macrocell(1, np.array([[1, 0], [2, 0], [1, 1], [2, 1]], dtype=float), (1, 2))
    with pytest.raises(NonConformalInterface):
        build_macromesh([left, right], 2, 2, (1, 1))


@settings(max_examples=25, deadline=None)
@given(D=st.integers(1, 3), d=st.integers(1, 3), seed=st.integers(0, 10 ** 6))
def test_geometric_conservation(D, d, seed):
    rng = np.random.default_rng(seed)
    lo = rng.uniform(-2, 0, D)
    hi = lo + rng.uniform(0.1, 3, D)
    macro = rng.integers(1, 3, D)
    sub = rng.integers(1, 3, D)
    mesh = build_box_macromesh(lo, hi, macro, sub, d)
    vol = np.prod(hi - lo) / mesh.n_macro / mesh.n_sub
    for c in mesh.macrocells:
        np.testing.assert_allclose(c.omega.sum(axis=1), vol, rtol=1e-12)
    np.testing.assert_allclose(mesh.weights().sum(), np.prod(hi - lo), rtol=1e-12)


def test_trapezoid_macrocell_conservation():
    corners = np.array([[0, 0], [2, 0], [0.3, 1], [1.5, 1.2]], dtype=float)
    mesh = build_macromesh([Macrocell(0, corners, (3, 2))], 2, 3, (3, 2))
    x, y = corners[:, 0], corners[:, 1]
    # shoelace on the counterclockwise order 0, 1, 3, 2
    o = [0, 1, 3, 2]
    area = 0.5 * abs(np.dot(x[o], np.roll(y[o], -1)) - np.dot(y[o], np.roll(x[o], -1)))
    assert abs(mesh.weights().sum() - area) < 1e-12


def test_degenerate_box():
    with pytest.raises(DegenerateBox):
        build_box_macromesh([0, 0], [1, 0], [1, 1], [1, 1], 1)
    with pytest.raises(DegenerateBox):
        build_box_macromesh([0, 0], [1, 1], [0, 1], [1, 1], 1)
    flipped = Macrocell(0, np.array([[1, 0], [0, 0], [1, 1], [0, 1]], dtype=float), (1, 1))
    with pytest.raises(DegenerateBox):
        build_macromesh([flipped], 2, 1, (1, 1))


def test_summary_mentions_counts():
    s = build_box_macromesh([0, 0], [1, 1], [2, 2], [2, 2], 2).summary()
    assert "macrocells=4" in s and "total nodes=144" in s
