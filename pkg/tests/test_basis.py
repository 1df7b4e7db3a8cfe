import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kindg.basis import (DegreeOutOfRange, DimensionOutOfRange, build_ref_element, gauss_lobatto_1d,
                         lagrange_basis_1d, lagrange_deriv_1d)


def test_gl_low_degree_tables():
    gl = gauss_lobatto_1d(1)
    np.testing.assert_allclose(gl.points, [-1, 1])
    np.testing.assert_allclose(gl.weights, [1, 1])
    gl = gauss_lobatto_1d(2)
    np.testing.assert_allclose(gl.points, [-1, 0, 1], atol=1e-15)
    np.testing.assert_allclose(gl.weights, [1 / 3, 4 / 3, 1 / 3])
    gl = gauss_lobatto_1d(3)
    s = 1 / np.sqrt(5)
    np.testing.assert_allclose(gl.points, [-1, -s, s, 1])
    np.testing.assert_allclose(gl.weights, [1 / 6, 5 / 6, 5 / 6, 1 / 6])


def test_gl_matches_numpy_legendre_roots():
    for d in range(2, 9):
        inner = np.sort(np.polynomial.legendre.Legendre.basis(d).deriv().roots().real)
        np.testing.assert_allclose(gauss_lobatto_1d(d).points[1:-1], inner, atol=1e-14)


@pytest.mark.parametrize("d", range(1, 9))
def test_gl_integrates_degree_2d_minus_1(d):
    gl = gauss_lobatto_1d(d)
    for k in range(2 * d):
        exact = 0.0 if k % 2 else 2.0 / (k + 1)
        assert abs(gl.weights @ gl.points ** k - exact) < 1e-13


def test_derivative_rows_quadratic():
    D = lagrange_deriv_1d(2)
    np.testing.assert_allclose(D[0], [-1.5, 2.0, -0.5], atol=1e-14)
    np.testing.assert_allclose(D[2], [0.5, -2.0, 1.5], atol=1e-14)


@pytest.mark.parametrize("d", range(1, 9))
def test_derivative_annihilates_constants(d):
    assert np.max(np.abs(lagrange_deriv_1d(d).sum(axis=1))) < 1e-13


@settings(max_examples=40, deadline=None)
@given(d=st.integers(1, 8), coef=st.lists(st.floats(-2, 2), min_size=9, max_size=9))
def test_derivative_exact_on_polynomials(d, coef):
    p = np.polynomial.Polynomial(coef[:d + 1])
    x = gauss_lobatto_1d(d).points
    np.testing.assert_allclose(lagrange_deriv_1d(d) @ p(x), p.deriv()(x), atol=1e-9 * (1 + np.abs(coef).sum()))


@settings(max_examples=40, deadline=None)
@given(d=st.integers(1, 8), t=st.floats(-1, 1))
def test_basis_partition_of_unity(d, t):
    assert abs(lagrange_basis_1d(d, t).sum() - 1.0) < 1e-12


def test_basis_is_cardinal():
    for d in (1, 3, 6):
        x = gauss_lobatto_1d(d).points
        np.testing.assert_allclose(lagrange_basis_1d(d, x), np.eye(d + 1), atol=1e-13)


def test_ref_element_layout():
    ref = build_ref_element(1, 2)
    np.testing.assert_allclose(ref.nodes, [[-1, -1], [1, -1], [-1, 1], [1, 1]])
    assert ref.n_nodes == 4 and ref.n_faces == 4
    # face 0 is x_0 = -1, face 1 is x_0 = +1
    assert list(ref.face_node_index[0]) == [0, 2]
    assert list(ref.face_node_index[1]) == [1, 3]
    assert list(ref.face_node_index[2]) == [0, 1]
    np.testing.assert_allclose(ref.face_weights[0], [1, 0, 1, 0])
    np.testing.assert_allclose(ref.face_normals, [[-1, 0], [1, 0], [0, -1], [0, 1]])
    assert abs(ref.weights.sum() - 4.0) < 1e-14


@pytest.mark.parametrize("D", [1, 2, 3])
def test_grad_table_exact_on_linear_functions(D):
    ref = build_ref_element(3, D)
    rng = np.random.default_rng(D)
    a = rng.standard_normal(D)
    f = ref.nodes @ a + 0.7
    grad = np.einsum("i,ija->ja", f, ref.grad_table)
    np.testing.assert_allclose(grad, np.broadcast_to(a, grad.shape), atol=1e-12)


def test_face_weights_integrate_face_area():
    ref = build_ref_element(4, 3)
    for eps in range(6):
        assert abs(ref.face_weights[eps].sum() - 4.0) < 1e-13


def test_errors():
    with pytest.raises(DegreeOutOfRange):
        gauss_lobatto_1d(0)
    with pytest.raises(DegreeOutOfRange):
        gauss_lobatto_1d(9)
    with pytest.raises(DimensionOutOfRange):
        build_ref_element(2, 4)
