"""Gauss-Lobatto quadrature and nodal Lagrange tables on the reference cell ]-1,1[^D.

Node numbering is lexicographic with the first axis varying fastest:
``node = i_0 + (d+1) * i_1 + (d+1)**2 * i_2``.  Faces are numbered
``2*a`` (x_a = -1) and ``2*a + 1`` (x_a = +1) for each axis ``a``.
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

MAX_DEGREE = 8


class DegreeOutOfRange(ValueError):
    pass


class DimensionOutOfRange(ValueError):
    pass


def _check_degree(d):
    if not isinstance(d, (int, np.integer)) or d < 1 or d > MAX_DEGREE:
        raise DegreeOutOfRange(f"polynomial degree must be in [1, {MAX_DEGREE}], got {d!r}")


@dataclass(frozen=True)
class GaussLobatto1D:
    degree: int
    points: np.ndarray
    weights: np.ndarray


@lru_cache(maxsize=None)
def gauss_lobatto_1d(d):
    """Gauss-Lobatto points and weights of degree ``d`` on [-1, 1].

    Interior points are the roots of P'_d, found by Newton iteration on
    (1 - x^2) P'_d(x) starting from the Chebyshev-Lobatto points.
    """
    _check_degree(d)
    n = d + 1
    x = -np.cos(np.pi * np.arange(n) / d)
    for _ in range(100):
        # Legendre recurrence up to P_d at every current guess
        p_prev = np.ones(n)
        p = x.copy()
        for k in range(2, d + 1):
            p_prev, p = p, ((2 * k - 1) * x * p - (k - 1) * p_prev) / k
        update = (x * p - p_prev) / (n * p)
        x = x - update
        if np.max(np.abs(update)) <= 1e-15:
            break
    x[0], x[-1] = -1.0, 1.0
    p_prev = np.ones(n)
    p = x.copy()
    for k in range(2, d + 1):
        p_prev, p = p, ((2 * k - 1) * x * p - (k - 1) * p_prev) / k
    w = 2.0 / (d * n * p * p)
    # exact symmetry
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    x.setflags(write=False)
    w.setflags(write=False)
    return GaussLobatto1D(d, x, w)


@lru_cache(maxsize=None)
def lagrange_deriv_1d(d):
    """Derivative table ``D[p, q] = l_q'(x_p)`` of the GL Lagrange basis.

    Off-diagonal entries use barycentric weights; the diagonal is the
    negative row sum so that constants differentiate to zero exactly.
    """
    x = gauss_lobatto_1d(d).points
    n = d + 1
    diff = x[:, None] - x[None, :]
    np.fill_diagonal(diff, 1.0)
    bary = 1.0 / np.prod(diff, axis=1)
    D = (bary[None, :] / bary[:, None]) / diff
    np.fill_diagonal(D, 0.0)
    D[np.arange(n), np.arange(n)] = -D.sum(axis=1)
    D.setflags(write=False)
    return D


def lagrange_basis_1d(d, t):
    """Values ``l_q(t_k)`` of the GL Lagrange basis at arbitrary points, shape (len(t), d+1)."""
    x = gauss_lobatto_1d(d).points
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.ones((t.size, d + 1))
    for q in range(d + 1):
        for k in range(d + 1):
            if k != q:
                out[:, q] *= (t - x[k]) / (x[q] - x[k])
    return out


@dataclass(frozen=True)
class RefElement:
    dim: int
    degree: int
    nodes: np.ndarray          # (N, D)
    weights: np.ndarray        # (N,)
    multi_index: np.ndarray    # (N, D) integer 1D indices of every node
    grad_table: np.ndarray     # (N, N, D): [i, j, a] = d_a phi_i at node j
    face_weights: np.ndarray   # (2D, N): mu_i^eps, zero off the face
    face_normals: np.ndarray   # (2D, D)
    face_node_index: tuple     # per face, node indices in lexicographic order

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def n_faces(self):
        return 2 * self.dim


@lru_cache(maxsize=None)
def build_ref_element(d, D):
    _check_degree(d)
    if D not in (1, 2, 3):
        raise DimensionOutOfRange(f"dimension must be 1, 2 or 3, got {D!r}")
    gl = gauss_lobatto_1d(d)
    dm = lagrange_deriv_1d(d)
    n1 = d + 1
    N = n1 ** D
    idx = np.arange(N)
    mi = np.stack([(idx // n1 ** a) % n1 for a in range(D)], axis=1)
    nodes = gl.points[mi]
    weights = np.prod(gl.weights[mi], axis=1)

    # d_a phi_i(x_j) = l'_{i_a}(x_{j_a}) * prod_{b != a} delta(i_b, j_b)
    grad = np.zeros((N, N, D))
    for a in range(D):
        same = np.ones((N, N), dtype=bool)
        for b in range(D):
            if b != a:
                same &= mi[:, None, b] == mi[None, :, b]
        grad[:, :, a] = np.where(same, dm[mi[None, :, a], mi[:, None, a]], 0.0)

    face_weights = np.zeros((2 * D, N))
    face_normals = np.zeros((2 * D, D))
    face_nodes = []
    for a in range(D):
        for side, end in ((0, 0), (1, d)):
            eps = 2 * a + side
            on = mi[:, a] == end
            others = [b for b in range(D) if b != a]
            mu = np.prod(gl.weights[mi[:, others]], axis=1) if others else np.ones(N)
            face_weights[eps] = np.where(on, mu, 0.0)
            face_normals[eps, a] = -1.0 if side == 0 else 1.0
            face_nodes.append(np.flatnonzero(on))

    for arr in (nodes, weights, mi, grad, face_weights, face_normals, *face_nodes):
        arr.setflags(write=False)
    return RefElement(D, d, nodes, weights, mi, grad, face_weights, face_normals, tuple(face_nodes))
