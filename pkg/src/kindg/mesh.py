"""Macromesh of D-linear macrocells, each cut into a regular grid of subcells.

Every subcell of a macrocell shares the macrocell map; geometry is stored
per (subcell, node): physical points, quadrature weights ``omega`` and
cofactor matrices ``cof`` of the subcell Jacobian.

Array layouts used throughout the package:
  x     (n_sub, N, D)
  omega (n_sub, N)
  cof   (n_sub, N, D, D)
Subcells are numbered lexicographically (first axis fastest), like nodes
and macrocells of a box mesh.
"""
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .basis import build_ref_element

MATCH_TOL = 1e-10


class DegenerateBox(ValueError):
    pass


class NonConformalInterface(ValueError):
    pass


class NodeNotOnFace(ValueError):
    pass


def cofactor(m):
    """Cofactor matrix ``det(m) * inv(m).T`` in adjugate form; broadcasts over leading axes."""
    m = np.asarray(m, dtype=float)
    D = m.shape[-1]
    if D == 1:
        return np.ones_like(m)
    if D == 2:
        out = np.empty_like(m)
        out[..., 0, 0] = m[..., 1, 1]
        out[..., 0, 1] = -m[..., 1, 0]
        out[..., 1, 0] = -m[..., 0, 1]
        out[..., 1, 1] = m[..., 0, 0]
        return out
    if D == 3:
        a0, a1, a2 = m[..., :, 0], m[..., :, 1], m[..., :, 2]
        return np.stack([np.cross(a1, a2), np.cross(a2, a0), np.cross(a0, a1)], axis=-1)
    raise ValueError(f"unsupported matrix size {D}")


def _grid_index(shape):
    """Multi-indices of a grid in lexicographic order, first axis fastest."""
    return [tuple(reversed(k)) for k in product(*(range(n) for n in reversed(shape)))]


@dataclass
class Macrocell:
    id: int
    corners: np.ndarray          # (2^D, D), corner c has reference sign bits c_a
    sub_dims: tuple
    x: np.ndarray = None
    jac: np.ndarray = None
    det: np.ndarray = None
    omega: np.ndarray = None
    cof: np.ndarray = None
    # face eps -> ("interface", iface id) or ("boundary", boundary face id)
    faces: dict = field(default_factory=dict)

    @property
    def n_sub(self):
        return int(np.prod(self.sub_dims))

    def map(self, xi):
        """D-linear macro map applied to reference points ``xi`` (..., D)."""
        xi = np.asarray(xi, dtype=float)
        D = xi.shape[-1]
        out = np.zeros(xi.shape)
        for c, X in enumerate(self.corners):
            shape = np.ones(xi.shape[:-1])
            for a in range(D):
                s = 1.0 if (c >> a) & 1 else -1.0
                shape = shape * 0.5 * (1.0 + s * xi[..., a])
            out += shape[..., None] * X
        return out

    def map_jacobian(self, xi):
        """Jacobian of the macro map, shape (..., D, D) with [.., k, a] = d x_k / d xi_a."""
        xi = np.asarray(xi, dtype=float)
        D = xi.shape[-1]
        out = np.zeros(xi.shape[:-1] + (D, D))
        for c, X in enumerate(self.corners):
            for a in range(D):
                dshape = np.ones(xi.shape[:-1])
                for b in range(D):
                    s = 1.0 if (c >> b) & 1 else -1.0
                    dshape = dshape * (0.5 * s if b == a else 0.5 * (1.0 + s * xi[..., b]))
                out[..., :, a] += dshape[..., None] * X
        return out

    def subcell_multi(self, s):
        idx = []
        for n in self.sub_dims:
            idx.append(s % n)
            s //= n
        return tuple(idx)

    def subcell_id(self, k):
        s = 0
        for a in reversed(range(len(self.sub_dims))):
            s = s * self.sub_dims[a] + k[a]
        return s

    def subcell_neighbor(self, s, eps):
        """Neighboring subcell across face ``eps`` inside this macrocell, or None."""
        k = list(self.subcell_multi(s))
        a, side = divmod(eps, 2)
        k[a] += 1 if side else -1
        if k[a] < 0 or k[a] >= self.sub_dims[a]:
            return None
        return self.subcell_id(k)


@dataclass
class Interface:
    id: int
    left: int
    right: int
    left_face: int
    right_face: int
    left_nodes: np.ndarray       # (n, 2) rows (subcell, node) on the left side
    right_nodes: np.ndarray      # (n, 2) matched: right_nodes[j] sits at left_nodes[j]
    points: np.ndarray           # (n, D)

    @property
    def size(self):
        return self.left_nodes.shape[0]

    def side(self, cell):
        """(face index, node list, other cell) as seen from macrocell ``cell``."""
        if cell == self.left:
            return self.left_face, self.left_nodes, self.right
        if cell == self.right:
            return self.right_face, self.right_nodes, self.left
        raise KeyError(f"macrocell {cell} not on interface {self.id}")


@dataclass
class BoundaryFace:
    id: int
    cell: int
    face: int
    nodes: np.ndarray            # (n, 2) rows (subcell, node)
    points: np.ndarray           # (n, D)
    ghost: np.ndarray = None     # (n_v, n) constant boundary data f^b at the points

    @property
    def size(self):
        return self.nodes.shape[0]

    def set_boundary_data(self, fb):
        """Freeze boundary data: ``fb(points) -> (n_v, n)`` evaluated once (time independent)."""
        g = np.asarray(fb(self.points), dtype=float)
        if g.ndim != 2 or g.shape[1] != self.size:
            raise ValueError(f"boundary evaluator returned shape {g.shape}, expected (n_v, {self.size})")
        self.ghost = g
        self.ghost.setflags(write=False)


@dataclass
class Macromesh:
    dim: int
    degree: int
    sub_dims: tuple
    macrocells: list
    interfaces: list
    boundary_faces: list
    macro_dims: tuple = None

    @property
    def ref(self):
        return build_ref_element(self.degree, self.dim)

    @property
    def n_macro(self):
        return len(self.macrocells)

    @property
    def n_sub(self):
        return int(np.prod(self.sub_dims))

    @property
    def nodes_per_macro(self):
        return self.n_sub * self.ref.n_nodes

    @property
    def n_nodes(self):
        return self.n_macro * self.nodes_per_macro

    def points(self):
        """Physical node coordinates, shape (n_macro, n_sub * N, D)."""
        return np.stack([c.x.reshape(-1, self.dim) for c in self.macrocells])

    def weights(self):
        """Quadrature weights omega_{L,i}, shape (n_macro, n_sub * N)."""
        return np.stack([c.omega.reshape(-1) for c in self.macrocells])

    def set_boundary_data(self, fb):
        for bf in self.boundary_faces:
            bf.set_boundary_data(fb)

    def summary(self):
        ref = self.ref
        lines = [
            f"macromesh D={self.dim} degree={self.degree} macrocells={self.n_macro} "
            f"subcells/macro={self.n_sub} nodes/subcell={ref.n_nodes} "
            f"nodes/macro={self.nodes_per_macro} total nodes={self.n_nodes}",
        ]
        for c in self.macrocells:
            lo, hi = c.x.reshape(-1, self.dim).min(0), c.x.reshape(-1, self.dim).max(0)
            faces = " ".join(f"{e}:{k[0][0]}{k[1]}" for e, k in sorted(c.faces.items()))
            lines.append(f"macrocell {c.id} bbox {lo.tolist()}..{hi.tolist()} faces {faces}")
        for it in self.interfaces:
            lines.append(f"interface {it.id} {it.left}[{it.left_face}] <-> {it.right}[{it.right_face}] nodes={it.size}")
        for bf in self.boundary_faces:
            lines.append(f"boundary {bf.id} macrocell {bf.cell} face {bf.face} nodes={bf.size}")
        return "\n".join(lines)


def scaled_normal(cell, subcell, node, face, ref):
    """Scaled outward normal ``co(tau') n_hat`` at a node lying on ``face``."""
    if ref.face_weights[face, node] == 0.0:
        raise NodeNotOnFace(f"node {node} is not on reference face {face}")
    return cell.cof[subcell, node] @ ref.face_normals[face]


def match_interface_nodes(left_points, right_points, tol=MATCH_TOL):
    """Permutation ``p`` with ``right_points[p[j]] == left_points[j]`` within ``tol``."""
    left_points = np.asarray(left_points, dtype=float)
    right_points = np.asarray(right_points, dtype=float)
    if left_points.shape != right_points.shape:
        raise NonConformalInterface(
            f"face node counts differ: {left_points.shape[0]} vs {right_points.shape[0]}")
    dist = np.linalg.norm(left_points[:, None, :] - right_points[None, :, :], axis=-1)
    perm = np.argmin(dist, axis=1)
    if np.any(dist[np.arange(perm.size), perm] > tol):
        bad = int(np.argmax(dist[np.arange(perm.size), perm]))
        raise NonConformalInterface(f"node {left_points[bad].tolist()} has no partner within {tol}")
    if np.unique(perm).size != perm.size:
        raise NonConformalInterface("node correspondence is not a bijection")
    return perm


def _build_geometry(cell, ref):
    D = ref.dim
    n = np.asarray(cell.sub_dims, dtype=float)
    subs = np.array([cell.subcell_multi(s) for s in range(cell.n_sub)], dtype=float)
    # xi_a = -1 + (2 k_a + 1 + xhat_a) / n_a
    xi = -1.0 + (2.0 * subs[:, None, :] + 1.0 + ref.nodes[None, :, :]) / n
    cell.x = cell.map(xi)
    cell.jac = cell.map_jacobian(xi) / n[None, None, None, :]
    cell.det = np.linalg.det(cell.jac) if D > 1 else cell.jac[..., 0, 0]
    if np.any(cell.det <= 0.0):
        raise DegenerateBox(f"macrocell {cell.id} map is not direct (det <= 0)")
    cell.omega = ref.weights[None, :] * cell.det
    cell.cof = cofactor(cell.jac)


def face_subfaces(cell, face, ref):
    """Subcell faces of a macrocell lying on macro face ``face``: list of (subcell, node ids, points)."""
    a, side = divmod(face, 2)
    out = []
    for s in range(cell.n_sub):
        if cell.subcell_multi(s)[a] == (cell.sub_dims[a] - 1 if side else 0):
            nodes = np.asarray(ref.face_node_index[face])
            out.append((s, nodes, cell.x[s, nodes]))
    return out


def _match_subfaces(left, right):
    if len(left) != len(right):
        raise NonConformalInterface(f"subface counts differ: {len(left)} vs {len(right)}")
    rcenters = np.array([pts.mean(axis=0) for _, _, pts in right])
    lrows, rrows, points = [], [], []
    for s, nodes, pts in left:
        dist = np.linalg.norm(rcenters - pts.mean(axis=0), axis=1)
        k = int(np.argmin(dist))
        if dist[k] > MATCH_TOL:
            raise NonConformalInterface(f"subcell face centered at {pts.mean(axis=0).tolist()} has no partner")
        rs, rnodes, rpts = right[k]
        perm = match_interface_nodes(pts, rpts)
        lrows.append(np.column_stack([np.full(nodes.size, s), nodes]))
        rrows.append(np.column_stack([np.full(nodes.size, rs), rnodes[perm]]))
        points.append(pts)
    return np.concatenate(lrows), np.concatenate(rrows), np.concatenate(points)


def build_macromesh(cells, dim, degree, sub_dims, macro_dims=None):
    """Assemble geometry, interfaces and boundary faces from a list of ``Macrocell``."""
    ref = build_ref_element(degree, dim)
    for c in cells:
        _build_geometry(c, ref)
    # pair macro faces through the centroid of their nodes
    groups = {}
    for c in cells:
        for eps in range(2 * dim):
            subfaces = face_subfaces(c, eps, ref)
            center = np.concatenate([p for _, _, p in subfaces]).mean(axis=0)
            groups.setdefault(tuple(np.round(center, 9)), []).append((c.id, eps, subfaces))
    interfaces, boundary = [], []
    for key, group in groups.items():
        if len(group) == 1:
            cid, eps, subfaces = group[0]
            rows = np.concatenate([np.column_stack([np.full(n.size, s), n]) for s, n, _ in subfaces])
            pts = np.concatenate([p for _, _, p in subfaces])
            boundary.append(BoundaryFace(0, cid, eps, rows, pts))
        elif len(group) == 2:
            (l, le, lsub), (r, re_, rsub) = sorted(group, key=lambda g: g[0])
            lrows, rrows, pts = _match_subfaces(lsub, rsub)
            interfaces.append(Interface(0, l, r, le, re_, lrows, rrows, pts))
        else:
            raise NonConformalInterface(f"{len(group)} macrocell faces share center {key}")
    interfaces.sort(key=lambda it: (it.left, it.left_face))
    boundary.sort(key=lambda bf: (bf.cell, bf.face))
    for k, it in enumerate(interfaces):
        it.id = k
        cells[it.left].faces[it.left_face] = ("interface", k)
        cells[it.right].faces[it.right_face] = ("interface", k)
    for k, bf in enumerate(boundary):
        bf.id = k
        cells[bf.cell].faces[bf.face] = ("boundary", k)
    return Macromesh(dim, degree, tuple(sub_dims), cells, interfaces, boundary, macro_dims)


def build_box_macromesh(lo, hi, macro_dims, sub_dims, d):
    """Cartesian macromesh of the box [lo, hi] with ``macro_dims`` macrocells of ``sub_dims`` subcells."""
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    D = lo.size
    macro_dims = tuple(int(n) for n in np.atleast_1d(macro_dims))
    sub_dims = tuple(int(n) for n in np.atleast_1d(sub_dims))
    if hi.size != D or len(macro_dims) != D or len(sub_dims) != D:
        raise DegenerateBox("box corners and subdivision counts must have the same dimension")
    if D not in (1, 2, 3):
        raise DegenerateBox(f"unsupported dimension {D}")
    if not np.all(np.isfinite(lo)) or not np.all(np.isfinite(hi)) or np.any(hi <= lo):
        raise DegenerateBox(f"degenerate box {lo.tolist()} .. {hi.tolist()}")
    if min(macro_dims) < 1 or min(sub_dims) < 1:
        raise DegenerateBox("subdivision counts must be >= 1")
    h = (hi - lo) / np.array(macro_dims)
    cells = []
    for k in _grid_index(macro_dims):
        base = lo + h * np.array(k)
        corners = np.array([base + h * np.array([(c >> a) & 1 for a in range(D)])
                            for c in range(2 ** D)])
        cells.append(Macrocell(len(cells), corners, sub_dims))
    return build_macromesh(cells, D, d, sub_dims, macro_dims)
