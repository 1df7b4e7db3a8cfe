"""Upwind nodal DG transport for one constant velocity, macrocell by macrocell.

For a subcell L and node i the semi-discrete operator is

    (L_h f)_i = 1/omega_{L,i} [ sum_j omega_j (v . c_{L,j} grad phi_i(x_j)) f_j
                - sum_eps mu_i^eps ((v . c_{L,i} n_eps)^+ f_i + (v . c_{L,i} n_eps)^- f_{R,i'}) ]

split as L_h f = -G f - C f_upwind: ``G`` holds the diagonal blocks, ``C``
the couplings to upwind subcells, upwind macrocells (interface buffers) and
boundary ghosts.  The theta-scheme

    (I - theta dt L_h) F^{n+1} = (I + (1 - theta) dt L_h) F^n

is solved per macrocell by forward substitution in the subcell topological
order.  Boundary ghosts are constant in time, so they enter the right side
with weight dt.  The five task bodies are ``volume_residual``,
``interface_residual``, ``boundary_residual``, ``volume_solve`` and
``extract_traces``.
"""
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .graph import DepGraph, flux_signs, parallel_levels, topological_order

DENSE_LIMIT = 5000


class SingularBlock(ArithmeticError):
    pass


class MissingTrace(RuntimeError):
    pass


class TooLargeForDense(ValueError):
    pass


@dataclass
class Inflow:
    """Couplings of one macro face to data outside the macrocell."""
    kind: str                 # "interface" | "boundary"
    id: int
    dst_sub: np.ndarray
    dst_node: np.ndarray
    coef: np.ndarray          # mu (v.n)^- / omega, <= 0
    pos: np.ndarray           # index into the interface / boundary node list


@dataclass
class TransportStencil:
    cell: int
    velocity_index: int
    v: np.ndarray
    G: np.ndarray             # (n_sub, N, N)
    cp_ptr: np.ndarray        # CSR over destination subcells
    cp_node: np.ndarray
    cp_src_sub: np.ndarray
    cp_src_node: np.ndarray
    cp_coef: np.ndarray
    cp_dst_sub: np.ndarray
    order: np.ndarray         # subcells, concatenated parallel levels
    level_ptr: np.ndarray
    inflow: list
    outflow: list             # (interface id, rows (n, 2)) toward downwind macrocells
    backend_cache: dict = field(default_factory=dict)

    @property
    def n_sub(self):
        return self.G.shape[0]

    @property
    def is_null(self):
        return not np.any(self.v)

    def inflow_for(self, kind, ident):
        return [f for f in self.inflow if f.kind == kind and f.id == ident]


def _mirror_table(ref):
    """mirror[a][i]: node index with its a-th 1D index reflected."""
    d = ref.degree
    out = []
    for a in range(ref.dim):
        mi = ref.multi_index.copy()
        mi[:, a] = d - mi[:, a]
        out.append(sum(mi[:, b] * (d + 1) ** b for b in range(ref.dim)))
    return out


def build_stencil(mesh, cell_id, v, velocity_index=0):
    """Diagonal blocks, couplings and face bookkeeping of one (macrocell, velocity)."""
    ref = mesh.ref
    c = mesh.macrocells[cell_id]
    v = np.asarray(v, dtype=float)
    n_sub, N, D = c.n_sub, ref.n_nodes, ref.dim
    mirror = _mirror_table(ref)
    # bt[s, j, a] = (c_{s,j}^T v)_a, so v . (c g) = bt . g
    bt = np.einsum("snka,k->sna", c.cof, v)
    T = np.einsum("ija,sja,j->sij", ref.grad_table, bt, ref.weights)
    G = -T / c.omega[:, :, None]

    internal = []             # (dst_sub, dst_node, src_sub, src_node, coef)
    ext = {}                  # macro face -> list of (s, node, coef)
    out_faces = set()
    for eps in range(2 * D):
        a = eps // 2
        nodes = np.asarray(ref.face_node_index[eps])
        mu = ref.face_weights[eps, nodes]
        normals = c.cof[:, nodes] @ ref.face_normals[eps]          # (n_sub, nf, D)
        vn = normals @ v
        sg = flux_signs(normals.reshape(-1, D), v).reshape(vn.shape)
        for s in range(n_sub):
            nb = c.subcell_neighbor(s, eps)
            for k, i in enumerate(nodes):
                if sg[s, k] > 0:
                    G[s, i, i] += mu[k] * vn[s, k] / c.omega[s, i]
                    if nb is None:
                        out_faces.add(eps)
                elif sg[s, k] < 0:
                    coef = mu[k] * vn[s, k] / c.omega[s, i]
                    if nb is None:
                        ext.setdefault(eps, []).append((s, i, coef))
                    else:
                        internal.append((s, i, nb, mirror[a][i], coef))

    internal.sort(key=lambda e: (e[0], e[1]))
    if internal:
        arr = np.array(internal)
        cp_dst = arr[:, 0].astype(np.int64)
        cp_node = arr[:, 1].astype(np.int64)
        cp_src_sub = arr[:, 2].astype(np.int64)
        cp_src_node = arr[:, 3].astype(np.int64)
        cp_coef = arr[:, 4].astype(float)
    else:
        cp_dst = cp_node = cp_src_sub = cp_src_node = np.zeros(0, dtype=np.int64)
        cp_coef = np.zeros(0)
    cp_ptr = np.zeros(n_sub + 1, dtype=np.int64)
    np.add.at(cp_ptr, cp_dst + 1, 1)
    cp_ptr = np.cumsum(cp_ptr)

    edges = np.unique(np.column_stack([cp_src_sub, cp_dst]), axis=0) if internal \
        else np.zeros((0, 2), dtype=np.int64)
    g = DepGraph(n_sub, edges, "subcell", tuple(v))
    levels = parallel_levels(g, topological_order(g))
    order = np.concatenate([np.array(lv, dtype=np.int64) for lv in levels])
    level_ptr = np.cumsum([0] + [len(lv) for lv in levels]).astype(np.int64)

    inflow, outflow = [], []
    for eps in range(2 * D):
        kind, ident = c.faces[eps]
        if kind == "interface":
            it = mesh.interfaces[ident]
            rows = it.side(cell_id)[1]
        else:
            rows = mesh.boundary_faces[ident].nodes
        if eps in ext:
            lookup = {(int(s), int(i)): j for j, (s, i) in enumerate(rows)}
            e = ext[eps]
            inflow.append(Inflow(kind, ident,
                                 np.array([t[0] for t in e], dtype=np.int64),
                                 np.array([t[1] for t in e], dtype=np.int64),
                                 np.array([t[2] for t in e]),
                                 np.array([lookup[(t[0], int(t[1]))] for t in e], dtype=np.int64)))
        if kind == "interface" and eps in out_faces:
            outflow.append((ident, rows))

    return TransportStencil(cell_id, velocity_index, v, np.ascontiguousarray(G), cp_ptr, cp_node,
                            cp_src_sub, cp_src_node, cp_coef, cp_dst, order, level_ptr,
                            inflow, outflow)


# --- task bodies -------------------------------------------------------------

def volume_residual(st, F, theta, dt, R, old_traces=None):
    """R = (I + (1-theta) dt L_h) F restricted to couplings inside the macrocell.

    Also records F^n on the downwind interface faces into ``old_traces`` so the
    explicit half of the interface flux survives the in-place update.
    """
    kernels.volume_residual(st, F, (1.0 - theta) * dt, R)
    if old_traces is not None:
        for ident, rows in st.outflow:
            old_traces[ident] = F[rows[:, 0], rows[:, 1]].copy()
    return R


def interface_residual(st, iface_id, buffer, dt, R):
    """Add the upwind-macrocell flux read from an interface buffer."""
    if buffer is None:
        raise MissingTrace(f"interface {iface_id} buffer empty for macrocell {st.cell}, "
                           f"velocity {st.velocity_index}")
    for f in st.inflow_for("interface", iface_id):
        R[f.dst_sub, f.dst_node] -= dt * f.coef * buffer[f.pos]
    return R


def boundary_residual(st, bface, dt, R):
    """Add inflow boundary data f^b; outflow faces contribute nothing here."""
    ghost = bface.ghost[st.velocity_index]
    for f in st.inflow_for("boundary", bface.id):
        R[f.dst_sub, f.dst_node] -= dt * f.coef * ghost[f.pos]
    return R


def volume_solve(st, R, theta, dt, F, cache=None):
    """Solve (I - theta dt L_h) F = R over the macrocell by block forward substitution."""
    bad = kernels.block_solve(st, R, theta * dt, F, cache)
    if bad >= 0:
        raise SingularBlock(f"diagonal block of subcell {bad} in macrocell {st.cell} is singular")
    return F


def extract_traces(st, F, theta, old_traces, buffers):
    """Write (1-theta) F^n + theta F^{n+1} face values into every downwind interface buffer."""
    for ident, rows in st.outflow:
        new = F[rows[:, 0], rows[:, 1]]
        if theta == 1.0:
            buffers[ident] = new.copy()
            continue
        old = old_traces.get(ident) if old_traces is not None else None
        if old is None:
            raise MissingTrace(f"no F^n trace stored for interface {ident}, macrocell {st.cell}")
        buffers[ident] = (1.0 - theta) * old + theta * new
    return buffers


# --- dense oracle ----------------------------------------------------------------

@dataclass
class DenseTransport:
    """Explicitly assembled transport matrix with ghost data as an affine term.

    ``L @ F + B @ g`` is the semi-discrete right side, with unknowns ordered
    like the solver fields: (macrocell, subcell, node).
    """
    L: np.ndarray
    B: np.ndarray
    ghost_points: np.ndarray
    ghost_keys: list          # (macrocell, subcell, node, face) per ghost column
    dt: float
    theta: float

    @property
    def implicit(self):
        return np.eye(self.L.shape[0]) - self.theta * self.dt * self.L

    @property
    def explicit(self):
        return np.eye(self.L.shape[0]) + (1.0 - self.theta) * self.dt * self.L

    def step(self, F, g=None):
        rhs = self.explicit @ F
        if g is not None and self.B.shape[1]:
            rhs = rhs + self.dt * (self.B @ g)
        return np.linalg.solve(self.implicit, rhs)

    def ghost_values(self, fb_scalar):
        """Evaluate a scalar boundary function at the ghost points."""
        return np.array([fb_scalar(p) for p in self.ghost_points])


def assemble_dense(mesh, v, dt, theta=0.5):
    """Assemble L_h node by node with neighbors found by physical coordinates.

    Deliberately independent of the stencil/interface machinery: it is the
    test oracle for the task pipeline.
    """
    ref = mesh.ref
    v = np.asarray(v, dtype=float)
    N, D = ref.n_nodes, ref.dim
    n_sub = mesh.n_sub
    n = mesh.n_macro * n_sub * N
    if n > DENSE_LIMIT:
        raise TooLargeForDense(f"{n} unknowns exceed the dense limit {DENSE_LIMIT}")

    def gidx(L, s, i):
        return (L * n_sub + s) * N + i

    # face centroid -> list of (L, s, eps, physical outward normal direction)
    face_index = {}
    for c in mesh.macrocells:
        for s in range(n_sub):
            for eps in range(2 * D):
                nodes = ref.face_node_index[eps]
                key = tuple(np.round(c.x[s, nodes].mean(axis=0), 9))
                face_index.setdefault(key, []).append((c.id, s, eps))

    L_mat = np.zeros((n, n))
    ghost_cols, ghost_pts, ghost_keys = [], [], []
    for c in mesh.macrocells:
        for s in range(n_sub):
            for i in range(N):
                row = gidx(c.id, s, i)
                om = c.omega[s, i]
                for j in range(N):
                    grad_phys = c.cof[s, j] @ ref.grad_table[i, j]
                    L_mat[row, gidx(c.id, s, j)] += ref.weights[j] * (v @ grad_phys) / om
                for eps in range(2 * D):
                    mu = ref.face_weights[eps, i]
                    if mu == 0.0:
                        continue
                    nvec = c.cof[s, i] @ ref.face_normals[eps]
                    vn = v @ nvec
                    if abs(vn) <= 1e-12 * np.linalg.norm(v) * np.linalg.norm(nvec):
                        continue
                    if vn > 0:
                        L_mat[row, row] -= mu * vn / om
                        continue
                    nodes = ref.face_node_index[eps]
                    key = tuple(np.round(c.x[s, nodes].mean(axis=0), 9))
                    partners = [p for p in face_index[key] if (p[0], p[1]) != (c.id, s)]
                    if partners:
                        L2, s2, eps2 = partners[0]
                        c2 = mesh.macrocells[L2]
                        pts2 = c2.x[s2, ref.face_node_index[eps2]]
                        k = int(np.argmin(np.linalg.norm(pts2 - c.x[s, i], axis=1)))
                        j2 = ref.face_node_index[eps2][k]
                        L_mat[row, gidx(L2, s2, j2)] -= mu * vn / om
                    else:
                        ghost_cols.append((row, -mu * vn / om))
                        ghost_pts.append(c.x[s, i])
                        ghost_keys.append((c.id, s, i, eps))
    B = np.zeros((n, len(ghost_cols)))
    for k, (row, val) in enumerate(ghost_cols):
        B[row, k] = val
    return DenseTransport(L_mat, B, np.array(ghost_pts).reshape(-1, D), ghost_keys, dt, theta)
