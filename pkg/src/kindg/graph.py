"""Upwind dependency graphs over subcells or macrocells and their topological orders."""
from dataclasses import dataclass

import numpy as np

TANGENT_TOL = 1e-12


class CycleDetected(ValueError):
    def __init__(self, cycle):
        super().__init__(f"dependency graph has a cycle: {' -> '.join(map(str, cycle))}")
        self.cycle = cycle


@dataclass(frozen=True)
class DepGraph:
    n_vertices: int
    edges: np.ndarray            # (E, 2) int, rows (from, to)
    granularity: str             # "subcell" | "macrocell"
    velocity: tuple

    def successors(self):
        succ = [[] for _ in range(self.n_vertices)]
        for u, w in self.edges:
            succ[u].append(int(w))
        return succ

    def predecessors(self):
        pred = [[] for _ in range(self.n_vertices)]
        for u, w in self.edges:
            pred[w].append(int(u))
        return pred


@dataclass(frozen=True)
class TopoOrder:
    order: np.ndarray
    position: np.ndarray


def flux_signs(normals, v):
    """Sign of v.n per row of ``normals`` with a relative tangency tolerance."""
    v = np.asarray(v, dtype=float)
    dot = normals @ v
    tol = TANGENT_TOL * np.linalg.norm(v) * np.linalg.norm(normals, axis=-1)
    return np.where(dot > tol, 1, np.where(dot < -tol, -1, 0))


def _face_edges(cell, s, face, ref, v):
    """(out, in): whether some node of subcell face has v.n > 0 / v.n < 0."""
    nodes = ref.face_node_index[face]
    normals = cell.cof[s, nodes] @ ref.face_normals[face]
    sg = flux_signs(normals, v)
    return bool(np.any(sg > 0)), bool(np.any(sg < 0))


def _dedup(edges, n):
    if not edges:
        return np.zeros((0, 2), dtype=np.int64)
    e = np.unique(np.array(edges, dtype=np.int64), axis=0)
    return e


def build_dep_graph(mesh, v, granularity="macrocell", cell=None):
    """Upwind graph: edge L -> R when some GL node of the shared face has n_LR . v > 0.

    ``granularity="macrocell"`` uses macrocells as vertices and interfaces as
    faces.  ``granularity="subcell"`` uses subcells: of one macrocell when
    ``cell`` is given (local numbering), otherwise of the whole mesh with
    global index ``L * n_sub + s``.  Boundary (fictitious) cells are left out.
    """
    ref = mesh.ref
    v = np.asarray(v, dtype=float)
    edges = []
    if granularity == "macrocell":
        for it in mesh.interfaces:
            c = mesh.macrocells[it.left]
            normals = np.einsum("nij,j->ni", c.cof[it.left_nodes[:, 0], it.left_nodes[:, 1]],
                                ref.face_normals[it.left_face])
            sg = flux_signs(normals, v)
            if np.any(sg > 0):
                edges.append((it.left, it.right))
            if np.any(sg < 0):
                edges.append((it.right, it.left))
        return DepGraph(mesh.n_macro, _dedup(edges, mesh.n_macro), "macrocell", tuple(v))
    if granularity != "subcell":
        raise ValueError(f"unknown granularity {granularity!r}")
    cells = [mesh.macrocells[cell]] if cell is not None else mesh.macrocells
    n_sub = mesh.n_sub
    for c in cells:
        offset = 0 if cell is not None else c.id * n_sub
        for s in range(n_sub):
            for face in range(1, 2 * mesh.dim, 2):
                nb = c.subcell_neighbor(s, face)
                if nb is None:
                    continue
                out, inn = _face_edges(c, s, face, ref, v)
                if out:
                    edges.append((offset + s, offset + nb))
                if inn:
                    edges.append((offset + nb, offset + s))
    if cell is None:
        for it in mesh.interfaces:
            c = mesh.macrocells[it.left]
            normals = np.einsum("nij,j->ni", c.cof[it.left_nodes[:, 0], it.left_nodes[:, 1]],
                                ref.face_normals[it.left_face])
            sg = flux_signs(normals, v)
            for j in np.flatnonzero(sg != 0):
                a = it.left * n_sub + int(it.left_nodes[j, 0])
                b = it.right * n_sub + int(it.right_nodes[j, 0])
                edges.append((a, b) if sg[j] > 0 else (b, a))
        n = mesh.n_macro * n_sub
    else:
        n = n_sub
    return DepGraph(n, _dedup(edges, n), "subcell", tuple(v))


def _find_cycle(n, succ, remaining):
    color = dict.fromkeys(remaining, 0)
    for start in sorted(remaining):
        if color[start]:
            continue
        stack = [(start, iter(succ[start]))]
        path = [start]
        color[start] = 1
        while stack:
            u, it = stack[-1]
            for w in it:
                if w not in color:
                    continue
                if color[w] == 1:
                    return path[path.index(w):] + [w]
                if color[w] == 0:
                    color[w] = 1
                    path.append(w)
                    stack.append((w, iter(succ[w])))
                    break
            else:
                color[u] = 2
                path.pop()
                stack.pop()
    return []


def topological_order(g):
    """Kahn's algorithm in waves: every vertex of a wave precedes the next wave, indices ascend within one."""
    n = g.n_vertices
    succ = g.successors()
    indeg = np.zeros(n, dtype=np.int64)
    for _, w in g.edges:
        indeg[w] += 1
    wave = [u for u in range(n) if indeg[u] == 0]
    order = []
    while wave:
        order.extend(wave)
        nxt = []
        for u in wave:
            for w in succ[u]:
                indeg[w] -= 1
                if indeg[w] == 0:
                    nxt.append(w)
        wave = sorted(nxt)
    if len(order) != n:
        remaining = set(range(n)) - set(order)
        raise CycleDetected(_find_cycle(n, succ, remaining))
    order = np.array(order, dtype=np.int64)
    position = np.empty(n, dtype=np.int64)
    position[order] = np.arange(n)
    return TopoOrder(order, position)


def parallel_levels(g, order=None):
    """Group vertices by longest path length from a source."""
    if order is None:
        order = topological_order(g)
    pred = g.predecessors()
    level = np.zeros(g.n_vertices, dtype=np.int64)
    for u in order.order:
        if pred[u]:
            level[u] = max(level[p] for p in pred[u]) + 1
    if g.n_vertices == 0:
        return []
    return [sorted(np.flatnonzero(level == k).tolist()) for k in range(int(level.max()) + 1)]


def to_dot(g, name="G"):
    lines = [f"digraph {name} {{",
             f'  label="{g.granularity} graph, v = {tuple(float(c) for c in g.velocity)}";']
    lines += [f"  {u};" for u in range(g.n_vertices)]
    lines += [f"  {u} -> {w};" for u, w in g.edges]
    lines.append("}")
    return "\n".join(lines) + "\n"
