"""Kinetic solver state and task submission for transport, collision and source steps.

Fields are stored in place (no history):
  F  (n_v, n_macro, n_sub, N)  kinetic unknowns, one contiguous block per (velocity, macrocell)
  W  (n_macro, m, n_sub * N)   macroscopic fields, one block per macrocell
Every step submits tasks to a ``Runtime``; ``wait`` executes them.
"""
from dataclasses import dataclass

import numpy as np

from . import kinetic, transport
from .graph import build_dep_graph, topological_order
from .runtime import COMMUTE, READ, READWRITE, WRITE, CodeletPanicked, Runtime


@dataclass
class FieldState:
    F: np.ndarray
    W: np.ndarray
    t: float = 0.0

    def copy(self):
        return FieldState(self.F.copy(), self.W.copy(), self.t)


class KineticSolver:
    def __init__(self, mesh, model, boundary=None, source=None, workers=1, scheduler="eager",
                 deterministic=False, cache_factorizations=False, picard_tol=1e-13, picard_max=50):
        if model.dim != mesh.dim:
            raise ValueError(f"model dimension {model.dim} != mesh dimension {mesh.dim}")
        self.mesh = mesh
        self.model = model
        self.source = source
        self.workers = workers
        self.scheduler = scheduler
        self.picard_tol = picard_tol
        self.picard_max = picard_max
        self.picard_iterations = 0
        ref = mesh.ref
        n_v, nm, ns, N = model.n_v, mesh.n_macro, mesh.n_sub, ref.n_nodes
        self.state = FieldState(np.zeros((n_v, nm, ns, N)), np.zeros((nm, model.m, ns * N)))
        # coordinates as (n_macro, D, n_loc) for source evaluation
        self.X = np.ascontiguousarray(np.transpose(mesh.points(), (0, 2, 1)))
        if boundary is not None:
            mesh.set_boundary_data(boundary)

        self.runtime = Runtime(deterministic)
        rt = self.runtime
        self.hF = {(i, L): rt.register(f"F[v{i},L{L}]") for i in range(n_v) for L in range(nm)}
        self.hR = {(i, L): rt.register(f"R[v{i},L{L}]") for i in range(n_v) for L in range(nm)}
        self.hOld = {(i, L): rt.register(f"old[v{i},L{L}]") for i in range(n_v) for L in range(nm)}
        self.hBuf = {(k, i): rt.register(f"buf[I{k},v{i}]")
                     for k in range(len(mesh.interfaces)) for i in range(n_v)}
        self.hW = {L: rt.register(f"W[L{L}]") for L in range(nm)}
        self.hS = {L: rt.register(f"S[L{L}]") for L in range(nm)}
        self.hD = {L: rt.register(f"defect[L{L}]") for L in range(nm)}

        self.stencils = {}
        self.macro_order = {}
        for i, v in enumerate(model.velocities):
            if not np.any(v):
                continue
            self.macro_order[i] = topological_order(build_dep_graph(mesh, v, "macrocell")).order
            for L in range(nm):
                self.stencils[i, L] = transport.build_stencil(mesh, L, v, i)
        self.R = {key: np.zeros((ns, N)) for key in self.stencils}
        self.old = {key: {} for key in self.stencils}
        self.buffers = {i: {} for i in range(n_v)}
        self.lu_cache = {key: {} for key in self.stencils} if cache_factorizations else None
        self.S = np.zeros((nm, model.m, ns * N))
        self.D = np.zeros((nm, model.m, ns * N))     # equilibrium moment defect per node
        self.last_run = None
        self.runs = []

    # --- state helpers -------------------------------------------------------

    @property
    def F(self):
        return self.state.F

    @property
    def W(self):
        return self.state.W

    def set_equilibrium(self, w_of_x):
        """F = f^eq(w(x)) at every node, W = w(x); ``w_of_x`` maps (D, ...) -> (m, ...)."""
        w = np.asarray(w_of_x(np.moveaxis(self.X, 1, 0)), dtype=float)   # (m, n_macro, n_loc)
        w = np.broadcast_to(np.moveaxis(w, 0, 1), self.state.W.shape)
        self.state.W[...] = w
        feq = self.model.equilibrium(np.moveaxis(self.state.W, 1, 0))   # (n_v, n_macro, n_loc)
        self.state.F[...] = feq.reshape(self.state.F.shape)

    def project(self):
        """P F nodewise, shape (n_macro, m, n_loc); does not touch W."""
        f = self.state.F.reshape(self.model.n_v, self.mesh.n_macro, -1)
        return np.moveaxis(self.model.project(f), 0, 1)

    # --- transport -------------------------------------------------------------

    def transport(self, dt, theta=0.5):
        """Submit one theta-scheme transport substep for every velocity."""
        rt = self.runtime
        F = self.state.F
        for i, order in self.macro_order.items():
            bufs = self.buffers[i]
            for L in order:
                key = (i, L)
                st = self.stencils[key]
                hF, hR, hO = self.hF[key], self.hR[key], self.hOld[key]
                rt.submit(_volume_residual, [(hF, READ), (hR, WRITE), (hO, WRITE)],
                          name=f"volume_residual[v{i},L{L}]",
                          args=(st, F[i, L], theta, dt, self.R[key], self.old[key]))
                for f in st.inflow:
                    if f.kind == "interface":
                        rt.submit(_interface_residual, [(self.hBuf[f.id, i], READWRITE), (hR, READWRITE)],
                                  name=f"interface_residual[v{i},L{L},I{f.id}]",
                                  args=(st, f.id, bufs, dt, self.R[key]))
                bfaces = [self.mesh.boundary_faces[f.id] for f in st.inflow if f.kind == "boundary"]
                if bfaces:
                    rt.submit(_boundary_residual, [(hR, READWRITE)],
                              name=f"boundary_residual[v{i},L{L}]",
                              args=(st, bfaces, dt, self.R[key]))
                cache = self.lu_cache[key] if self.lu_cache is not None else None
                rt.submit(transport.volume_solve, [(hR, READ), (hF, WRITE)],
                          name=f"volume_solve[v{i},L{L}]",
                          args=(st, self.R[key], theta, dt, F[i, L], cache))
                if st.outflow:
                    acc = [(hF, READ), (hO, READ)] + [(self.hBuf[k, i], WRITE) for k, _ in st.outflow]
                    rt.submit(transport.extract_traces, acc, name=f"extract[v{i},L{L}]",
                              args=(st, F[i, L], theta, self.old[key], bufs))

    # --- collision / source ---------------------------------------------------

    def reduce(self):
        """Submit W = P F: one zeroing task and one commutative reduction per velocity."""
        rt = self.runtime
        Wflat = self.state.W
        for L in range(self.mesh.n_macro):
            rt.submit(_zero, [(self.hW[L], WRITE)], name=f"zero_w[L{L}]", args=(Wflat[L],))
            for i in range(self.model.n_v):
                rt.submit(_reduce, [(self.hF[i, L], READ), (self.hW[L], COMMUTE)],
                          name=f"reduce[v{i},L{L}]",
                          args=(self.model, i, self.state.F[i, L].reshape(-1), Wflat[L]))

    def collide(self, dt, theta=0.5, tau=None):
        tau = self.model.tau if tau is None else tau
        self.reduce()
        rt = self.runtime
        for L in range(self.mesh.n_macro):
            rt.submit(_defect, [(self.hW[L], READ), (self.hD[L], WRITE)], name=f"defect[L{L}]",
                      args=(self.model, self.state.W[L], self.D[L]))
            for i in range(self.model.n_v):
                rt.submit(kinetic.relax_velocity,
                          [(self.hW[L], READ), (self.hD[L], READ), (self.hF[i, L], READWRITE)],
                          name=f"relax[v{i},L{L}]",
                          args=(self.model, i, self.state.F[i, L].reshape(-1), self.state.W[L],
                                dt, tau, theta, self.D[L]))

    def source_step(self, dt, theta=0.5):
        if self.source is None:
            return
        self.reduce()
        rt = self.runtime
        for L in range(self.mesh.n_macro):
            rt.submit(self._source_local, [(self.hW[L], READWRITE), (self.hS[L], WRITE)],
                      name=f"source[L{L}]", args=(L, dt, theta))
            for i in range(self.model.n_v):
                rt.submit(_apply_source, [(self.hS[L], READ), (self.hF[i, L], READWRITE)],
                          name=f"apply_source[v{i},L{L}]",
                          args=(self.model, i, self.state.F[i, L].reshape(-1), self.S[L], dt))

    def _source_local(self, L, dt, theta):
        w_new, s_eff, it = kinetic.source_solve(self.source, self.X[L], self.state.W[L], dt, theta,
                                                self.picard_tol, self.picard_max)
        self.state.W[L] = w_new
        self.S[L] = s_eff
        self.picard_iterations = max(self.picard_iterations, it)

    # --- execution ---------------------------------------------------------------

    def wait(self):
        """Run all submitted tasks; solver errors raised inside tasks are re-raised as is."""
        try:
            run = self.runtime.run(self.workers, self.scheduler)
        except CodeletPanicked as exc:
            raise exc.original from exc
        self.last_run = run
        self.runs.append(run)
        return run


def _volume_residual(st, F, theta, dt, R, old):
    transport.volume_residual(st, F, theta, dt, R, old)


def _interface_residual(st, ident, bufs, dt, R):
    # consume the buffer: a missing or stale trace is an ordering bug
    transport.interface_residual(st, ident, bufs.pop(ident, None), dt, R)


def _boundary_residual(st, bfaces, dt, R):
    for bf in bfaces:
        transport.boundary_residual(st, bf, dt, R)


def _zero(a):
    a[...] = 0.0


def _reduce(model, i, f_i, W):
    kinetic.reduce_w(model, i, f_i, W)


def _defect(model, w, out):
    out[...] = kinetic.moment_defect(model, w)


def _apply_source(model, i, f_i, s, dt):
    f_i += dt * kinetic.lift_component(model, i, s)
