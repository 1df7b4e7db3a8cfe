"""Test cases, error norms, convergence and scaling harnesses."""
import csv
import functools
import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .basis import lagrange_basis_1d
from .integrator import advance, make_scheme
from .kernels import BACKEND
from .kinetic import GravitySource, NonpositiveDensity, PenalizationSource, make_model
from .mesh import build_box_macromesh
from .solver import KineticSolver

FLOOR = 1e-13


class ResultMismatch(RuntimeError):
    pass


@dataclass
class ErrorReport:
    errors: list              # per conservative variable
    eps: float
    dt: float
    n_steps: int
    t: float
    n_nodes: int
    wall_time: float
    scheme: str = ""

    def as_row(self):
        return {"dt": self.dt, "eps": self.eps, "n_steps": self.n_steps, "t": self.t,
                "n_nodes": self.n_nodes, "wall_s": self.wall_time,
                **{f"eps_w{k}": e for k, e in enumerate(self.errors)}}


# --- shared plumbing -------------------------------------------------------------

def build_mesh(cfg):
    m = cfg.mesh
    return build_box_macromesh(m.lo, m.hi, m.macro_dims, m.sub_dims, m.degree)


def build_model(cfg):
    return make_model(cfg.model, cfg.lam, cfg.tau)


def run_header(cfg, **derived):
    """Reproducibility header: config echo, code version, derived quantities."""
    model = build_model(cfg)
    head = {"config": cfg.to_dict(), "version": __version__, "kernel_backend": BACKEND,
            "c": model.c, "n_steps": cfg.n_steps}
    if cfg.case == "cylinder":
        u = np.asarray(cfg.cylinder.inflow[1:], dtype=float)
        head["mach"] = float(np.linalg.norm(u) / model.c)
    head.update(derived)
    return head


def _write_header(out_dir, head):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "run.json"), "w") as fh:
        json.dump(head, fh, indent=2, default=float)


def check_positive(solver, t):
    """Abort with the coordinates of the worst node when rho <= 0 anywhere."""
    rho = solver.project()[:, 0]
    if not np.all(rho > 0.0):
        L, i = np.unravel_index(np.argmin(rho), rho.shape)
        x = solver.X[L, :, i]
        raise NonpositiveDensity(f"rho = {rho[L, i]:.6g} <= 0 at x = {x.tolist()}, t = {t:.6g}",
                                 where=x)


def l2_error(W, exact, weights):
    """Relative GL-quadrature L2 error per variable and their root mean square.

    ``W``, ``exact``: (n_macro, m, n_loc); ``weights``: (n_macro, n_loc).
    Variables whose exact solution vanishes use the absolute error.
    """
    W = np.asarray(W, dtype=float)
    exact = np.asarray(exact, dtype=float)
    om = np.asarray(weights, dtype=float)[:, None, :]
    num = np.sqrt(np.sum(om * (W - exact) ** 2, axis=(0, 2)))
    den = np.sqrt(np.sum(om * exact ** 2, axis=(0, 2)))
    errs = np.where(den > 0, num / np.where(den > 0, den, 1.0), num)
    return errs.tolist(), float(np.sqrt(np.mean(errs ** 2)))


# --- gravity ------------------------------------------------------------------------

def hydrostatic(model, g, rho0):
    """Fluid at rest: rho = rho0 exp(-g y / c^2), u = 0; maps (D, ...) -> (m, ...)."""
    def w(x):
        x = np.asarray(x, dtype=float)
        rho = rho0 * np.exp(-g * x[1] / model.c2)
        return np.concatenate([rho[None], np.zeros((model.dim,) + rho.shape)])
    return w


def gravity_solver(cfg, workers=None):
    mesh = build_mesh(cfg)
    model = build_model(cfg)
    wex = hydrostatic(model, cfg.gravity.g, cfg.gravity.rho0)
    solver = KineticSolver(mesh, model, boundary=lambda p: model.equilibrium(wex(p.T)),
                           source=GravitySource(cfg.gravity.g),
                           workers=cfg.workers if workers is None else workers,
                           scheduler=cfg.scheduler, deterministic=cfg.deterministic,
                           cache_factorizations=cfg.cache_factorizations)
    solver.set_equilibrium(wex)
    return solver, wex


def _exact_at_nodes(solver, wex):
    return np.moveaxis(wex(np.moveaxis(solver.X, 1, 0)), 0, 1)


def run_gravity_case(cfg, out_dir=None, n_steps=None):
    """Hydrostatic column advanced with the configured scheme; error against the analytic state."""
    if cfg.case != "gravity":
        raise ValueError("run_gravity_case needs case = gravity")
    solver, wex = gravity_solver(cfg)
    n = cfg.n_steps if n_steps is None else n_steps
    scheme = make_scheme(cfg.scheme)
    t0 = time.perf_counter()
    advance(solver, scheme, cfg.dt, n, profile=cfg.output.profile,
            on_step=lambda k, s: check_positive(s, k * cfg.dt))
    wall = time.perf_counter() - t0
    errs, eps = l2_error(solver.W, _exact_at_nodes(solver, wex), solver.mesh.weights())
    rep = ErrorReport(errs, eps, cfg.dt, n, n * cfg.dt, solver.mesh.n_nodes, wall, cfg.scheme)
    if out_dir:
        _write_header(out_dir, run_header(cfg, eps=eps, errors=errs, wall_time=wall))
        _write_fields(os.path.join(out_dir, "gravity_final.vtk"), solver, f"gravity t={n * cfg.dt:g}")
        if cfg.output.profile:
            solver.audit.to_csv(os.path.join(out_dir, "substeps.csv"))
        if cfg.output.trace and solver.last_run is not None:
            solver.last_run.to_csv(os.path.join(out_dir, "trace.csv"))
    return rep


@dataclass
class ConvergenceTable:
    scheme: str
    rows: list                    # ErrorReport per dt
    slope: float = None
    status: str = "ok"            # "ok" | "at floor"

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["scheme", "dt", "eps", "n_steps", "t", "wall_s"])
            for r in self.rows:
                w.writerow([self.scheme, r.dt, r.eps, r.n_steps, r.t, r.wall_time])
            w.writerow(["# slope", "" if self.slope is None else self.slope, self.status])


def fit_slope(dts, errs, floor=FLOOR):
    """Least-squares slope of log(eps) against log(dt); None when any eps is at the floor."""
    errs = np.asarray(errs, dtype=float)
    if errs.size < 2 or np.any(~np.isfinite(errs)) or np.any(errs <= floor):
        return None
    return float(np.polyfit(np.log(np.asarray(dts, dtype=float)), np.log(errs), 1)[0])


def convergence_study(cfg, n_halvings, scheme=None, csv_path=None):
    """Run the case at dt, dt/2, ..., dt/2^n_halvings over the same horizon t_max."""
    scheme = scheme or cfg.scheme
    rows = []
    for k in range(n_halvings + 1):
        dt = cfg.dt / 2 ** k
        c = cfg.replace(dt=dt, scheme=scheme)
        rows.append(run_gravity_case(c))
    slope = fit_slope([r.dt for r in rows], [r.eps for r in rows])
    table = ConvergenceTable(scheme, rows, slope, "ok" if slope is not None else "at floor")
    if csv_path:
        table.to_csv(csv_path)
    return table


# --- cylinder ---------------------------------------------------------------------

def velocity(W):
    """u = (rho u) / rho, shape (n_macro, D, n_loc)."""
    return W[:, 1:] / W[:, :1]


def nodal_gradient(mesh, u):
    """DG derivative of a nodal scalar (n_macro, n_loc) -> (n_macro, D, n_loc)."""
    ref = mesh.ref
    N, D = ref.n_nodes, ref.dim
    out = np.empty((mesh.n_macro, D, mesh.n_sub * N))
    for c in mesh.macrocells:
        us = u[c.id].reshape(c.n_sub, N)
        ref_grad = np.einsum("si,ija->sja", us, ref.grad_table)          # (n_sub, N, D)
        phys = np.einsum("sjab,sjb->sja", c.cof, ref_grad) / c.det[:, :, None]
        out[c.id] = phys.reshape(-1, D).T
    return out


def vorticity(mesh, W):
    """|curl u| at every node (2D: |d_x u_y - d_y u_x|; 3D: Euclidean norm)."""
    u = velocity(W)
    D = mesh.dim
    grads = [nodal_gradient(mesh, u[:, a]) for a in range(D)]     # grads[a][:, b] = d_b u_a
    if D == 2:
        return np.abs(grads[1][:, 0] - grads[0][:, 1])
    if D == 3:
        cx = grads[2][:, 1] - grads[1][:, 2]
        cy = grads[0][:, 2] - grads[2][:, 0]
        cz = grads[1][:, 0] - grads[0][:, 1]
        return np.sqrt(cx ** 2 + cy ** 2 + cz ** 2)
    raise ValueError("vorticity needs D = 2 or 3")


def locate(mesh, point, tol=1e-10):
    """(macrocell, subcell, local reference coordinates) of a physical point."""
    p = np.asarray(point, dtype=float)
    for c in mesh.macrocells:
        lo, hi = c.corners.min(0), c.corners.max(0)
        if np.any(p < lo - tol) or np.any(p > hi + tol):
            continue
        xi = np.zeros(mesh.dim)
        for _ in range(50):
            r = c.map(xi) - p
            if np.max(np.abs(r)) < 1e-14 * (1.0 + np.max(np.abs(p))):
                break
            xi = xi - np.linalg.solve(c.map_jacobian(xi), r)
        if np.all(np.abs(xi) <= 1.0 + 1e-9):
            n = np.array(c.sub_dims)
            k = np.clip(np.floor((xi + 1.0) * 0.5 * n).astype(int), 0, n - 1)
            xhat = (xi + 1.0) * n - 2.0 * k - 1.0
            return c.id, c.subcell_id(tuple(k)), xhat
    raise ValueError(f"point {p.tolist()} is outside the mesh")


def evaluate_at(mesh, values, point):
    """Interpolate nodal values (n_macro, n_loc) at a physical point."""
    L, s, xhat = locate(mesh, point)
    d = mesh.degree
    basis = [lagrange_basis_1d(d, t)[0] for t in xhat]
    w = functools.reduce(lambda acc, b: np.kron(b, acc), basis[1:], basis[0])
    N = mesh.ref.n_nodes
    return float(values[L].reshape(-1, N)[s] @ w)


def _write_fields(path, solver, title):
    from .vtk import write_vtk
    W = solver.project()
    scalars = {"rho": W[:, 0]}
    if solver.mesh.dim >= 2:
        scalars["vorticity"] = vorticity(solver.mesh, W)
    write_vtk(path, solver.mesh, scalars=scalars, vectors={"u": velocity(W)}, title=title)


@dataclass
class CylinderResult:
    times: list = field(default_factory=list)
    u_xc: list = field(default_factory=list)          # |u(x_c)|
    min_rho: list = field(default_factory=list)
    max_dev: list = field(default_factory=list)       # max |u - u_in| over nodes
    snapshots: list = field(default_factory=list)
    header: dict = None
    wall_time: float = 0.0

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "u_xc", "min_rho", "max_dev"])
            for row in zip(self.times, self.u_xc, self.min_rho, self.max_dev):
                w.writerow(row)


def cylinder_solver(cfg, workers=None):
    mesh = build_mesh(cfg)
    model = build_model(cfg)
    cyl = cfg.cylinder
    w_in = np.asarray(cyl.inflow, dtype=float)
    w_in = np.concatenate([w_in[:1], w_in[0] * w_in[1:]])          # (rho, rho u)
    source = PenalizationSource(cyl.K_s, cyl.kappa, cyl.x_c, cyl.w_s)
    feq_in = model.equilibrium(w_in)

    def fb(p):
        return np.repeat(feq_in[:, None], p.shape[0], axis=1)

    solver = KineticSolver(mesh, model, boundary=fb, source=source,
                           workers=cfg.workers if workers is None else workers,
                           scheduler=cfg.scheduler, deterministic=cfg.deterministic,
                           cache_factorizations=cfg.cache_factorizations)
    solver.set_equilibrium(lambda x: np.broadcast_to(
        w_in.reshape((-1,) + (1,) * (np.ndim(x) - 1)), (model.m,) + np.shape(x)[1:]))
    return solver, w_in


def run_cylinder_case(cfg, out_dir=None, n_steps=None):
    """Penalized obstacle in a duct; tracks |u(x_c)|, min rho and the deviation from inflow."""
    if cfg.case != "cylinder":
        raise ValueError("run_cylinder_case needs case = cylinder")
    solver, w_in = cylinder_solver(cfg)
    u_in = w_in[1:] / w_in[0]
    n = cfg.n_steps if n_steps is None else n_steps
    res = CylinderResult(header=run_header(cfg))
    if out_dir:
        _write_header(out_dir, res.header)

    def record(k, s):
        t = k * cfg.dt
        W = s.project()
        rho = W[:, 0]
        if not np.all(rho > 0.0):
            check_positive(s, t)
        u = velocity(W)
        ux = [evaluate_at(s.mesh, u[:, a], cfg.cylinder.x_c) for a in range(s.mesh.dim)]
        res.times.append(t)
        res.u_xc.append(float(np.linalg.norm(ux)))
        res.min_rho.append(float(rho.min()))
        res.max_dev.append(float(np.max(np.abs(u - u_in[None, :, None]))))
        every = cfg.output.every
        if out_dir and ((every and k % every == 0) or k == n):
            path = os.path.join(out_dir, f"cylinder_{k:06d}.vtk")
            _write_fields(path, s, f"cylinder t={t:g}")
            res.snapshots.append(path)

    record(0, solver)
    t0 = time.perf_counter()
    advance(solver, make_scheme(cfg.scheme), cfg.dt, n, profile=cfg.output.profile, on_step=record)
    res.wall_time = time.perf_counter() - t0
    if out_dir:
        res.to_csv(os.path.join(out_dir, "cylinder_series.csv"))
        if cfg.output.profile:
            solver.audit.to_csv(os.path.join(out_dir, "substeps.csv"))
        if cfg.output.trace and solver.last_run is not None:
            solver.last_run.to_csv(os.path.join(out_dir, "trace.csv"))
    return res


# --- scaling ------------------------------------------------------------------------

def make_solver(cfg, workers=None):
    if cfg.case == "gravity":
        return gravity_solver(cfg, workers)[0]
    return cylinder_solver(cfg, workers)[0]


def scaling_bench(cfg, worker_counts, n_steps=None, rtol=1e-12):
    """Identical runs per worker count; rows (workers, wall, speedup, efficiency)."""
    n = cfg.n_steps if n_steps is None else n_steps
    scheme = make_scheme(cfg.scheme)
    rows, ref, base = [], None, None
    for w in worker_counts:
        solver = make_solver(cfg, workers=w)
        t0 = time.perf_counter()
        advance(solver, scheme, cfg.dt, n)
        wall = time.perf_counter() - t0
        F = solver.F.copy()
        if ref is None:
            ref, base = F, wall
        else:
            err = np.max(np.abs(F - ref)) / max(np.max(np.abs(ref)), 1e-300)
            if err > rtol:
                raise ResultMismatch(f"workers={w} differs from workers={worker_counts[0]} "
                                     f"by {err:.3e} (relative)")
        speedup = base / wall
        rows.append({"workers": w, "wall_s": wall, "speedup": speedup, "efficiency": speedup / w})
    return rows
