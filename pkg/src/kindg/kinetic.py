"""Lattice kinetic models, BGK relaxation and the local source step.

Kinetic arrays put the velocity index first: ``f`` has shape (n_v, ...),
macroscopic arrays ``w`` have shape (m, ...) with w = (rho, rho u_1, ..., rho u_D).
"""
from dataclasses import dataclass

import numpy as np


class NonpositiveDensity(ValueError):
    def __init__(self, msg, where=None):
        super().__init__(msg)
        self.where = where


class PicardDiverged(RuntimeError):
    pass


class UnknownModel(ValueError):
    pass


@dataclass(frozen=True)
class KineticModel:
    name: str
    velocities: np.ndarray   # (n_v, D), already scaled by lam
    weights: np.ndarray      # (n_v,) lattice weights
    lam: float
    tau: float = 0.0

    @property
    def dim(self):
        return self.velocities.shape[1]

    @property
    def n_v(self):
        return self.velocities.shape[0]

    @property
    def m(self):
        return self.dim + 1

    @property
    def c(self):
        return self.lam / np.sqrt(3.0)

    @property
    def c2(self):
        return self.lam * self.lam / 3.0

    @property
    def P(self):
        return np.vstack([np.ones(self.n_v), self.velocities.T])

    def project(self, f):
        """w = P f."""
        return np.tensordot(self.P, f, axes=(1, 0))

    def equilibrium(self, w):
        """Isothermal quadratic equilibrium f^eq(w); raises on rho <= 0."""
        w = np.asarray(w, dtype=float)
        rho = w[0]
        if np.any(rho <= 0.0) or not np.all(np.isfinite(rho)):
            bad = np.argwhere(~(rho > 0.0))
            raise NonpositiveDensity(f"density must be positive, min rho = {np.min(rho)}",
                                     where=bad[0] if bad.size else None)
        u = w[1:] / rho
        c2 = self.c2
        uv = np.tensordot(self.velocities, u, axes=(1, 0))
        uu = np.sum(u * u, axis=0)
        wt = self.weights.reshape((-1,) + (1,) * (w.ndim - 1))
        return wt * rho * (1.0 + uv / c2 + uv * uv / (2.0 * c2 * c2) - uu / (2.0 * c2))

    def lift_source(self, s, w=None):
        """Kinetic source g with P g = s: g_i = w_i (s_rho + v_i . s_mom / c^2)."""
        s = np.asarray(s, dtype=float)
        vs = np.tensordot(self.velocities, s[1:], axes=(1, 0))
        wt = self.weights.reshape((-1,) + (1,) * (s.ndim - 1))
        return wt * (s[0] + vs / self.c2)

    def with_tau(self, tau):
        return KineticModel(self.name, self.velocities, self.weights, self.lam, tau)


_D2Q9 = ([(0, 0), (1, 0), (0, 1), (-1, 0), (0, -1), (1, 1), (-1, 1), (-1, -1), (1, -1)],
         [4 / 9] + [1 / 9] * 4 + [1 / 36] * 4)

_AXES3 = [(1, 0, 0), (0, 1, 0), (-1, 0, 0), (0, -1, 0), (0, 0, -1), (0, 0, 1)]
_EDGES3 = [(1, 1, 0), (-1, 1, 0), (-1, -1, 0), (1, -1, 0),
           (1, 0, 1), (0, 1, 1), (-1, 0, 1), (0, -1, 1),
           (1, 0, -1), (0, 1, -1), (-1, 0, -1), (0, -1, -1)]
_CORNERS3 = [(1, 1, 1), (-1, 1, 1), (-1, -1, 1), (1, -1, 1),
             (1, 1, -1), (-1, 1, -1), (-1, -1, -1), (1, -1, -1)]

_TABLES = {
    "d2q9": _D2Q9,
    "d3q15": ([(0, 0, 0)] + _AXES3 + _CORNERS3, [2 / 9] + [1 / 9] * 6 + [1 / 72] * 8),
    "d3q19": ([(0, 0, 0)] + _AXES3 + _EDGES3, [1 / 3] + [1 / 18] * 6 + [1 / 36] * 12),
    "d3q27": ([(0, 0, 0)] + _AXES3 + _EDGES3 + _CORNERS3,
              [8 / 27] + [2 / 27] * 6 + [1 / 54] * 12 + [1 / 216] * 8),
}

MODEL_NAMES = tuple(_TABLES)


def make_model(name, lam=1.0, tau=0.0):
    try:
        vel, wts = _TABLES[name.lower()]
    except KeyError:
        raise UnknownModel(f"unknown kinetic model {name!r}; choose from {MODEL_NAMES}") from None
    return KineticModel(name.lower(), lam * np.array(vel, dtype=float), np.array(wts), float(lam), float(tau))


def _relax(f, feq, b, exact_reflection, out=None):
    """f + b (f^eq - f); the increment form keeps P f' - P f at roundoff of the increment."""
    if exact_reflection:
        if out is None:
            return 2.0 * feq - f
        np.subtract(2.0 * feq, f, out=out)
        return out
    if out is None:
        return f + b * (feq - f)
    if out is not f:
        out[...] = f
    out += b * (feq - f)
    return out


def _check_invertible(tau, theta, dt):
    den = tau + theta * dt
    if den == 0.0 or (tau > 0.0 and den < 0.0):
        raise ValueError(f"collision step not invertible: tau={tau}, theta*dt={theta * dt}")
    return den


def lift_component(model, i, s):
    """Component ``i`` of ``model.lift_source(s)``."""
    return model.weights[i] * (s[0] + np.tensordot(model.velocities[i], s[1:], axes=(0, 0)) / model.c2)


def moment_defect(model, w):
    """w - P f^eq(w): the rounding error of the equilibrium moments."""
    return w - model.project(model.equilibrium(w))


def corrected_equilibrium(model, w):
    """f^eq(w) plus the lift of its moment defect, so that P f^eq matches w to about 1 ulp."""
    feq = model.equilibrium(w)
    return feq + model.lift_source(w - model.project(feq))


def collide(model, f, dt, tau=None, theta=0.5, w=None, out=None):
    """theta-weighted BGK relaxation, exact because P f is conserved.

    f' = ((tau - (1 - theta) dt) f + dt f^eq) / (tau + theta dt), evaluated as
    f + b (f^eq - f) with b = dt / (tau + theta dt).  theta = 1/2 gives the
    Crank-Nicolson form; tau = 0 then yields 2 f^eq - f exactly.
    """
    tau = model.tau if tau is None else tau
    den = _check_invertible(tau, theta, dt)
    if w is None:
        w = model.project(f)
    feq = corrected_equilibrium(model, w)
    return _relax(f, feq, dt / den, tau == 0.0 and theta == 0.5, out)


def relax_velocity(model, i, f_i, w, dt, tau=None, theta=0.5, defect=None):
    """Relax component ``i`` in place given the reduced macroscopic field ``w``.

    ``defect`` (from ``moment_defect``) applies the same moment correction as ``collide``.
    """
    tau = model.tau if tau is None else tau
    den = _check_invertible(tau, theta, dt)
    feq_i = equilibrium_component(model, i, w)
    if defect is not None:
        feq_i = feq_i + lift_component(model, i, defect)
    return _relax(f_i, feq_i, dt / den, tau == 0.0 and theta == 0.5, out=f_i)


def equilibrium_component(model, i, w):
    rho = w[0]
    if np.any(rho <= 0.0) or not np.all(np.isfinite(rho)):
        raise NonpositiveDensity(f"density must be positive, min rho = {np.min(rho)}",
                                 where=np.argwhere(~(rho > 0.0))[0])
    u = w[1:] / rho
    c2 = model.c2
    uv = np.tensordot(model.velocities[i], u, axes=(0, 0))
    uu = np.sum(u * u, axis=0)
    return model.weights[i] * rho * (1.0 + uv / c2 + uv * uv / (2.0 * c2 * c2) - uu / (2.0 * c2))


def reduce_w(model, i, f_i, W):
    """Accumulate the contribution of velocity ``i`` to W (shape (m, ...)) in place."""
    W[0] += f_i
    for a in range(model.dim):
        vi = model.velocities[i, a]
        if vi != 0.0:
            W[1 + a] += vi * f_i
    return W


class GravitySource:
    """s = (0, ..., -rho g) along ``axis``; independent of position."""

    def __init__(self, g, axis=1):
        self.g = float(g)
        self.axis = axis

    def __call__(self, x, w):
        s = np.zeros_like(w)
        s[1 + self.axis] = -w[0] * self.g
        return s

    def stiffness(self, x):
        return 0.0


class PenalizationSource:
    """Relaxation toward ``w_s`` at rate K(x) = K_s exp(-kappa |x - x_c|^2)."""

    def __init__(self, K_s, kappa, x_c, w_s):
        self.K_s = float(K_s)
        self.kappa = float(kappa)
        self.x_c = np.asarray(x_c, dtype=float)
        self.w_s = np.asarray(w_s, dtype=float)

    def rate(self, x):
        # x has shape (D, ...)
        r2 = np.sum((x - self.x_c.reshape((-1,) + (1,) * (x.ndim - 1))) ** 2, axis=0)
        return self.K_s * np.exp(-self.kappa * r2)

    def __call__(self, x, w):
        return self.rate(x) * (self.w_s.reshape((-1,) + (1,) * (w.ndim - 1)) - w)

    def stiffness(self, x):
        return self.rate(x)


def source_solve(source, x, w, dt, theta=0.5, tol=1e-13, max_iter=50):
    """Local implicit source update of the macroscopic state.

    Solves w' = w + dt ((1 - theta) s(w) + theta s(w')) by fixed-point
    iteration preconditioned with the source's diagonal stiffness k(x):
    w_{k+1} = (w + dt (1-theta) s(w) + theta dt (s(w_k) + k w_k)) / (1 + theta dt k).
    Returns (w', s_eff, iterations) where s_eff is the time-averaged source.
    """
    s0 = source(x, w)
    k = source.stiffness(x)
    denom = 1.0 + theta * dt * k
    base = w + dt * (1.0 - theta) * s0
    wk = w
    scale = max(np.max(np.abs(w)), 1.0)
    for it in range(1, max_iter + 1):
        w_next = (base + theta * dt * (source(x, wk) + k * wk)) / denom
        # size of the next preconditioned update
        resid = np.max(np.abs((base + theta * dt * source(x, w_next) - w_next) / denom))
        wk = w_next
        if resid <= tol * scale:
            break
        if not np.isfinite(resid):
            raise PicardDiverged(f"source iteration produced non-finite values at iteration {it}")
    else:
        raise PicardDiverged(f"source iteration did not converge in {max_iter} iterations "
                             f"(residual {resid:.3e})")
    s_eff = (1.0 - theta) * s0 + theta * source(x, wk)
    return wk, s_eff, it


def source_step(model, source, x, f, dt, theta=0.5, tol=1e-13, max_iter=50):
    """S_theta(dt) on a kinetic array f (n_v, ...); returns (f', w', iterations)."""
    w = model.project(f)
    w_new, s_eff, it = source_solve(source, x, w, dt, theta, tol, max_iter)
    return f + dt * model.lift_source(s_eff), w_new, it
