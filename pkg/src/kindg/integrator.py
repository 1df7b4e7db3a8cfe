"""Splitting schemes built from transport (T), collision (C) and source (S) substeps.

A scheme is a list of (operator, fraction of dt, theta).  theta = 1 gives
first order implicit blocks, theta = 1/2 the time-symmetric Crank-Nicolson
ones.  ``advance`` submits every substep to the solver's runtime and waits
once per time step.
"""
import csv
import math
import time
from dataclasses import dataclass, field

OPERATORS = ("T", "C", "S")
TRIPLE_JUMP_GAMMA = 1.0 / (2.0 - 2.0 ** (1.0 / 3.0))


class UnknownScheme(ValueError):
    pass


class NonPalindromicInput(ValueError):
    pass


@dataclass(frozen=True)
class Substep:
    op: str
    frac: float
    theta: float = 0.5


@dataclass(frozen=True)
class SplitScheme:
    name: str
    substeps: tuple
    collapse: bool = False

    def __post_init__(self):
        for s in self.substeps:
            if s.op not in OPERATORS:
                raise ValueError(f"unknown operator {s.op!r} in scheme {self.name}")
        for op, tot in self.fractions().items():
            if abs(tot - 1.0) > 1e-12:
                raise ValueError(f"fractions of {op} sum to {tot}, expected 1")

    def fractions(self):
        out = {}
        for s in self.substeps:
            out.setdefault(s.op, []).append(s.frac)
        return {op: math.fsum(v) for op, v in out.items()}

    @property
    def is_palindromic(self):
        seq = [(s.op, s.frac) for s in self.substeps]
        return all(a[0] == b[0] and math.isclose(a[1], b[1], rel_tol=1e-14, abs_tol=1e-15)
                   for a, b in zip(seq, reversed(seq)))

    @property
    def operators(self):
        return tuple(sorted(self.fractions(), key=OPERATORS.index))

    def __str__(self):
        body = " ".join(f"{s.op}({s.frac:g},{s.theta:g})" for s in self.substeps)
        return f"{self.name}: {body}" + (" [collapsed]" if self.collapse else "")


def _seq(name, spec, theta=0.5, collapse=False):
    return SplitScheme(name, tuple(Substep(op, fr, theta) for op, fr in spec), collapse)


def compose_palindromic(base, coefficients, name=None):
    """base(c_1 dt) ... base(c_k dt) as one scheme; base and coefficients must be symmetric."""
    coefficients = [float(c) for c in coefficients]
    if not base.is_palindromic:
        raise NonPalindromicInput(f"base scheme {base.name} is not palindromic")
    if not coefficients or any(not math.isclose(a, b, rel_tol=1e-14, abs_tol=1e-15)
                               for a, b in zip(coefficients, reversed(coefficients))):
        raise NonPalindromicInput(f"coefficients {coefficients} are not palindromic")
    if abs(math.fsum(coefficients) - 1.0) > 1e-12:
        raise NonPalindromicInput(f"coefficients sum to {math.fsum(coefficients)}, expected 1")
    subs = tuple(Substep(s.op, c * s.frac, s.theta) for c in coefficients for s in base.substeps)
    return SplitScheme(name or f"{base.name}x{len(coefficients)}", subs, False)


def triple_jump(base, name=None):
    g = TRIPLE_JUMP_GAMMA
    return compose_palindromic(base, [g, 1.0 - 2.0 * g, g], name)


def make_scheme(name):
    name = name.lower()
    if name == "m1":
        return _seq("m1", [("T", 1.0), ("S", 1.0), ("C", 1.0)], theta=1.0)
    if name == "m1_2":
        return _seq("m1_2", [("T", 1.0), ("S", 1.0), ("C", 1.0)])
    if name == "m2":
        return _seq("m2", [("T", 0.5), ("C", 1.0), ("T", 0.5)])
    if name in ("m2s", "m2s_collapsed"):
        return _seq(name, [("T", 0.5), ("S", 0.5), ("C", 1.0), ("S", 0.5), ("T", 0.5)],
                    collapse=name == "m2s_collapsed")
    if name == "m2kin":
        return _seq("m2kin", [("T", 0.25), ("C", 0.5), ("T", 0.5), ("C", 0.5), ("T", 0.25)])
    if name == "m4":
        return triple_jump(make_scheme("m2s"), "m4")
    raise UnknownScheme(f"unknown scheme {name!r}; choose from {SCHEME_NAMES}")


SCHEME_NAMES = ("m1", "m1_2", "m2", "m2s", "m2s_collapsed", "m2kin", "m4")


@dataclass
class TimeAudit:
    """Simulated time per operator plus an optional per-substep log."""
    dt: float
    n_steps: int
    totals: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)     # (step, index, op, dt_sub, theta, wall)

    def add(self, step, idx, op, dt_sub, theta, wall=float("nan")):
        self.totals.setdefault(op, []).append(dt_sub)
        self.rows.append((step, idx, op, dt_sub, theta, wall))

    def total(self, op):
        return math.fsum(self.totals.get(op, []))

    def check(self, ops):
        """Operators whose accumulated time misses n_steps * dt by more than 1 ulp per logged substep."""
        target = self.n_steps * self.dt
        return {op: self.total(op) for op in ops
                if abs(self.total(op) - target) > len(self.totals.get(op, [1])) * math.ulp(target)}

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "substep", "op", "dt", "theta", "wall_s"])
            for r in self.rows:
                w.writerow(r)


def _step_plan(scheme, n_steps):
    """Substep lists per step; the collapsed variant fuses T at step boundaries."""
    base = list(scheme.substeps)
    fuse = (scheme.collapse and n_steps > 1 and len(base) > 1 and base[0].op == "T"
            and base[-1].op == "T" and base[0].theta == base[-1].theta)
    plan = []
    for k in range(n_steps):
        subs = list(base)
        if fuse:
            if k > 0:
                first = subs[0]
                subs[0] = Substep("T", first.frac + base[-1].frac, first.theta)
            if k < n_steps - 1:
                subs.pop()
        plan.append(subs)
    return plan


def advance(solver, scheme, dt, n_steps, audit=None, profile=False, on_step=None):
    """Apply ``n_steps`` steps of ``scheme`` to the solver state in place.

    W is re-reduced from F before every C and S substep and once at the end.
    With ``profile`` the runtime is drained after each substep so the audit
    rows carry wall times.  Returns the solver state.
    """
    if isinstance(scheme, str):
        scheme = make_scheme(scheme)
    if audit is None:
        audit = TimeAudit(dt, n_steps)
    for k, subs in enumerate(_step_plan(scheme, n_steps)):
        for j, s in enumerate(subs):
            h = s.frac * dt
            t0 = time.perf_counter()
            if s.op == "T":
                solver.transport(h, s.theta)
            elif s.op == "C":
                solver.collide(h, s.theta)
            else:
                solver.source_step(h, s.theta)
            wall = float("nan")
            if profile:
                solver.wait()
                wall = time.perf_counter() - t0
            audit.add(k, j, s.op, h, s.theta, wall)
        solver.wait()
        solver.state.t += dt
        if on_step is not None:
            on_step(k + 1, solver)
    solver.reduce()
    solver.wait()
    solver.audit = audit
    return solver.state
