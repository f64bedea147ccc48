"""Continuous and discrete Lagrangians plus the continuous-side reference oracle.

Discrete Lagrangians are scalar functions on a groupoid instance; the pair
groupoid versions are built from a continuous Lagrangian by midpoint or
trapezoid quadrature of the action over one step, the SO(3) version is the
Moser-Veselov trace form.  The reference oracle integrates the continuous
Euler-Lagrange equations with classical RK4 (or substitutes the exact
solution where one is known) for convergence and energy measurements.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .groupoids import PairGroupoid, SpecialOrthogonal3
from .numerics import cos_, grad, grad_components, real_part, seed_all, sin_, sqrt_


class SingularMassMatrix(Exception):
    pass


class ContinuousLagrangian:
    """L(q, v) with chart dimension d; evaluable on float or Dual coordinates.

    ``hamiltonian`` is an optional closed form H(q, p) used by trajectory
    diagnostics; when absent the energy is obtained by inverting the Legendre
    transform numerically.
    """

    def __init__(self, fn: Callable, d: int, name: str = "",
                 velocity_from_momentum: Callable | None = None,
                 exact_solution: Callable | None = None,
                 hamiltonian: Callable | None = None):
        self.fn = fn
        self.d = int(d)
        self.name = name
        self.velocity_from_momentum = velocity_from_momentum
        self.exact_solution = exact_solution
        self.hamiltonian = hamiltonian

    def __call__(self, q, v):
        return self.fn(q, v)


class DiscreteLagrangian:
    """Scalar function on a groupoid instance, with the time step it encodes.

    ``continuous`` backreferences the continuous Lagrangian a discretizer was
    built from, when there is one; trajectory diagnostics use it for energies.
    """

    def __init__(self, instance, h: float, fn: Callable, name: str = "",
                 continuous: "ContinuousLagrangian | None" = None):
        if h <= 0:
            raise ValueError("step size must be positive")
        self.instance = instance
        self.h = float(h)
        self.fn = fn
        self.name = name
        self.continuous = continuous

    def __call__(self, g):
        return self.fn(g.coords)

    def value_at_coords(self, coords):
        return self.fn(coords)


# ---------------------------------------------------------------------------
# continuous-side operations
# ---------------------------------------------------------------------------

def legendre_continuous(L: ContinuousLagrangian, q, v) -> np.ndarray:
    """Momentum p = dL/dv at (q, v) by one forward pass over the v block."""
    q = [float(x) for x in q]
    return grad(lambda vv: L(q, vv), v)


def energy(L: ContinuousLagrangian, q, v) -> float:
    """E(q, v) = FL(q, v) . v - L(q, v)."""
    p = legendre_continuous(L, q, v)
    return float(np.dot(p, np.asarray(v, dtype=float)) - L([float(x) for x in q],
                                                           [float(x) for x in v]))


def energy_function(L: ContinuousLagrangian) -> Callable:
    return lambda q, v: energy(L, q, v)


# ---------------------------------------------------------------------------
# discretizations
# ---------------------------------------------------------------------------

def midpoint_discretize(L: ContinuousLagrangian, h: float) -> DiscreteLagrangian:
    """L_h(q0, q1) = h L((q0+q1)/2, (q1-q0)/h) on the pair groupoid over R^d."""
    d = L.d
    inst = PairGroupoid(d)

    def fn(coords):
        q0 = coords[:d]
        q1 = coords[d:]
        qm = [(a + b) * 0.5 for a, b in zip(q0, q1)]
        vel = [(b - a) / h for a, b in zip(q0, q1)]
        return h * L(qm, vel)

    return DiscreteLagrangian(inst, h, fn, name=f"midpoint[{L.name}]", continuous=L)


def trapezoid_discretize(L: ContinuousLagrangian, h: float) -> DiscreteLagrangian:
    """L_h(q0, q1) = (h/2)[L(q0, v) + L(q1, v)], v = (q1-q0)/h."""
    d = L.d
    inst = PairGroupoid(d)

    def fn(coords):
        q0 = coords[:d]
        q1 = coords[d:]
        vel = [(b - a) / h for a, b in zip(q0, q1)]
        return 0.5 * h * (L(list(q0), vel) + L(list(q1), vel))

    return DiscreteLagrangian(inst, h, fn, name=f"trapezoid[{L.name}]", continuous=L)


def rigid_body_lagrangian(J_d, h: float) -> DiscreteLagrangian:
    """Moser-Veselov trace form L_h(f) = -(1/h) tr(f J_d) on SO(3).

    J_d must be symmetric positive; its eigenvalues set the body inertia.
    """
    J = np.asarray(J_d, dtype=float)
    if J.shape != (3, 3) or np.max(np.abs(J - J.T)) > 1e-12:
        raise ValueError("J_d must be a symmetric 3x3 matrix")
    if np.min(np.linalg.eigvalsh(J)) <= 0:
        raise ValueError("J_d must be positive definite")
    inst = SpecialOrthogonal3()
    rows = [list(map(float, r)) for r in J]
    inv_h = 1.0 / h

    def fn(coords):
        total = 0.0
        for i in range(3):
            ri = rows[i]
            # tr(F J) = sum_ij F[i][j] J[j][i]; J symmetric so J[j][i] = J[i][j]
            total = total + coords[3 * i] * ri[0] + coords[3 * i + 1] * ri[1] \
                + coords[3 * i + 2] * ri[2]
        return -inv_h * total

    return DiscreteLagrangian(inst, h, fn, name="rigid-body")


# ---------------------------------------------------------------------------
# reference oracle
# ---------------------------------------------------------------------------

@dataclass
class ReferenceTrajectory:
    times: np.ndarray
    q: np.ndarray          # shape (steps + 1, d)
    v: np.ndarray
    energy: np.ndarray = field(default=None)


def _acceleration(L: ContinuousLagrangian, q, v) -> np.ndarray:
    """Solve the Euler-Lagrange system for the acceleration at (q, v).

    (d2L/dv2) a = dL/dq - (d2L/dv dq) v, all blocks by nested forward passes.
    """
    d = L.d
    outer = seed_all(list(q) + list(v))
    comps = grad_components(lambda xs: L(xs[:d], xs[d:]), outer)
    gq = np.array([real_part(c) for c in comps[:d]])
    Pq = np.zeros((d, d))
    Pv = np.zeros((d, d))
    for i, pi in enumerate(comps[d:]):
        if hasattr(pi, "eps"):
            Pq[i, :] = [real_part(e) for e in pi.eps[:d]]
            Pv[i, :] = [real_part(e) for e in pi.eps[d:]]
    rhs = gq - Pq @ np.asarray(v, dtype=float)
    try:
        a = np.linalg.solve(Pv, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularMassMatrix(str(exc)) from exc
    if not np.all(np.isfinite(a)):
        raise SingularMassMatrix("mass matrix solve produced non-finite output")
    return a


def reference_trajectory(L: ContinuousLagrangian, q0, v0, T: float,
                         steps: int) -> ReferenceTrajectory:
    """High-accuracy integration of the continuous Euler-Lagrange equations.

    Uses the exact solution when the system carries one, otherwise classical
    RK4 on the first-order form; choose ``steps`` so the reference error sits
    well below the integrator error being measured.
    """
    d = L.d
    times = np.linspace(0.0, T, steps + 1)
    q = np.zeros((steps + 1, d))
    v = np.zeros((steps + 1, d))
    if L.exact_solution is not None:
        for i, t in enumerate(times):
            qi, vi = L.exact_solution(q0, v0, t)
            q[i], v[i] = qi, vi
    else:
        y_q = np.asarray(q0, dtype=float)
        y_v = np.asarray(v0, dtype=float)
        q[0], v[0] = y_q, y_v
        hstep = T / steps

        def rhs(yq, yv):
            return yv, _acceleration(L, yq, yv)

        for i in range(steps):
            k1q, k1v = rhs(y_q, y_v)
            k2q, k2v = rhs(y_q + 0.5 * hstep * k1q, y_v + 0.5 * hstep * k1v)
            k3q, k3v = rhs(y_q + 0.5 * hstep * k2q, y_v + 0.5 * hstep * k2v)
            k4q, k4v = rhs(y_q + hstep * k3q, y_v + hstep * k3v)
            y_q = y_q + (hstep / 6.0) * (k1q + 2 * k2q + 2 * k3q + k4q)
            y_v = y_v + (hstep / 6.0) * (k1v + 2 * k2v + 2 * k3v + k4v)
            q[i + 1], v[i + 1] = y_q, y_v
    en = np.array([energy(L, q[i], v[i]) for i in range(steps + 1)])
    return ReferenceTrajectory(times, q, v, en)


# ---------------------------------------------------------------------------
# built-in systems
# ---------------------------------------------------------------------------

def _harmonic_exact(q0, v0, t):
    c, s = math.cos(t), math.sin(t)
    q0 = np.asarray(q0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    return q0 * c + v0 * s, -q0 * s + v0 * c


def harmonic_lagrangian(d: int = 1) -> ContinuousLagrangian:
    if d == 1:
        def fn(q, v):
            return 0.5 * (v[0] * v[0] - q[0] * q[0])

        def ham(q, p):
            return 0.5 * (p[0] * p[0] + q[0] * q[0])
    else:
        def fn(q, v):
            total = 0.0
            for x in v:
                total = total + x * x
            for x in q:
                total = total - x * x
            return 0.5 * total

        def ham(q, p):
            return 0.5 * (sum(x * x for x in p) + sum(x * x for x in q))

    return ContinuousLagrangian(fn, d, name="harmonic",
                                velocity_from_momentum=lambda q, p: p,
                                exact_solution=_harmonic_exact,
                                hamiltonian=ham)


def pendulum_lagrangian() -> ContinuousLagrangian:
    def fn(q, v):
        return 0.5 * v[0] * v[0] + cos_(q[0])

    return ContinuousLagrangian(fn, 1, name="pendulum",
                                velocity_from_momentum=lambda q, p: p,
                                hamiltonian=lambda q, p: 0.5 * p[0] * p[0] - math.cos(q[0]))


def kepler_lagrangian() -> ContinuousLagrangian:
    """Planar two-body problem with unit masses and unit coupling (d = 4)."""

    def fn(q, v):
        dx = q[0] - q[2]
        dy = q[1] - q[3]
        r = sqrt_(dx * dx + dy * dy)
        kin = v[0] * v[0] + v[1] * v[1] + v[2] * v[2] + v[3] * v[3]
        return 0.5 * kin + 1.0 / r

    def ham(q, p):
        dx = q[0] - q[2]
        dy = q[1] - q[3]
        r = math.sqrt(dx * dx + dy * dy)
        return 0.5 * (p[0] ** 2 + p[1] ** 2 + p[2] ** 2 + p[3] ** 2) - 1.0 / r

    return ContinuousLagrangian(fn, 4, name="kepler",
                                velocity_from_momentum=lambda q, p: p,
                                hamiltonian=ham)


@dataclass
class System:
    """Registry entry: how to build the discrete Lagrangian and read state."""

    name: str
    kind: str                       # "pair" or "group"
    d: int
    lagrangian: ContinuousLagrangian | None = None
    j_d: np.ndarray | None = None
    has_reference: bool = False

    def discrete(self, h: float, scheme: str = "midpoint") -> DiscreteLagrangian:
        if self.kind == "group":
            return rigid_body_lagrangian(self.j_d, h)
        if self.name == "degenerate":
            inst = PairGroupoid(1)
            # separable in (q0, q1): the cross Hessian vanishes identically,
            # so both discrete Legendre transforms are non-invertible
            return DiscreteLagrangian(
                inst, h, lambda c: 0.5 * c[0] * c[0] + 0.5 * c[1] * c[1],
                name="degenerate")
        if scheme == "midpoint":
            return midpoint_discretize(self.lagrangian, h)
        if scheme == "trapezoid":
            return trapezoid_discretize(self.lagrangian, h)
        raise ValueError(f"unknown discretization scheme {scheme!r}")


def _registry() -> dict[str, Callable[..., System]]:
    return {
        "harmonic": lambda d=1, **_: System(
            "harmonic", "pair", int(d), harmonic_lagrangian(int(d)),
            has_reference=True),
        "pendulum": lambda **_: System(
            "pendulum", "pair", 1, pendulum_lagrangian(), has_reference=True),
        "kepler": lambda **_: System(
            "kepler", "pair", 4, kepler_lagrangian(), has_reference=True),
        "rigid-body": lambda j_d=None, **_: System(
            "rigid-body", "group", 3,
            j_d=np.diag([1.0, 2.0, 3.0]) if j_d is None else np.asarray(j_d, dtype=float)),
        "degenerate": lambda **_: System("degenerate", "pair", 1),
    }


def available_systems() -> list[str]:
    return sorted(_registry())


def get_system(name: str, **params) -> System:
    reg = _registry()
    if name not in reg:
        raise KeyError(
            f"unknown system {name!r}; available: {', '.join(sorted(reg))}")
    return reg[name](**params)
