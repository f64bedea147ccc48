"""Discrete Legendre transforms and the momentum-level flow they generate.

The discrete Lagrangian's chart differential, pushed through the cotangent
groupoid source/target maps, gives the two Legendre transforms into the dual
algebroid.  Matching them across consecutive arrows is the discrete
Euler-Lagrange condition; inverting the minus transform gives the one-step
flow on momentum space.  Structure checkers (symplecticity on the pair
instance, Casimir norms on the group instance) and the discrete action with
its variational differential live here too.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .groupoids import (
    AdmissibleSequence,
    AlgebroidVector,
    BasePoint,
    GroupoidElement,
    NotComposable,
    base_gap,
    left_derivative,
    right_derivative,
    source,
    target,
)
from .lagrangians import DiscreteLagrangian, energy as continuous_energy
from .numerics import (
    Dual,
    SingularJacobian,
    derivative,
    grad_components,
    hessian,
    newton_solve,
    newton_solve_detailed,
    real_part,
    seed_block,
)


class NotAdmissible(Exception):
    pass


class SolverStepError(Exception):
    """A Newton solve failed while building a trajectory; names the step."""

    def __init__(self, step: int, cause: Exception):
        self.step = step
        super().__init__(f"solver failed at step {step}: {cause}")


class AlgebroidCovector:
    """Momentum-level state: covector components over a base point."""

    __slots__ = ("base", "mu")

    def __init__(self, base: BasePoint, mu):
        self.base = base
        self.mu = tuple(mu)

    def mu_array(self) -> np.ndarray:
        return np.array([real_part(m) for m in self.mu])

    def __repr__(self):
        return f"AlgebroidCovector(base={self.base.q}, mu={self.mu})"


class CotangentElement:
    """Covector on the groupoid itself: raw chart coefficients over an arrow g."""

    __slots__ = ("g", "comps")

    def __init__(self, g: GroupoidElement, comps):
        self.g = g
        self.comps = tuple(comps)
        if len(self.comps) != g.instance.chart_dim:
            raise ValueError("covector components must match the chart dimension")

    def comps_array(self) -> np.ndarray:
        return np.array([real_part(c) for c in self.comps])

    def __repr__(self):
        return f"CotangentElement(g={self.g!r})"


# ---------------------------------------------------------------------------
# differentials and Legendre transforms
# ---------------------------------------------------------------------------

def d_lagrangian(L_h: DiscreteLagrangian, g: GroupoidElement) -> CotangentElement:
    """Chart differential dL_h(g) as a covector over g."""
    comps = grad_components(L_h.value_at_coords, g.coords)
    return CotangentElement(g, comps)


def _contract(comps, tangent):
    total = 0.0
    for c, t in zip(comps, tangent):
        total = total + c * t
    return total


def cotangent_source(mu: CotangentElement) -> AlgebroidCovector:
    """Source map of the cotangent groupoid: pair with right-invariant tangents."""
    g = mu.g
    basis = g.instance.right_tangent_basis(g)
    return AlgebroidCovector(source(g), tuple(_contract(mu.comps, t) for t in basis))


def cotangent_target(mu: CotangentElement) -> AlgebroidCovector:
    """Target map of the cotangent groupoid: pair with left-invariant tangents."""
    g = mu.g
    basis = g.instance.left_tangent_basis(g)
    return AlgebroidCovector(target(g), tuple(_contract(mu.comps, t) for t in basis))


def _minus_components(L_h: DiscreteLagrangian, g: GroupoidElement):
    """Components of F-L_h(g); generic over float/Dual chart coordinates."""
    inst = g.instance
    if inst.is_pair:
        d = inst.d
        y = L_h.value_at_coords(seed_block(g.coords, 0, d))
        if isinstance(y, Dual):
            return tuple(-e for e in y.eps)
        return (0.0,) * d
    dl = grad_components(L_h.value_at_coords, list(g.coords))
    basis = inst.right_tangent_basis(g)
    return tuple(_contract(dl, t) for t in basis)


def _plus_components(L_h: DiscreteLagrangian, g: GroupoidElement):
    """Components of F+L_h(g); generic over float/Dual chart coordinates."""
    inst = g.instance
    if inst.is_pair:
        d = inst.d
        y = L_h.value_at_coords(seed_block(g.coords, d, 2 * d))
        if isinstance(y, Dual):
            return tuple(y.eps)
        return (0.0,) * d
    dl = grad_components(L_h.value_at_coords, list(g.coords))
    basis = inst.left_tangent_basis(g)
    return tuple(_contract(dl, t) for t in basis)


def legendre_minus(L_h: DiscreteLagrangian, g: GroupoidElement) -> AlgebroidCovector:
    """F-L_h(g): momentum over source(g) read off the right-invariant pairing."""
    return AlgebroidCovector(source(g), _minus_components(L_h, g))


def legendre_plus(L_h: DiscreteLagrangian, g: GroupoidElement) -> AlgebroidCovector:
    """F+L_h(g): momentum over target(g) read off the left-invariant pairing."""
    return AlgebroidCovector(target(g), _plus_components(L_h, g))


# ---------------------------------------------------------------------------
# discrete Euler-Lagrange stepping
# ---------------------------------------------------------------------------

def _basis_vectors(instance, base: BasePoint):
    rank = instance.rank
    return [AlgebroidVector(base, tuple(1.0 if i == k else 0.0 for i in range(rank)))
            for k in range(rank)]


def del_residual(L_h: DiscreteLagrangian, g_left: GroupoidElement,
                 g_right: GroupoidElement) -> np.ndarray:
    """Per-basis-direction defect of the discrete Euler-Lagrange equations.

    Computed from the invariant-derivative definition (flow curves), which is
    an independent route from the Legendre-transform matching it equals.
    """
    gap = base_gap(target(g_left), source(g_right))
    if gap > 1e-10:
        raise NotComposable(gap)
    junction = target(g_left)
    out = np.empty(L_h.instance.rank)
    for k, e in enumerate(_basis_vectors(L_h.instance, junction)):
        out[k] = real_part(left_derivative(L_h, g_left, e)
                           - right_derivative(L_h, g_right, e))
    return out


def del_step(L_h: DiscreteLagrangian, g_prev: GroupoidElement,
             tol: float = 1e-12) -> GroupoidElement:
    """Advance the two-step method: solve the DEL equations for the next arrow.

    Newton runs over the free chart coordinates of the next arrow with its
    source pinned to target(g_prev); the seed extrapolates the previous arrow
    (pair instance) or repeats it (group instance).
    """
    inst = L_h.instance
    junction = target(g_prev)
    lvec = [real_part(left_derivative(L_h, g_prev, e))
            for e in _basis_vectors(inst, junction)]
    if inst.is_pair:
        d = inst.d
        seed = inst.element(junction.q,
                            tuple(2.0 * b - a for a, b in
                                  zip(g_prev.coords[:d], g_prev.coords[d:])))
    else:
        seed = g_prev

    def F(x):
        g_next = inst.element_from_unknowns(junction, seed, x)
        fm = _minus_components(L_h, g_next)
        return [lv - c for lv, c in zip(lvec, fm)]

    x = newton_solve(F, inst.unknown_seed(seed), tol=tol)
    return inst.element_from_unknowns(junction, seed, [float(v) for v in x])


def _flow_step(L_h: DiscreteLagrangian, mu: AlgebroidCovector,
               seed: GroupoidElement | None, tol: float):
    inst = L_h.instance
    base = mu.base
    if seed is None:
        if inst.is_pair:
            seed = inst.element(base.q, base.q)
        else:
            seed = inst.identity()
    mu_vec = [real_part(m) for m in mu.mu]

    if inst.is_pair:
        # hot path: skip element construction, seed the source block directly
        d = inst.d
        base_q = tuple(base.q)
        value_at = L_h.value_at_coords

        def F(x):
            y = value_at(seed_block(base_q + tuple(x), 0, d))
            if isinstance(y, Dual):
                return [-e - m for e, m in zip(y.eps, mu_vec)]
            return [-m for m in mu_vec]
    else:
        def F(x):
            g = inst.element_from_unknowns(base, seed, x)
            fm = _minus_components(L_h, g)
            return [c - m for c, m in zip(fm, mu_vec)]

    res = newton_solve_detailed(F, inst.unknown_seed(seed), tol=tol)
    g = inst.element_from_unknowns(base, seed, [float(v) for v in res.x])
    # F at the converged point was mu-relative, so F- there is mu + residual
    mu_minus = AlgebroidCovector(
        base, tuple(m + f for m, f in zip(mu_vec, res.fvals)))
    return g, legendre_plus(L_h, g), mu_minus


def flow_map(L_h: DiscreteLagrangian, mu: AlgebroidCovector,
             seed: GroupoidElement | None = None,
             tol: float = 1e-12) -> tuple[GroupoidElement, AlgebroidCovector]:
    """One step of the momentum-level integrator: invert F- at mu, apply F+.

    Solves F-L_h(g) = mu for g with source(g) pinned to the base of mu, then
    returns (g, F+L_h(g)).
    """
    g, mu_plus, _ = _flow_step(L_h, mu, seed, tol)
    return g, mu_plus


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------

@dataclass
class Trajectory:
    """Time-indexed output of ``simulate``.

    Row n of the diagnostics describes the state after n steps; interior rows
    (1 <= n <= steps-1) also carry the momentum-matching defect and the
    composability gap of the junction between arrows n and n+1.
    """

    h: float
    times: np.ndarray
    elements: list
    mu_minus: list
    mu_plus: list
    energy: np.ndarray
    del_residual: np.ndarray
    composability_gap: np.ndarray
    driver: str = "flow"

    @property
    def steps(self) -> int:
        return len(self.elements)

    def states(self) -> list:
        """Momentum states mu_0, ..., mu_N along the trajectory."""
        if not self.elements:
            return []
        return [self.mu_minus[0]] + list(self.mu_plus)


def _state_energy(L_h: DiscreteLagrangian, cov: AlgebroidCovector) -> float:
    if not L_h.instance.is_pair:
        return float(np.linalg.norm(cov.mu_array()))
    L = L_h.continuous
    if L is None:
        return float("nan")
    q = cov.base.q
    p = cov.mu
    if L.hamiltonian is not None:
        return float(L.hamiltonian(q, p))
    q = [real_part(x) for x in q]
    p = cov.mu_array()
    if L.velocity_from_momentum is not None:
        v = np.asarray(L.velocity_from_momentum(q, p), dtype=float)
    else:
        d = len(q)

        def invert_legendre(vv):
            lifted = seed_block(list(q) + list(vv), d, 2 * d)
            y = L(lifted[:d], lifted[d:])
            comps = y.eps if isinstance(y, Dual) else (0.0,) * d
            return [c - pi for c, pi in zip(comps, p)]

        v = newton_solve(invert_legendre, p, tol=1e-12)
    return continuous_energy(L, q, v)


def simulate(L_h: DiscreteLagrangian, initial, steps: int,
             tol: float = 1e-12) -> Trajectory:
    """Iterate the integrator and collect diagnostics.

    ``initial`` selects the driver: an AlgebroidCovector iterates the
    momentum-level flow map (steps >= 0), a GroupoidElement iterates the
    configuration-level DEL step with the given arrow as step one
    (steps >= 1).  Matched initial data (mu = F-L_h(g1)) makes the two
    drivers produce the same arrows.
    """
    inst = L_h.instance
    elements: list[GroupoidElement] = []
    mu_plus: list[AlgebroidCovector] | None = None
    mu_minus: list[AlgebroidCovector] | None = None
    if isinstance(initial, AlgebroidCovector):
        driver = "flow"
        mu = initial
        seed = None
        mu_plus = []
        mu_minus = []
        for n in range(1, steps + 1):
            try:
                g, mu_p, mu_m = _flow_step(L_h, mu, seed, tol)
            except Exception as exc:
                raise SolverStepError(n, exc) from exc
            elements.append(g)
            mu_plus.append(mu_p)
            mu_minus.append(mu_m)
            mu = mu_p
            if inst.is_pair:
                d = inst.d
                seed = GroupoidElement(
                    inst,
                    g.coords[d:]
                    + tuple(2.0 * b - a for a, b in zip(g.coords[:d], g.coords[d:])))
            else:
                seed = g
        initial_state = initial
    elif isinstance(initial, GroupoidElement):
        driver = "del"
        if steps < 1:
            raise ValueError("the configuration-level driver needs steps >= 1")
        g = initial
        elements.append(g)
        for n in range(2, steps + 1):
            try:
                g = del_step(L_h, g, tol=tol)
            except Exception as exc:
                raise SolverStepError(n, exc) from exc
            elements.append(g)
        initial_state = legendre_minus(L_h, elements[0])
    else:
        raise TypeError("initial must be an AlgebroidCovector or GroupoidElement")

    n_steps = len(elements)
    times = L_h.h * np.arange(n_steps + 1)
    if mu_minus is None:
        mu_minus = [legendre_minus(L_h, g) for g in elements]
    if mu_plus is None:
        mu_plus = [legendre_plus(L_h, g) for g in elements]
    energy = np.empty(n_steps + 1)
    del_res = np.zeros(n_steps + 1)
    comp_gap = np.zeros(n_steps + 1)
    energy[0] = _state_energy(L_h, mu_minus[0] if elements else initial_state)
    for n in range(1, n_steps + 1):
        energy[n] = _state_energy(L_h, mu_plus[n - 1])
    for n in range(1, n_steps):
        del_res[n] = float(np.max(np.abs(
            mu_plus[n - 1].mu_array() - mu_minus[n].mu_array())))
        comp_gap[n] = base_gap(target(elements[n - 1]), source(elements[n]))
    return Trajectory(L_h.h, times, elements, mu_minus, mu_plus,
                      energy, del_res, comp_gap, driver=driver)


# ---------------------------------------------------------------------------
# structure checkers
# ---------------------------------------------------------------------------

def one_step_jacobian(L_h: DiscreteLagrangian, mu: AlgebroidCovector) -> np.ndarray:
    """Jacobian of the (q, p) one-step map through the implicit Newton solve.

    Differentiates the converged fixed point with the implicit function
    theorem, so solver-tolerance noise never enters the derivative.
    """
    inst = L_h.instance
    if not inst.is_pair:
        raise ValueError("the canonical symplectic check needs the pair instance")
    d = inst.d
    g, _ = flow_map(L_h, mu)
    H = hessian(L_h.value_at_coords, list(g.coords))
    L00 = H[:d, :d]
    L01 = H[:d, d:]
    L11 = H[d:, d:]
    # G(q0, p0, q1) = -D0 L_h(q0, q1) - p0 = 0 at the converged step, so
    # L01 dq1 = -L00 dq0 - dp0 and the momentum row follows by the chain rule.
    try:
        A = np.linalg.solve(L01, -L00)
        B = np.linalg.solve(L01, -np.eye(d))
    except np.linalg.LinAlgError as exc:
        raise SingularJacobian(str(exc)) from exc
    C = L01.T + L11 @ A
    D = L11 @ B
    return np.block([[A, B], [C, D]])


def symplecticity_defect(L_h: DiscreteLagrangian, mu: AlgebroidCovector) -> float:
    """||J^T Omega J - Omega||_inf for the one-step map at mu."""
    d = L_h.instance.d
    J = one_step_jacobian(L_h, mu)
    omega = np.block([[np.zeros((d, d)), np.eye(d)],
                      [-np.eye(d), np.zeros((d, d))]])
    return float(np.max(np.abs(J.T @ omega @ J - omega)))


# ---------------------------------------------------------------------------
# discrete action
# ---------------------------------------------------------------------------

def action_sum(L_h: DiscreteLagrangian, seq: AdmissibleSequence) -> float:
    if not isinstance(seq, AdmissibleSequence):
        raise NotAdmissible("pass a sequence validated by check_admissible")
    return float(sum(real_part(L_h(g)) for g in seq))


def action_differential(L_h: DiscreteLagrangian, seq: AdmissibleSequence,
                        variations) -> float:
    """Directional derivative of the action along junction variations.

    ``variations`` lists one algebroid-coordinate vector per interior junction
    (None for an unmoved junction); endpoints stay fixed, so the perturbed
    sequences remain admissible for the same composite arrow.
    """
    if not isinstance(seq, AdmissibleSequence):
        raise NotAdmissible("pass a sequence validated by check_admissible")
    elements = seq.elements
    n = len(elements)
    variations = list(variations)
    if len(variations) != n - 1:
        raise ValueError("need one variation per interior junction")

    def perturbed_action(t):
        total = 0.0
        for i, g in enumerate(elements):
            gp = g
            if i >= 1 and variations[i - 1] is not None:
                gp = gp.instance.right_curve(gp, tuple(variations[i - 1]), -t)
            if i <= n - 2 and variations[i] is not None:
                gp = gp.instance.left_curve(gp, tuple(variations[i]), t)
            total = total + L_h(gp)
        return total

    return float(real_part(derivative(perturbed_action, 0.0)))


def del_boundary_solve(L_h: DiscreteLagrangian, q_start, q_end, N: int,
                       tol: float = 1e-12) -> list[np.ndarray]:
    """Interior points of the N-step DEL boundary-value problem (pair instance).

    Unknowns are the N-1 interior configuration points; the seed interpolates
    the boundary linearly.
    """
    inst = L_h.instance
    if not inst.is_pair:
        raise ValueError("boundary-value solve is defined on the pair instance")
    d = inst.d
    qa = [float(v) for v in (q_start if hasattr(q_start, "__len__") else [q_start])]
    qb = [float(v) for v in (q_end if hasattr(q_end, "__len__") else [q_end])]
    if N < 2:
        raise ValueError("need at least two steps for an interior point")

    def F(x):
        pts = [qa] + [list(x[i * d:(i + 1) * d]) for i in range(N - 1)] + [qb]
        out = []
        for j in range(1, N):
            g_left = GroupoidElement(inst, tuple(pts[j - 1]) + tuple(pts[j]))
            g_right = GroupoidElement(inst, tuple(pts[j]) + tuple(pts[j + 1]))
            fp = _plus_components(L_h, g_left)
            fm = _minus_components(L_h, g_right)
            out.extend(a - b for a, b in zip(fp, fm))
        return out

    x0 = []
    for i in range(1, N):
        t = i / N
        x0.extend((1 - t) * a + t * b for a, b in zip(qa, qb))
    x = newton_solve(F, x0, tol=tol)
    return [np.array(x[i * d:(i + 1) * d]) for i in range(N - 1)]
