"""Discrete Hamilton-Pontryagin principle on cotangent paths.

Configurations are sequences of discretized paths in the cotangent bundle of
the groupoid, each pinned to the zero section at s = 0 and with admissible
initial projections.  The action integrates the discrete Lagrangian along the
path projections (composite quadrature on the nodal interpolant) plus the
line integral of the canonical one-form (segment-midpoint rule).  Because the
continuous problem is degenerate, stationarity is verified along an explicit
basis of constraint-compatible variations at candidate solutions built from
discrete Euler-Lagrange trajectories, rather than solved blindly; the
finite-dimensional multiplier formulation on vector spaces is the one that
gets solved directly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .groupoids import (
    GroupoidElement,
    GroupoidError,
    base_gap,
    check_admissible,
    compose,
    source,
    target,
)
from .lagrangians import DiscreteLagrangian
from .legendre_flow import (
    CotangentElement,
    cotangent_source,
    cotangent_target,
    d_lagrangian,
    legendre_minus,
    legendre_plus,
)
from .numerics import (
    QuadratureRule,
    derivative,
    gauss_legendre,
    grad_components,
    newton_solve,
    real_part,
)


class InvalidConfiguration(Exception):
    pass


class ResidualTooLarge(Exception):
    def __init__(self, residual: float, bound: float):
        self.residual = residual
        super().__init__(
            f"trajectory DEL residual {residual:.3e} exceeds {bound:.1e}")


class NotVectorSpaceInstance(Exception):
    pass


# ---------------------------------------------------------------------------
# path and configuration types
# ---------------------------------------------------------------------------

class CotangentPathDiscretization:
    """Sampled path [0,1] -> T*G: parameter nodes with (g, mu) chart data.

    Node 0 must sit on the zero section (all covector components exactly
    zero); at least two segments are required.
    """

    def __init__(self, instance, s_nodes, g_nodes, mu_nodes):
        self.instance = instance
        self.s = tuple(float(s) for s in s_nodes)
        self.g_nodes = tuple(tuple(g) for g in g_nodes)
        self.mu_nodes = tuple(tuple(m) for m in mu_nodes)
        if len(self.s) != len(self.g_nodes) or len(self.s) != len(self.mu_nodes):
            raise InvalidConfiguration("node arrays must share one length")
        if len(self.s) < 3:
            raise InvalidConfiguration("need at least two segments (M >= 2)")
        if self.s[0] != 0.0 or self.s[-1] != 1.0:
            raise InvalidConfiguration("parameter nodes must run from 0 to 1")
        if any(b <= a for a, b in zip(self.s, self.s[1:])):
            raise InvalidConfiguration("parameter nodes must increase strictly")
        dim = instance.chart_dim
        for g, m in zip(self.g_nodes, self.mu_nodes):
            if len(g) != dim or len(m) != dim:
                raise InvalidConfiguration("node data must match the chart dimension")
        if any(c != 0.0 for c in self.mu_nodes[0]):
            raise InvalidConfiguration("node 0 must lie on the zero section")

    @property
    def segments(self) -> int:
        return len(self.s) - 1

    def node(self, j: int) -> CotangentElement:
        return CotangentElement(GroupoidElement(self.instance, self.g_nodes[j]),
                                self.mu_nodes[j])

    def initial_element(self) -> GroupoidElement:
        return GroupoidElement(self.instance, self.g_nodes[0])

    def endpoint_element(self) -> GroupoidElement:
        return GroupoidElement(self.instance, self.g_nodes[-1])

    def endpoint_covector(self) -> CotangentElement:
        return self.node(len(self.s) - 1)


class HPConfiguration:
    """N cotangent paths with a fixed composite arrow and a quadrature rule."""

    def __init__(self, paths, composite: GroupoidElement,
                 rule: QuadratureRule | None = None):
        self.paths = list(paths)
        self.composite = composite
        self.rule = rule if rule is not None else gauss_legendre(2)
        if not self.paths:
            raise InvalidConfiguration("need at least one path")
        try:
            check_admissible([p.initial_element() for p in self.paths], composite)
        except GroupoidError as exc:
            raise InvalidConfiguration(
                f"initial projections are not admissible: {exc}") from exc

    @property
    def instance(self):
        return self.paths[0].instance


# ---------------------------------------------------------------------------
# the action
# ---------------------------------------------------------------------------

def _segment_action(L_h, rule, ga, gb, ds):
    total = 0.0
    for tq, w in zip(rule.nodes, rule.weights):
        coords = tuple(a + tq * (b - a) for a, b in zip(ga, gb))
        total = total + (ds * w) * L_h.value_at_coords(coords)
    return total


def _path_action(L_h, rule, s, g_nodes, mu_nodes):
    total = 0.0
    for j in range(len(s) - 1):
        ga, gb = g_nodes[j], g_nodes[j + 1]
        total = total + _segment_action(L_h, rule, ga, gb, s[j + 1] - s[j])
        mua, mub = mu_nodes[j], mu_nodes[j + 1]
        for c in range(len(ga)):
            total = total + 0.5 * (mua[c] + mub[c]) * (gb[c] - ga[c])
    return total


def hp_action(cfg: HPConfiguration, L_h: DiscreteLagrangian) -> float:
    """Sum over paths of the quadrature action plus the one-form line integral."""
    total = 0.0
    for p in cfg.paths:
        total = total + _path_action(L_h, cfg.rule, p.s, p.g_nodes, p.mu_nodes)
    return float(real_part(total))


# ---------------------------------------------------------------------------
# variations
# ---------------------------------------------------------------------------

@dataclass
class VariationBasis:
    """Constraint-compatible directions: (path, node, dg, dmu) entry lists.

    Interior nodes and the s = 1 endpoint carry free covector directions and
    tangent-space directions of the arrow chart; the endpoint arrow charts
    additionally move through whole-path junction translations (tangent to
    the constant-projection solution family), which keep the s = 0 sequence
    admissible and realize the boundary-term variations.
    """

    directions: list
    labels: list


def build_variation_basis(cfg: HPConfiguration) -> VariationBasis:
    inst = cfg.instance
    directions = []
    labels = []
    npaths = len(cfg.paths)
    for n, path in enumerate(cfg.paths):
        M = path.segments
        for j in range(1, M):
            g_el = GroupoidElement(inst, path.g_nodes[j])
            for k, tau in enumerate(inst.tangent_basis(g_el)):
                directions.append([(n, j, tau, None)])
                labels.append(f"path{n}.node{j}.g[{k}]")
        for j in range(1, M + 1):
            for c in range(inst.chart_dim):
                dmu = tuple(1.0 if i == c else 0.0 for i in range(inst.chart_dim))
                directions.append([(n, j, None, dmu)])
                labels.append(f"path{n}.node{j}.mu[{c}]")
    for i in range(npaths - 1):
        left_path = cfg.paths[i]
        right_path = cfg.paths[i + 1]
        for k in range(inst.rank):
            e = tuple(1.0 if q == k else 0.0 for q in range(inst.rank))
            entries = []
            for j in range(left_path.segments + 1):
                g_el = GroupoidElement(inst, left_path.g_nodes[j])
                entries.append((i, j, inst.left_tangent_basis(g_el)[k], None))
            for j in range(right_path.segments + 1):
                g_el = GroupoidElement(inst, right_path.g_nodes[j])
                tau = inst.right_tangent_basis(g_el)[k]
                entries.append((i + 1, j, tuple(-t for t in tau), None))
            directions.append(entries)
            labels.append(f"junction{i}.e[{k}]")
    return VariationBasis(directions, labels)


def _action_along_direction(cfg: HPConfiguration, L_h: DiscreteLagrangian,
                            entries, t):
    deltas = {}
    for (n, j, dg, dmu) in entries:
        slot = deltas.setdefault((n, j), [None, None])
        if dg is not None:
            slot[0] = dg if slot[0] is None else tuple(
                a + b for a, b in zip(slot[0], dg))
        if dmu is not None:
            slot[1] = dmu if slot[1] is None else tuple(
                a + b for a, b in zip(slot[1], dmu))
    total = 0.0
    for n, path in enumerate(cfg.paths):
        g_nodes = list(path.g_nodes)
        mu_nodes = list(path.mu_nodes)
        for (pn, j), (dg, dmu) in deltas.items():
            if pn != n:
                continue
            if dg is not None:
                g_nodes[j] = tuple(x + t * v for x, v in zip(g_nodes[j], dg))
            if dmu is not None:
                mu_nodes[j] = tuple(x + t * v for x, v in zip(mu_nodes[j], dmu))
        total = total + _path_action(L_h, cfg.rule, path.s, g_nodes, mu_nodes)
    return total


def hp_differential(cfg: HPConfiguration, L_h: DiscreteLagrangian,
                    basis: VariationBasis) -> np.ndarray:
    """Directional derivatives of the action along every basis direction."""
    out = np.empty(len(basis.directions))
    for i, entries in enumerate(basis.directions):
        out[i] = real_part(derivative(
            lambda t, e=entries: _action_along_direction(cfg, L_h, e, t), 0.0))
    return out


# ---------------------------------------------------------------------------
# solution construction and theorem verification
# ---------------------------------------------------------------------------

def construct_hp_solution(L_h: DiscreteLagrangian, trajectory, nodes: int = 5,
                          rule: QuadratureRule | None = None,
                          residual_bound: float = 1e-10) -> HPConfiguration:
    """Vertical-path configuration over a DEL trajectory.

    Each arrow gets a constant projection and a covector climbing linearly
    from the zero section to the full chart differential of the Lagrangian;
    ``nodes`` counts segments per path.
    """
    elements = list(trajectory.elements if hasattr(trajectory, "elements")
                    else trajectory)
    if not elements:
        raise ValueError("trajectory must contain at least one arrow")
    worst = 0.0
    for a, b in zip(elements, elements[1:]):
        gap = np.max(np.abs(legendre_plus(L_h, a).mu_array()
                            - legendre_minus(L_h, b).mu_array()))
        worst = max(worst, float(gap))
    if worst > residual_bound:
        raise ResidualTooLarge(worst, residual_bound)
    paths = []
    svals = [j / nodes for j in range(nodes + 1)]
    for g in elements:
        dl = d_lagrangian(L_h, g).comps
        g_nodes = [g.coords for _ in svals]
        mu_nodes = [tuple(s * c for c in dl) for s in svals]
        paths.append(CotangentPathDiscretization(
            g.instance, svals, g_nodes, mu_nodes))
    composite = elements[0]
    for e in elements[1:]:
        composite = compose(composite, e)
    return HPConfiguration(paths, composite, rule)


@dataclass
class TheoremReport:
    """Residuals for the three stationarity conclusions, against one tolerance."""

    admissible_gap: float
    legendre_residual: float
    composability_gap: float
    tol: float

    @property
    def pass_admissible(self) -> bool:
        return self.admissible_gap <= self.tol

    @property
    def pass_legendre(self) -> bool:
        return self.legendre_residual <= self.tol

    @property
    def pass_composable(self) -> bool:
        return self.composability_gap <= self.tol

    @property
    def all_pass(self) -> bool:
        return self.pass_admissible and self.pass_legendre and self.pass_composable

    def to_dict(self) -> dict:
        return {
            "admissible_gap": self.admissible_gap,
            "legendre_residual": self.legendre_residual,
            "composability_gap": self.composability_gap,
            "pass": {
                "admissible": self.pass_admissible,
                "legendre": self.pass_legendre,
                "composable": self.pass_composable,
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def verify_theorem(cfg: HPConfiguration, L_h: DiscreteLagrangian,
                   tol: float = 1e-9) -> TheoremReport:
    """Measure the three endpoint conclusions of the stationarity theorem.

    (i) endpoint projections form an admissible sequence for the composite,
    (ii) endpoint covectors equal the Lagrangian differential there,
    (iii) consecutive endpoint covectors are composable in the cotangent
    groupoid.  Returns residuals; nothing is raised on failure.
    """
    endpoints = [p.endpoint_element() for p in cfg.paths]
    chain_gap = 0.0
    for a, b in zip(endpoints, endpoints[1:]):
        chain_gap = max(chain_gap, base_gap(target(a), source(b)))
    admissible_gap = chain_gap
    if chain_gap < 1e-8:
        product = endpoints[0]
        for e in endpoints[1:]:
            product = compose(product, e)
        prod_gap = max(abs(real_part(a) - real_part(b))
                       for a, b in zip(product.coords, cfg.composite.coords))
        admissible_gap = max(chain_gap, prod_gap)

    legendre_residual = 0.0
    for p in cfg.paths:
        mu_end = p.endpoint_covector()
        dl = d_lagrangian(L_h, mu_end.g)
        gap = np.max(np.abs(mu_end.comps_array() - dl.comps_array()))
        legendre_residual = max(legendre_residual, float(gap))

    composability_gap = 0.0
    for pa, pb in zip(cfg.paths, cfg.paths[1:]):
        beta = cotangent_target(pa.endpoint_covector())
        alpha = cotangent_source(pb.endpoint_covector())
        gap = np.max(np.abs(beta.mu_array() - alpha.mu_array()))
        composability_gap = max(composability_gap, float(gap))

    return TheoremReport(float(admissible_gap), legendre_residual,
                         composability_gap, tol)


def hamiltonian_htilde(L_h: DiscreteLagrangian, mu: CotangentElement) -> float:
    """Fiberwise-constant Hamiltonian whose flow climbs the cotangent fibers."""
    return float(-real_part(L_h(mu.g)))


# ---------------------------------------------------------------------------
# multiplier formulation on vector spaces
# ---------------------------------------------------------------------------

def _require_pair(L_h: DiscreteLagrangian):
    if not L_h.instance.is_pair:
        raise NotVectorSpaceInstance(
            "point differences need a vector space; use the cotangent-path form")


def _lo_action(L_h, z, N, d, qa, qb):
    # layout: [q_1^0, q_1^1, ..., q_N^0, q_N^1, p_0, ..., p_N], blocks of d
    total = 0.0
    for n in range(N):
        coords = tuple(z[2 * n * d:(2 * n + 2) * d])
        total = total + L_h.value_at_coords(coords)
    pbase = 2 * N * d

    def p(n):
        return z[pbase + n * d:pbase + (n + 1) * d]

    q10 = z[0:d]
    for c in range(d):
        total = total + p(0)[c] * (q10[c] - qa[c])
    for n in range(1, N):
        qn1 = z[(2 * n - 1) * d:2 * n * d]
        qn1_0 = z[2 * n * d:(2 * n + 1) * d]
        for c in range(d):
            total = total + p(n)[c] * (qn1_0[c] - qn1[c])
    # terminal constraint enters with the opposite sign to the initial one, so
    # stationarity in q_N^1 yields p_N = d1 L_h (the physical end momentum)
    qN1 = z[(2 * N - 1) * d:2 * N * d]
    for c in range(d):
        total = total + p(N)[c] * (qb[c] - qN1[c])
    return total


def leok_ohsawa_action(points, multipliers, L_h: DiscreteLagrangian,
                       boundary) -> float:
    """Multiplier action: Lagrangian terms plus point-difference constraints.

    ``points`` lists N pairs (q_n^0, q_n^1), ``multipliers`` the N+1 momentum
    multipliers, ``boundary`` the fixed endpoints (q_0, q_N).
    """
    _require_pair(L_h)
    d = L_h.instance.d
    N = len(points)
    if len(multipliers) != N + 1:
        raise ValueError("need N+1 multipliers for N point pairs")
    z = []
    for (q0, q1) in points:
        z.extend(q0)
        z.extend(q1)
    for p in multipliers:
        z.extend(p)
    qa = [float(v) for v in boundary[0]]
    qb = [float(v) for v in boundary[1]]
    return float(real_part(_lo_action(L_h, z, N, d, qa, qb)))


@dataclass
class LeokOhsawaSolution:
    points: list          # N pairs of (q_n^0, q_n^1) arrays
    multipliers: list     # N+1 momentum arrays
    boundary: tuple

    def chain(self) -> list:
        """Configuration points q_0, q_1, ..., q_N along the solution."""
        out = [np.asarray(self.boundary[0], dtype=float)]
        for (_, q1) in self.points:
            out.append(np.asarray(q1, dtype=float))
        return out

    def interior_points(self) -> list:
        return self.chain()[1:-1]


def leok_ohsawa_solve(L_h: DiscreteLagrangian, boundary, N: int,
                      tol: float = 1e-12) -> LeokOhsawaSolution:
    """Newton on the stationarity system of the multiplier action.

    The residual is the exact gradient of the action in all unknowns, so a
    root is a genuine critical point; seeds interpolate the boundary and take
    multipliers from the plus Legendre transform of the interpolated pairs.
    """
    _require_pair(L_h)
    inst = L_h.instance
    d = inst.d
    qa = [float(v) for v in (boundary[0] if hasattr(boundary[0], "__len__")
                             else [boundary[0]])]
    qb = [float(v) for v in (boundary[1] if hasattr(boundary[1], "__len__")
                             else [boundary[1]])]
    if N < 1:
        raise ValueError("need at least one step")

    def F(z):
        return grad_components(lambda zz: _lo_action(L_h, zz, N, d, qa, qb), z)

    z0 = []
    chain = [[(1 - i / N) * a + (i / N) * b for a, b in zip(qa, qb)]
             for i in range(N + 1)]
    for n in range(N):
        z0.extend(chain[n])
        z0.extend(chain[n + 1])
    z0.extend(legendre_minus(L_h, inst.element(chain[0], chain[1])).mu)
    for n in range(1, N + 1):
        z0.extend(legendre_plus(L_h, inst.element(chain[n - 1], chain[n])).mu)

    z = newton_solve(F, z0, tol=tol)
    points = [(np.array(z[2 * n * d:(2 * n + 1) * d]),
               np.array(z[(2 * n + 1) * d:(2 * n + 2) * d])) for n in range(N)]
    pbase = 2 * N * d
    multipliers = [np.array(z[pbase + n * d:pbase + (n + 1) * d])
                   for n in range(N + 1)]
    return LeokOhsawaSolution(points, multipliers, (qa, qb))


def hp_interior_points(cfg: HPConfiguration) -> list:
    """Junction configuration points of the endpoint projections (pair case)."""
    inst = cfg.instance
    if not inst.is_pair:
        raise NotVectorSpaceInstance("interior points are chart points of Q")
    pts = []
    for p in cfg.paths[:-1]:
        pts.append(np.array([real_part(c)
                             for c in p.endpoint_element().coords[inst.d:]]))
    return pts
