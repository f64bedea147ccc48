"""Lie groupoid interface with two concrete instances.

A groupoid here is a set of arrows over a base, with source/target maps,
partial composition, identities and inverses.  The two instances are the
pair groupoid over R^d (arrows are ordered point pairs) and the rotation
group SO(3) over a single base point.  Everything is exposed in explicit
chart coordinates: pair arrows carry (q0, q1), rotations carry the nine
matrix entries row-major.  Chart entries may be floats or Dual scalars, so
every map can be differentiated in forward mode.
"""

from __future__ import annotations

import math

import numpy as np

from .numerics import Dual, derivative, real_part, sin_, cos_, sqrt_


class GroupoidError(Exception):
    pass


class NotComposable(GroupoidError):
    def __init__(self, gap: float, index: int | None = None):
        self.gap = gap
        self.index = index
        where = "" if index is None else f" at index {index}"
        super().__init__(f"elements not composable{where} (gap {gap:.3e})")


class ProductMismatch(GroupoidError):
    def __init__(self, norm: float):
        self.norm = norm
        super().__init__(f"sequence product differs from target (norm {norm:.3e})")


class BasePointMismatch(GroupoidError):
    pass


COMPOSE_TOL = 1e-10       # arrows already carry Newton residual noise
ADMISSIBLE_TOL = 1e-12
ORTHOGONALITY_TOL = 1e-10
REORTHONORMALIZE_TOL = 1e-12


class BasePoint:
    """Point of the base manifold Q; empty coordinates for a group instance."""

    __slots__ = ("instance", "q")

    def __init__(self, instance, q):
        self.instance = instance
        self.q = tuple(q)

    def __repr__(self):
        return f"BasePoint({self.q})"


class GroupoidElement:
    """Arrow g in chart coordinates of its instance."""

    __slots__ = ("instance", "coords")

    def __init__(self, instance, coords):
        self.instance = instance
        self.coords = tuple(coords)

    # pair-groupoid accessors
    @property
    def q0(self):
        d = self.instance.d
        return self.coords[:d]

    @property
    def q1(self):
        d = self.instance.d
        return self.coords[d:]

    # matrix-group accessor
    def as_matrix(self) -> np.ndarray:
        return np.array([real_part(c) for c in self.coords], dtype=float).reshape(3, 3)

    def matrix_rows(self):
        c = self.coords
        return ((c[0], c[1], c[2]), (c[3], c[4], c[5]), (c[6], c[7], c[8]))

    def __repr__(self):
        vals = tuple(real_part(c) for c in self.coords)
        return f"GroupoidElement({self.instance.name}, {vals})"


class AlgebroidVector:
    """Element of the fiber A_q G in a fixed basis: xi coordinates over a base point."""

    __slots__ = ("base", "xi")

    def __init__(self, base: BasePoint, xi):
        self.base = base
        self.xi = tuple(xi)
        if len(self.xi) != base.instance.rank:
            raise ValueError(
                f"algebroid coordinates must have length {base.instance.rank}")

    def __repr__(self):
        return f"AlgebroidVector(base={self.base.q}, xi={self.xi})"


class AdmissibleSequence:
    """Validated composable arrows g_1, ..., g_N with fixed product g."""

    __slots__ = ("elements", "composite")

    def __init__(self, elements, composite):
        self.elements = list(elements)
        self.composite = composite

    def __len__(self):
        return len(self.elements)

    def __iter__(self):
        return iter(self.elements)


def base_gap(a: BasePoint, b: BasePoint) -> float:
    if not a.q:
        return 0.0
    return max(abs(real_part(x) - real_part(y)) for x, y in zip(a.q, b.q))


# ---------------------------------------------------------------------------
# so(3) helpers
# ---------------------------------------------------------------------------

def hat(v):
    """3-vector to skew matrix, as nested tuples (generic over scalar type)."""
    x, y, z = v
    return ((0.0, -z, y), (z, 0.0, -x), (-y, x, 0.0))


def vee(M) -> np.ndarray:
    return np.array([real_part(M[2][1]), real_part(M[0][2]), real_part(M[1][0])])


def mat3_mul(A, B):
    return tuple(
        tuple(A[i][0] * B[0][j] + A[i][1] * B[1][j] + A[i][2] * B[2][j]
              for j in range(3))
        for i in range(3))


def mat3_flat(A):
    return tuple(A[0]) + tuple(A[1]) + tuple(A[2])


def rodrigues(v):
    """exp of the skew matrix of v, generic over float/Dual components.

    Closed form I + a(theta) vhat + b(theta) vhat^2 with series branches for
    a = sin(theta)/theta and b = (1-cos(theta))/theta^2 near theta = 0, so the
    map stays differentiable through the origin.
    """
    x, y, z = v
    t2 = x * x + y * y + z * z
    if real_part(t2) < 1e-4:
        a = 1.0 - t2 / 6.0 + t2 * t2 / 120.0
        b = 0.5 - t2 / 24.0 + t2 * t2 / 720.0
    else:
        th = sqrt_(t2)
        a = sin_(th) / th
        b = (1.0 - cos_(th)) / t2
    X = hat(v)
    X2 = mat3_mul(X, X)
    return tuple(
        tuple((1.0 if i == j else 0.0) + a * X[i][j] + b * X2[i][j]
              for j in range(3))
        for i in range(3))


def orthogonality_defect(R: np.ndarray) -> float:
    return float(np.max(np.abs(R.T @ R - np.eye(3))))


def project_to_rotation(R: np.ndarray) -> np.ndarray:
    """Nearest rotation by polar decomposition (SVD with det correction)."""
    U, _, Vt = np.linalg.svd(R)
    if np.linalg.det(U @ Vt) < 0:
        U = U.copy()
        U[:, -1] = -U[:, -1]
    return U @ Vt


def rotation_to_quaternion(R: np.ndarray) -> np.ndarray:
    """Unit quaternion (w, x, y, z) of a rotation matrix, stable in all branches."""
    m = R
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    if tr > 0:
        s = math.sqrt(tr + 1.0) * 2.0
        q = np.array([0.25 * s,
                      (m[2, 1] - m[1, 2]) / s,
                      (m[0, 2] - m[2, 0]) / s,
                      (m[1, 0] - m[0, 1]) / s])
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
        q = np.array([(m[2, 1] - m[1, 2]) / s,
                      0.25 * s,
                      (m[0, 1] + m[1, 0]) / s,
                      (m[0, 2] + m[2, 0]) / s])
    elif m[1, 1] > m[2, 2]:
        s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
        q = np.array([(m[0, 2] - m[2, 0]) / s,
                      (m[0, 1] + m[1, 0]) / s,
                      0.25 * s,
                      (m[1, 2] + m[2, 1]) / s])
    else:
        s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
        q = np.array([(m[1, 0] - m[0, 1]) / s,
                      (m[0, 2] + m[2, 0]) / s,
                      (m[1, 2] + m[2, 1]) / s,
                      0.25 * s])
    return q / np.linalg.norm(q)


# ---------------------------------------------------------------------------
# Instances
# ---------------------------------------------------------------------------

class PairGroupoid:
    """Pair groupoid over R^d: arrows (q0, q1), composition glues matching ends."""

    def __init__(self, d: int):
        self.d = int(d)
        self.rank = self.d
        self.chart_dim = 2 * self.d
        self.name = f"pair(R^{d})"
        self.is_pair = True

    # -- construction -------------------------------------------------------

    def element(self, q0, q1) -> GroupoidElement:
        q0 = tuple(q0) if hasattr(q0, "__len__") else (q0,)
        q1 = tuple(q1) if hasattr(q1, "__len__") else (q1,)
        if len(q0) != self.d or len(q1) != self.d:
            raise ValueError(f"expected point pairs of dimension {self.d}")
        return GroupoidElement(self, q0 + q1)

    def base_point(self, q) -> BasePoint:
        q = tuple(q) if hasattr(q, "__len__") else (q,)
        if len(q) != self.d:
            raise ValueError(f"expected base point of dimension {self.d}")
        return BasePoint(self, q)

    # -- structure maps ------------------------------------------------------

    def source(self, g: GroupoidElement) -> BasePoint:
        return BasePoint(self, g.coords[:self.d])

    def target(self, g: GroupoidElement) -> BasePoint:
        return BasePoint(self, g.coords[self.d:])

    def identity(self, q: BasePoint) -> GroupoidElement:
        return GroupoidElement(self, q.q + q.q)

    def inverse(self, g: GroupoidElement) -> GroupoidElement:
        return GroupoidElement(self, g.coords[self.d:] + g.coords[:self.d])

    def compose(self, g: GroupoidElement, g2: GroupoidElement) -> GroupoidElement:
        gap = max(abs(real_part(a) - real_part(b))
                  for a, b in zip(g.coords[self.d:], g2.coords[:self.d]))
        if gap > COMPOSE_TOL:
            raise NotComposable(gap)
        return GroupoidElement(self, g.coords[:self.d] + g2.coords[self.d:])

    # -- infinitesimal structure ---------------------------------------------

    def exp_chart(self, q: BasePoint, xi, t) -> GroupoidElement:
        return GroupoidElement(self, q.q + tuple(p + t * x for p, x in zip(q.q, xi)))

    def left_curve(self, g: GroupoidElement, xi, t) -> GroupoidElement:
        d = self.d
        return GroupoidElement(
            self, g.coords[:d] + tuple(c + t * x for c, x in zip(g.coords[d:], xi)))

    def right_curve(self, g: GroupoidElement, xi, t) -> GroupoidElement:
        d = self.d
        return GroupoidElement(
            self, tuple(c - t * x for c, x in zip(g.coords[:d], xi)) + g.coords[d:])

    def left_tangent_basis(self, g: GroupoidElement):
        # d/dt of left_curve along each basis direction, in chart coordinates
        d = self.d
        zeros = (0.0,) * d
        out = []
        for k in range(d):
            e = tuple(1.0 if i == k else 0.0 for i in range(d))
            out.append(zeros + e)
        return out

    def right_tangent_basis(self, g: GroupoidElement):
        d = self.d
        zeros = (0.0,) * d
        out = []
        for k in range(d):
            e = tuple(-1.0 if i == k else 0.0 for i in range(d))
            out.append(e + zeros)
        return out

    def tangent_basis(self, g: GroupoidElement):
        """Basis of T_g G in chart coordinates (the chart is the manifold)."""
        n = self.chart_dim
        return [tuple(1.0 if i == k else 0.0 for i in range(n)) for k in range(n)]

    # -- solver parametrization: unknowns with source pinned ------------------

    def element_from_unknowns(self, source: BasePoint, seed: GroupoidElement, x):
        return GroupoidElement(self, source.q + tuple(x))

    def unknown_seed(self, seed: GroupoidElement):
        return [real_part(c) for c in seed.coords[self.d:]]


class SpecialOrthogonal3:
    """SO(3) as a groupoid over a single point; arrows are rotation matrices."""

    def __init__(self):
        self.rank = 3
        self.chart_dim = 9
        self.name = "SO(3)"
        self.is_pair = False
        self._point = BasePoint(self, ())

    def element(self, matrix, validate: bool = True) -> GroupoidElement:
        M = np.asarray(matrix, dtype=float)
        if M.shape != (3, 3):
            raise ValueError("expected a 3x3 matrix")
        if validate:
            if orthogonality_defect(M) > ORTHOGONALITY_TOL:
                raise ValueError("matrix is not orthogonal within 1e-10")
            if np.linalg.det(M) <= 0:
                raise ValueError("matrix must have positive determinant")
        return GroupoidElement(self, M.reshape(-1))

    def base_point(self, q=()) -> BasePoint:
        return self._point

    def source(self, g: GroupoidElement) -> BasePoint:
        return self._point

    def target(self, g: GroupoidElement) -> BasePoint:
        return self._point

    def identity(self, q: BasePoint = None) -> GroupoidElement:
        return GroupoidElement(self, (1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0))

    def inverse(self, g: GroupoidElement) -> GroupoidElement:
        c = g.coords
        return GroupoidElement(self, (c[0], c[3], c[6], c[1], c[4], c[7], c[2], c[5], c[8]))

    def compose(self, g: GroupoidElement, g2: GroupoidElement) -> GroupoidElement:
        prod = mat3_mul(g.matrix_rows(), g2.matrix_rows())
        flat = mat3_flat(prod)
        if all(isinstance(c, float) for c in flat):
            M = np.array(flat).reshape(3, 3)
            # drift control for long products
            if orthogonality_defect(M) > REORTHONORMALIZE_TOL:
                M = project_to_rotation(M)
            return GroupoidElement(self, M.reshape(-1))
        return GroupoidElement(self, flat)

    def exp_chart(self, q: BasePoint, xi, t) -> GroupoidElement:
        R = rodrigues(tuple(t * x for x in xi))
        return GroupoidElement(self, mat3_flat(R))

    def left_curve(self, g: GroupoidElement, xi, t) -> GroupoidElement:
        R = rodrigues(tuple(t * x for x in xi))
        return GroupoidElement(self, mat3_flat(mat3_mul(g.matrix_rows(), R)))

    def right_curve(self, g: GroupoidElement, xi, t) -> GroupoidElement:
        R = rodrigues(tuple(t * x for x in xi))
        return GroupoidElement(self, mat3_flat(mat3_mul(R, g.matrix_rows())))

    def _algebra_basis(self):
        return (hat((1.0, 0.0, 0.0)), hat((0.0, 1.0, 0.0)), hat((0.0, 0.0, 1.0)))

    def left_tangent_basis(self, g: GroupoidElement):
        G = g.matrix_rows()
        return [mat3_flat(mat3_mul(G, E)) for E in self._algebra_basis()]

    def right_tangent_basis(self, g: GroupoidElement):
        G = g.matrix_rows()
        return [mat3_flat(mat3_mul(E, G)) for E in self._algebra_basis()]

    def tangent_basis(self, g: GroupoidElement):
        return self.left_tangent_basis(g)

    def element_from_unknowns(self, source: BasePoint, seed: GroupoidElement, x):
        R = rodrigues(tuple(x))
        return GroupoidElement(self, mat3_flat(mat3_mul(seed.matrix_rows(), R)))

    def unknown_seed(self, seed: GroupoidElement):
        return [0.0, 0.0, 0.0]


# ---------------------------------------------------------------------------
# Free functions (the groupoid operation surface)
# ---------------------------------------------------------------------------

def source(g: GroupoidElement) -> BasePoint:
    return g.instance.source(g)


def target(g: GroupoidElement) -> BasePoint:
    return g.instance.target(g)


def identity(q: BasePoint) -> GroupoidElement:
    return q.instance.identity(q)


def inverse(g: GroupoidElement) -> GroupoidElement:
    return g.instance.inverse(g)


def compose(g: GroupoidElement, g2: GroupoidElement) -> GroupoidElement:
    return g.instance.compose(g, g2)


def exp_chart(q: BasePoint, xi: AlgebroidVector, t: float) -> GroupoidElement:
    return q.instance.exp_chart(q, xi.xi, t)


def left_derivative(f, g: GroupoidElement, xi: AlgebroidVector):
    """Derivative of f along the left-invariant flow of xi at g.

    xi must be based at target(g); for the pair groupoid this reduces to
    d1 f(q0, q1) . xi and for a matrix group to d/dt f(g exp(t xihat)).
    """
    gap = base_gap(xi.base, target(g))
    if gap > COMPOSE_TOL:
        raise BasePointMismatch(f"xi based {gap:.3e} away from target(g)")
    return derivative(lambda t: f(g.instance.left_curve(g, xi.xi, t)), 0.0)


def right_derivative(f, g: GroupoidElement, xi: AlgebroidVector):
    """Derivative of f along the right-invariant flow of xi at g.

    xi must be based at source(g); pair groupoid: -d0 f(q0, q1) . xi,
    matrix group: d/dt f(exp(t xihat) g).
    """
    gap = base_gap(xi.base, source(g))
    if gap > COMPOSE_TOL:
        raise BasePointMismatch(f"xi based {gap:.3e} away from source(g)")
    return derivative(lambda t: f(g.instance.right_curve(g, xi.xi, t)), 0.0)


def check_admissible(seq, g: GroupoidElement) -> AdmissibleSequence:
    """Validate composability of consecutive elements and the fixed product."""
    elements = list(seq)
    if not elements:
        raise ValueError("admissible sequence must be nonempty")
    for i in range(len(elements) - 1):
        gap = base_gap(target(elements[i]), source(elements[i + 1]))
        if gap > ADMISSIBLE_TOL:
            raise NotComposable(gap, index=i + 1)
    prod = elements[0]
    for e in elements[1:]:
        prod = compose(prod, e)
    norm = max(abs(real_part(a) - real_part(b))
               for a, b in zip(prod.coords, g.coords))
    if norm > ADMISSIBLE_TOL:
        raise ProductMismatch(norm)
    return AdmissibleSequence(elements, g)
