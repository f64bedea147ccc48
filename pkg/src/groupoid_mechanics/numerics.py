"""Small-dimension numerical kernel.

Forward-mode dual numbers are the primary derivative engine throughout the
library; central finite differences exist only as an independent cross-check.
A damped Newton solver and fixed-order Gauss-Legendre quadrature round out
the kernel.  Everything here is pure and value-semantic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


class NumericsError(Exception):
    """Base class for numerical-kernel failures."""


class NoConvergence(NumericsError):
    def __init__(self, iterations: int, residual: float):
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            f"Newton stalled after {iterations} iteration(s), residual {residual:.3e}"
        )


class SingularJacobian(NumericsError):
    pass


# ---------------------------------------------------------------------------
# Dual numbers
# ---------------------------------------------------------------------------

class Dual:
    """Dual scalar: a value plus a fixed-width block of directional derivatives.

    ``eps`` is a tuple so arithmetic can seed several directions at once.
    Components may themselves be ``Dual``, giving exact second derivatives;
    levels must be kept separate by construction (the seeding helpers below
    lift every argument, so constants of an outer level never mix widths with
    an inner level).
    """

    __slots__ = ("val", "eps")

    def __init__(self, val, eps):
        self.val = val
        self.eps = eps

    # -- arithmetic --------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Dual):
            se, oe = self.eps, other.eps
            if len(se) == 1 and len(oe) == 1:
                return Dual(self.val + other.val, (se[0] + oe[0],))
            return Dual(self.val + other.val,
                        tuple(a + b for a, b in zip(se, oe, strict=True)))
        return Dual(self.val + other, self.eps)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            se, oe = self.eps, other.eps
            if len(se) == 1 and len(oe) == 1:
                return Dual(self.val - other.val, (se[0] - oe[0],))
            return Dual(self.val - other.val,
                        tuple(a - b for a, b in zip(se, oe, strict=True)))
        return Dual(self.val - other, self.eps)

    def __rsub__(self, other):
        return Dual(other - self.val, tuple(-a for a in self.eps))

    def __mul__(self, other):
        if isinstance(other, Dual):
            sv, ov = self.val, other.val
            se, oe = self.eps, other.eps
            if len(se) == 1 and len(oe) == 1:
                return Dual(sv * ov, (se[0] * ov + sv * oe[0],))
            return Dual(sv * ov,
                        tuple(a * ov + sv * b for a, b in zip(se, oe, strict=True)))
        sv = self.val
        se = self.eps
        if len(se) == 1:
            return Dual(sv * other, (se[0] * other,))
        return Dual(sv * other, tuple(a * other for a in se))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            inv = 1.0 / other.val
            q = self.val * inv
            return Dual(q, tuple((a - q * b) * inv
                                 for a, b in zip(self.eps, other.eps, strict=True)))
        inv = 1.0 / other
        return Dual(self.val * inv, tuple(a * inv for a in self.eps))

    def __rtruediv__(self, other):
        inv = 1.0 / self.val
        q = other * inv
        return Dual(q, tuple(-q * inv * a for a in self.eps))

    def __neg__(self):
        return Dual(-self.val, tuple(-a for a in self.eps))

    def __pow__(self, p):
        if isinstance(p, int) and p >= 0:
            if p == 0:
                return Dual(1.0, tuple(0.0 * a for a in self.eps))
            out = self
            for _ in range(p - 1):
                out = out * self
            return out
        v = self.val ** p
        c = p * self.val ** (p - 1.0)
        return Dual(v, tuple(c * a for a in self.eps))

    # -- elementary functions (numpy dispatches to these on object arrays) --

    def sin(self):
        c = cos_(self.val)
        return Dual(sin_(self.val), tuple(c * a for a in self.eps))

    def cos(self):
        s = -sin_(self.val)
        return Dual(cos_(self.val), tuple(s * a for a in self.eps))

    def tan(self):
        t = tan_(self.val)
        c = 1.0 + t * t
        return Dual(t, tuple(c * a for a in self.eps))

    def exp(self):
        e = exp_(self.val)
        return Dual(e, tuple(e * a for a in self.eps))

    def log(self):
        inv = 1.0 / self.val
        return Dual(log_(self.val), tuple(inv * a for a in self.eps))

    def sqrt(self):
        r = sqrt_(self.val)
        c = 0.5 / r
        return Dual(r, tuple(c * a for a in self.eps))

    # -- ordering compares real parts ---------------------------------------

    def __lt__(self, other):
        return real_part(self) < real_part(other)

    def __le__(self, other):
        return real_part(self) <= real_part(other)

    def __gt__(self, other):
        return real_part(self) > real_part(other)

    def __ge__(self, other):
        return real_part(self) >= real_part(other)

    def __repr__(self):
        return f"Dual({self.val!r}, {self.eps!r})"


def real_part(x) -> float:
    """Strip all derivative information, returning the underlying float."""
    while isinstance(x, Dual):
        x = x.val
    return float(x)


# Generic elementary functions: fast float path, Dual dispatch otherwise.

def sin_(x):
    return x.sin() if isinstance(x, Dual) else math.sin(x)


def cos_(x):
    return x.cos() if isinstance(x, Dual) else math.cos(x)


def tan_(x):
    return x.tan() if isinstance(x, Dual) else math.tan(x)


def exp_(x):
    return x.exp() if isinstance(x, Dual) else math.exp(x)


def log_(x):
    return x.log() if isinstance(x, Dual) else math.log(x)


def sqrt_(x):
    return x.sqrt() if isinstance(x, Dual) else math.sqrt(x)


# ---------------------------------------------------------------------------
# Seeding helpers
# ---------------------------------------------------------------------------

_UNIT_CACHE: dict[int, tuple[tuple[float, ...], ...]] = {}
_ONE_SEED = (1.0,)


def _units(n: int) -> tuple[tuple[float, ...], ...]:
    rows = _UNIT_CACHE.get(n)
    if rows is None:
        rows = tuple(tuple(1.0 if j == i else 0.0 for j in range(n))
                     for i in range(n))
        _UNIT_CACHE[n] = rows
    return rows


def seed_all(xs: Sequence) -> list[Dual]:
    """Lift every entry of ``xs`` to a Dual seeded with its own unit direction."""
    units = _units(len(xs))
    return [Dual(x, units[i]) for i, x in enumerate(xs)]


def seed_direction(xs: Sequence, v: Sequence) -> list[Dual]:
    """Lift ``xs`` with a single shared direction ``v`` (width-1 block)."""
    return [Dual(x, (vi,)) for x, vi in zip(xs, v)]


def seed_block(xs: Sequence, lo: int, hi: int) -> list:
    """Seed coordinates lo..hi with unit directions, lifting the rest as needed.

    Unseeded entries that already carry outer derivatives are lifted to the
    new level with a zero block so widths never mix; plain floats are
    level-agnostic constants and pass through untouched.
    """
    n = hi - lo
    units = _units(n)
    zero = (0.0,) * n
    out = []
    for i, x in enumerate(xs):
        if lo <= i < hi:
            out.append(Dual(x, units[i - lo]))
        elif isinstance(x, Dual):
            out.append(Dual(x, zero))
        else:
            out.append(x)
    return out


def grad_components(f: Callable, xs: Sequence) -> list:
    """Gradient of a scalar function in one forward pass; entries may be Dual."""
    y = f(seed_all(xs))
    if isinstance(y, Dual):
        return list(y.eps)
    return [0.0] * len(xs)


def grad(f: Callable, x: Sequence) -> np.ndarray:
    """Exact forward-mode gradient of a scalar function of a real vector."""
    return np.array([real_part(c) if isinstance(c, Dual) else float(c)
                     for c in grad_components(f, [float(v) for v in x])])


def grad_fd(f: Callable, x: Sequence, eta: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient, the independent cross-check for grad."""
    x = [float(v) for v in x]
    out = np.empty(len(x))
    for i in range(len(x)):
        xp = list(x)
        xm = list(x)
        xp[i] += eta
        xm[i] -= eta
        out[i] = (f(xp) - f(xm)) / (2.0 * eta)
    return out


def directional_derivative(f: Callable, xs: Sequence, v: Sequence):
    """d/dt f(xs + t v) at t = 0; works on float or Dual base points."""
    y = f(seed_direction(xs, v))
    return y.eps[0] if isinstance(y, Dual) else 0.0


def derivative(f: Callable, t):
    """d/ds f(s) at s = t for a scalar function of one scalar."""
    y = f(Dual(t, (1.0,)))
    return y.eps[0] if isinstance(y, Dual) else 0.0


def value_and_jacobian(F: Callable, x: Sequence) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate a vector map and its Jacobian in a single seeded pass."""
    n = len(x)
    ys = F(seed_all([float(v) for v in x]))
    vals = np.empty(len(ys))
    jac = np.zeros((len(ys), n))
    for i, y in enumerate(ys):
        if isinstance(y, Dual):
            vals[i] = real_part(y)
            jac[i, :] = [real_part(e) for e in y.eps]
        else:
            vals[i] = float(y)
    return vals, jac


def jacobian(F: Callable, x: Sequence) -> np.ndarray:
    return value_and_jacobian(F, x)[1]


def hessian(f: Callable, x: Sequence) -> np.ndarray:
    """Exact Hessian of a scalar function via nested forward passes."""
    comps = grad_components(f, seed_all([float(v) for v in x]))
    n = len(x)
    out = np.zeros((n, n))
    for i, c in enumerate(comps):
        if isinstance(c, Dual):
            out[i, :] = [real_part(e) for e in c.eps]
    return out


# ---------------------------------------------------------------------------
# Damped Newton
# ---------------------------------------------------------------------------

_MIN_STEP = 2.0 ** -30


@dataclass
class NewtonResult:
    x: np.ndarray
    iterations: int
    residual: float
    fvals: tuple = ()        # F at the returned x, from the accepting evaluation


def _inf_norm(vals) -> float:
    r = 0.0
    for v in vals:
        a = abs(v)
        if a > r:
            r = a
    return r


def newton_solve_detailed(F: Callable, x0: Sequence, tol: float = 1e-12,
                          max_iter: int = 50) -> NewtonResult:
    """Damped Newton with backtracking on the residual norm.

    The Jacobian comes from one forward-mode pass per iteration; line-search
    trials re-evaluate F on plain floats.  Backtracking halves the step and
    accepts on any residual decrease (no Armijo constant), giving up below
    2^-30 of a full step.
    """
    x = [float(v) for v in x0]
    n = len(x)
    if n == 1:
        return _newton_scalar(F, x[0], tol, max_iter)
    r = math.inf
    for it in range(1, max_iter + 1):
        vals, jac = value_and_jacobian(F, x)
        r = _inf_norm(vals)
        if math.isnan(r):
            raise NoConvergence(it - 1, r)
        if r <= tol:
            return NewtonResult(np.array(x), it - 1, r, tuple(vals))
        if not np.all(np.isfinite(jac)):
            raise SingularJacobian("Jacobian has non-finite entries")
        try:
            dx = np.linalg.solve(jac, -vals)
        except np.linalg.LinAlgError as exc:
            raise SingularJacobian(str(exc)) from exc
        if not np.all(np.isfinite(dx)):
            raise SingularJacobian("Newton step is non-finite")
        t = 1.0
        while True:
            xn = [xi + t * di for xi, di in zip(x, dx)]
            fn_vals = F(xn)
            rn = _inf_norm(fn_vals)
            if rn < r and not math.isnan(rn):
                break
            t *= 0.5
            if t < _MIN_STEP:
                raise NoConvergence(it, r)
        x, r = xn, rn
        if r <= tol:
            return NewtonResult(np.array(x), it, r, tuple(fn_vals))
    raise NoConvergence(max_iter, r)


def _newton_scalar(F: Callable, x: float, tol: float, max_iter: int) -> NewtonResult:
    # numpy-free path for one-dimensional systems (the stepping hot loop)
    r = math.inf
    for it in range(1, max_iter + 1):
        y = F([Dual(x, _ONE_SEED)])[0]
        if isinstance(y, Dual):
            val = real_part(y)
            jac = real_part(y.eps[0])
        else:
            val, jac = float(y), 0.0
        r = abs(val)
        if math.isnan(r):
            raise NoConvergence(it - 1, r)
        if r <= tol:
            return NewtonResult(np.array([x]), it - 1, r, (val,))
        if jac == 0.0 or not math.isfinite(jac):
            raise SingularJacobian(f"scalar Jacobian is {jac!r}")
        dx = -val / jac
        t = 1.0
        while True:
            xn = x + t * dx
            fn_val = F([xn])[0]
            rn = abs(fn_val)
            if rn < r and not math.isnan(rn):
                break
            t *= 0.5
            if t < _MIN_STEP:
                raise NoConvergence(it, r)
        x, r = xn, rn
        if r <= tol:
            return NewtonResult(np.array([x]), it, r, (fn_val,))
    raise NoConvergence(max_iter, r)


def newton_solve(F: Callable, x0: Sequence, tol: float = 1e-12,
                 max_iter: int = 50) -> np.ndarray:
    """Solve F(x) = 0, returning x with ||F(x)||_inf <= tol."""
    return newton_solve_detailed(F, x0, tol=tol, max_iter=max_iter).x


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------

class QuadratureRule:
    """Fixed nodes/weights on [0, 1]; exact for polynomials up to ``degree``."""

    def __init__(self, nodes: Sequence[float], weights: Sequence[float], degree: int):
        self.nodes = tuple(float(s) for s in nodes)
        self.weights = tuple(float(w) for w in weights)
        self.degree = int(degree)
        if abs(sum(self.weights) - 1.0) > 1e-13:
            raise ValueError("quadrature weights must sum to 1 on [0, 1]")

    def __repr__(self):
        return f"QuadratureRule(n={len(self.nodes)}, degree={self.degree})"


def gauss_legendre(npoints: int) -> QuadratureRule:
    """Gauss-Legendre rule mapped to [0, 1]; exact to degree 2n - 1."""
    xs, ws = np.polynomial.legendre.leggauss(npoints)
    return QuadratureRule((xs + 1.0) / 2.0, ws / 2.0, 2 * npoints - 1)


def integrate_quadrature(f: Callable, rule: QuadratureRule):
    """Sum of w_i f(s_i); generic over float- or Dual-valued integrands."""
    total = 0.0
    for s, w in zip(rule.nodes, rule.weights):
        total = total + w * f(s)
    return total


# ---------------------------------------------------------------------------
# Matrix exponential (series fallback; SO(3) uses Rodrigues directly)
# ---------------------------------------------------------------------------

def expm_series(A: Sequence[Sequence], order: int = 18):
    """Scaled-and-squared truncated series exp(A) for small generic matrices.

    Entries may be floats or Duals; used as an independent oracle against the
    closed-form Rodrigues map.
    """
    n = len(A)
    norm = max(sum(abs(real_part(v)) for v in row) for row in A)
    squarings = 0
    while norm > 0.5:
        norm *= 0.5
        squarings += 1
    scale = 0.5 ** squarings
    As = [[v * scale for v in row] for row in A]
    out = [[1.0 if i == j else 0.0 for j in range(n)] for i in range(n)]
    term = [row[:] for row in out]
    for k in range(1, order + 1):
        term = _mat_mul(term, As)
        term = [[v / k for v in row] for row in term]
        out = [[a + b for a, b in zip(r1, r2)] for r1, r2 in zip(out, term)]
    for _ in range(squarings):
        out = _mat_mul(out, out)
    return out


def _mat_mul(A, B):
    n = len(A)
    m = len(B[0])
    k = len(B)
    return [[sum(A[i][l] * B[l][j] for l in range(k)) for j in range(m)]
            for i in range(n)]
