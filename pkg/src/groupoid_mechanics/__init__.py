"""Structure-preserving integrators from discrete Lagrangians on Lie groupoids."""

from .numerics import (
    Dual,
    NoConvergence,
    QuadratureRule,
    SingularJacobian,
    gauss_legendre,
    grad,
    grad_fd,
    integrate_quadrature,
    newton_solve,
)

__all__ = [
    "Dual",
    "NoConvergence",
    "QuadratureRule",
    "SingularJacobian",
    "gauss_legendre",
    "grad",
    "grad_fd",
    "integrate_quadrature",
    "newton_solve",
]
