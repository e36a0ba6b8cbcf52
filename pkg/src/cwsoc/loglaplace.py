"""Log-Laplace transform of (Z, Z^2) and its derivatives.

With ``f_j(u, v) = E[Z^j e^{uZ + vZ^2}] / E[e^{uZ + vZ^2}]`` the gradient is
``(f_1, f_2)`` and the Hessian is the covariance of ``(Z, Z^2)`` under the
tilted law.
"""

from dataclasses import dataclass

import numpy as np

JMAX = 6


class DomainError(ValueError):
    """Dual point outside the domain ``v < v0``."""


@dataclass(frozen=True)
class DualPoint:
    u: float
    v: float
    lambda_val: float
    grad: np.ndarray
    hessian: np.ndarray
    moments: np.ndarray
    converged: bool = True


def _check_domain(m, v):
    if not v < m.v0:
        raise DomainError("v = %r is not below v0 = %r" % (v, m.v0))


def moment_functions(m, u, v, jmax=JMAX):
    """``(Lambda(u, v), [f_0, ..., f_jmax], converged)``."""
    _check_domain(m, v)
    return m.tilted(float(u), float(v), jmax)


def moment_function(m, j, u, v):
    if j < 0 or int(j) != j:
        raise ValueError("j must be a nonnegative integer")
    return float(moment_functions(m, u, v, max(int(j), 2))[1][int(j)])


def hessian_from_moments(f):
    h12 = f[3] - f[1] * f[2]
    return np.array([[f[2] - f[1] ** 2, h12], [h12, f[4] - f[2] ** 2]])


def log_laplace(m, u, v):
    """Evaluate Lambda, its gradient and Hessian at ``(u, v)``."""
    lam, f, ok = moment_functions(m, u, v)
    return DualPoint(
        u=float(u), v=float(v), lambda_val=float(lam),
        grad=np.array([f[1], f[2]]), hessian=hessian_from_moments(f),
        moments=f, converged=ok,
    )


def gaussian_log_laplace(variance, u, v):
    """Closed form for the centered Gaussian, valid for ``v < 1/(2 variance)``."""
    d = 1.0 - 2.0 * v * variance
    return u * u * variance / (2.0 * d) - 0.5 * np.log(d)


def bernoulli_log_laplace(c, u, v):
    """Closed form for ``(delta_{-c} + delta_c)/2``."""
    x = np.abs(u * c)
    return v * c * c + x + np.log1p(np.exp(-2 * x)) - np.log(2.0)
