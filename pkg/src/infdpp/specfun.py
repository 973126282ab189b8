"""Special functions: Bessel J of real order, Jacobi P_n^{(s,0)} and log-Gamma.

All functions accept scalars or numpy arrays and return the same shape.
"""

import numpy as np
from numpy.typing import ArrayLike
from scipy import special

from infdpp.exceptions import DomainError
from infdpp.models import BesselOrder, JacobiParams


def _as_finite(x: ArrayLike, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite")
    return arr


def _unwrap(arr: np.ndarray) -> np.ndarray | float:
    return float(arr) if arr.ndim == 0 else arr


def bessel_j(order: BesselOrder | float, x: ArrayLike) -> np.ndarray | float:
    """J_nu(x) for nu > -1 and x >= 0.

    Negative non-integer orders in (-1, 0) are allowed; at x = 0 the value is the exact
    limit (1 for nu = 0, 0 for nu > 0).
    """
    nu = order.nu if isinstance(order, BesselOrder) else BesselOrder(nu=order).nu
    arr = _as_finite(x, "x")
    if np.any(arr < 0):
        raise DomainError("bessel_j requires x >= 0")
    values = special.jv(nu, arr)
    if nu == 0:
        values = np.where(arr == 0, 1.0, values)
    elif nu > 0:
        values = np.where(arr == 0, 0.0, values)
    return _unwrap(np.asarray(values))


def jacobi_p(params: JacobiParams | tuple[int, float], u: ArrayLike) -> np.ndarray | float:
    """Jacobi polynomial P_n^{(s, 0)}(u) normalized so that P_n(1) = C(n+s, n)."""
    if not isinstance(params, JacobiParams):
        n, s = params
        params = JacobiParams(n=n, s=s)
    return jacobi_polynomial(params.n, params.s, u)


def jacobi_polynomial(n: int, s: float, u: ArrayLike) -> np.ndarray | float:
    """P_n^{(s, 0)}(u) for any real s; the weight need not be integrable on [-1, 1]."""
    if n < 0:
        raise DomainError(f"degree must be >= 0, got {n}")
    arr = _as_finite(u, "u")
    if np.any(np.abs(arr) > 1.0):
        raise DomainError("jacobi_p requires -1 <= u <= 1")
    return _unwrap(np.asarray(special.eval_jacobi(n, s, 0.0, arr)))


def jacobi_p_derivative(n: int, s: float, u: ArrayLike) -> np.ndarray | float:
    """d/du P_n^{(s,0)}(u) = (n+s+1)/2 * P_{n-1}^{(s+1,1)}(u)."""
    arr = _as_finite(u, "u")
    if n == 0:
        return _unwrap(np.zeros_like(arr))
    return _unwrap(np.asarray(0.5 * (n + s + 1) * special.eval_jacobi(n - 1, s + 1, 1.0, arr)))


def log_gamma(x: ArrayLike) -> np.ndarray | float:
    """log Gamma(x) for x > 0."""
    arr = _as_finite(x, "x")
    if np.any(arr <= 0):
        raise DomainError("log_gamma requires x > 0")
    return _unwrap(np.asarray(special.gammaln(arr)))


def log_binomial(a: float, k: int) -> float:
    """log C(a, k) = log Gamma(a+1) - log Gamma(k+1) - log Gamma(a-k+1)."""
    return float(log_gamma(a + 1) - log_gamma(k + 1) - log_gamma(a - k + 1))


def bessel_recurrence_residual(nu: float, x: ArrayLike) -> np.ndarray | float:
    """|J_{nu-1}(x) + J_{nu+1}(x) - (2 nu / x) J_nu(x)| for nu > 0 and x > 0."""
    arr = _as_finite(x, "x")
    if nu <= 0 or np.any(arr <= 0):
        raise DomainError("the three-term recurrence is checked for nu > 0 and x > 0")
    lhs = np.asarray(bessel_j(nu - 1, arr)) + np.asarray(bessel_j(nu + 1, arr))
    return _unwrap(np.abs(lhs - (2.0 * nu / arr) * np.asarray(bessel_j(nu, arr))))
