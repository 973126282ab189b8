"""Parametric kernel families with pointwise and diagonal evaluation.

Families:

- ``bessel_j``: J_s(x, y) on (0, inf), the standard Bessel kernel in the variable x = r^2.
- ``modified_bessel_k``: K^(s), the image of J_s under x -> 4/x, Jacobian included.
- ``pickrell_radial``: K_n^(s) on (0, inf), the radial part of the finite-n Pickrell
  measure, built from Jacobi polynomials composed with u = (lambda - 1)/(lambda + 1).
- ``cd_jacobi``: the N-th Christoffel-Darboux kernel of the weight (1-u)^s restricted
  to a sub-interval, with the weight folded in so that it is a projection on L2(du).
"""

import logging
from functools import lru_cache
from typing import TYPE_CHECKING

import numpy as np
from numpy.typing import ArrayLike
from scipy import linalg, special

from infdpp.exceptions import DomainError, GramSingularError, InvalidParameterError
from infdpp.models import Grading, Interval, KernelFamily, KernelSpec
from infdpp.quadrature import Quadrature, build_quadrature
from infdpp.specfun import bessel_j, jacobi_p_derivative, jacobi_polynomial

if TYPE_CHECKING:
    from infdpp.operators import ProjectionBasis

logger = logging.getLogger(__name__)

DIAG_SWITCH = 1e-6
GRAM_COND_LIMIT = 1e12


def _check_domain(spec: KernelSpec, x: np.ndarray) -> None:
    if not np.all(np.isfinite(x)):
        raise DomainError("kernel arguments must be finite")
    if spec.family is KernelFamily.CD_JACOBI:
        if np.any(np.abs(x) > 1.0):
            raise DomainError(f"{spec.family} is defined on [-1, 1]")
    elif np.any(x <= 0):
        raise DomainError(f"{spec.family} is defined on (0, inf)")


def _unwrap(arr: np.ndarray) -> np.ndarray | float:
    return float(arr) if arr.ndim == 0 else arr


# --- Bessel J ------------------------------------------------------------------


def _bessel_off(s: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    a, b = np.sqrt(x), np.sqrt(y)
    num = a * bessel_j(s + 1, a) * bessel_j(s, b) - b * bessel_j(s + 1, b) * bessel_j(s, a)
    return num / (2.0 * (x - y))


def _bessel_diag(s: float, x: np.ndarray) -> np.ndarray:
    a = np.sqrt(x)
    js, js1 = bessel_j(s, a), bessel_j(s + 1, a)
    return 0.25 * (js**2 + js1**2 - (2.0 * s / a) * js * js1)


# --- K^(s) = image of J_s under x -> 4/x ----------------------------------------


def _modified_off(s: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    a, b = 2.0 / np.sqrt(x), 2.0 / np.sqrt(y)
    num = bessel_j(s, a) * bessel_j(s + 1, b) / np.sqrt(y) - bessel_j(s, b) * bessel_j(
        s + 1, a
    ) / np.sqrt(x)
    return num / (x - y)


def _modified_diag(s: float, x: np.ndarray) -> np.ndarray:
    return _bessel_diag(s, 4.0 / x) * 4.0 / x**2


# --- K_n^(s), radial Pickrell kernel ----------------------------------------------


def _cayley(lam: np.ndarray) -> np.ndarray:
    return np.clip((lam - 1.0) / (lam + 1.0), -1.0, 1.0)


def _pickrell_prefactor(n: int, s: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return n * (n + s) / ((2 * n + s) * (1.0 + x) ** (s / 2) * (1.0 + y) ** (s / 2))


def _pickrell_off(n: int, s: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    ux, uy = _cayley(x), _cayley(y)
    pn_x, pn_y = jacobi_polynomial(n, s, ux), jacobi_polynomial(n, s, uy)
    pm_x, pm_y = jacobi_polynomial(n - 1, s, ux), jacobi_polynomial(n - 1, s, uy)
    return _pickrell_prefactor(n, s, x, y) * (pn_x * pm_y - pm_x * pn_y) / (x - y)


def _pickrell_diag(n: int, s: float, x: np.ndarray) -> np.ndarray:
    u = _cayley(x)
    du = 2.0 / (1.0 + x) ** 2
    pn, pm = jacobi_polynomial(n, s, u), jacobi_polynomial(n - 1, s, u)
    dpn = jacobi_p_derivative(n, s, u) * du
    dpm = jacobi_p_derivative(n - 1, s, u) * du
    return _pickrell_prefactor(n, s, x, x) * (dpn * pm - pn * dpm)


# --- Christoffel-Darboux, projection form -----------------------------------------


def _cd_norms(N: int, s: float) -> np.ndarray:
    k = np.arange(N, dtype=float)
    h = 2.0 ** (s + 1) / (2 * k + s + 1)
    return np.where(h > 0, 1.0 / np.sqrt(np.abs(h)), 1.0)


def _cd_raw(N: int, s: float, sub: Interval, u: np.ndarray) -> np.ndarray:
    """Columns P_k(u) (1-u)^{s/2} / sqrt(h_k) for k < N, zero outside ``sub``."""
    u = np.asarray(u, dtype=float)
    inside = (u >= sub.lo) & (u <= sub.hi)
    safe = np.where(inside, u, sub.lo)
    with np.errstate(divide="ignore", invalid="ignore"):
        weight = np.where(inside & (safe < 1.0), (1.0 - safe) ** (s / 2), 0.0)
    cols = [jacobi_polynomial(k, s, safe) for k in range(N)]
    raw = np.stack(cols, axis=-1) * _cd_norms(N, s) * weight[..., None]
    return raw


def _cd_gram(N: int, s: float, sub: Interval) -> np.ndarray:
    if sub.hi >= 1.0:
        # Gauss-Jacobi absorbs (1-u)^s exactly; the integrand is then a polynomial
        t, w = special.roots_jacobi(N + 8, s, 0.0)
        half = 0.5 * (1.0 - sub.lo)
        u = sub.lo + half * (t + 1.0)
        vals = np.stack([jacobi_polynomial(k, s, u) for k in range(N)], axis=-1)
        vals = vals * _cd_norms(N, s)
        return half ** (s + 1) * (vals.T * w) @ vals
    q = build_quadrature(sub, 4, min(64, N + 16), Grading.GEOMETRIC_TOWARD_HI)
    vals = _cd_raw(N, s, sub, q.nodes)
    return (vals.T * q.weights) @ vals


@lru_cache(maxsize=64)
def _cd_inverse_gram(N: int, s: float, lo: float, hi: float) -> np.ndarray:
    gram = _cd_gram(N, s, Interval(lo=lo, hi=hi))
    cond = float(np.linalg.cond(gram))
    if not np.isfinite(cond) or cond >= GRAM_COND_LIMIT:
        raise GramSingularError(
            f"Christoffel-Darboux Gram matrix for N={N} on [{lo}, {hi}] is singular", cond
        )
    inv = np.linalg.inv(gram)
    inv = 0.5 * (inv + inv.T)
    inv.setflags(write=False)
    return inv


def _cd_values(spec: KernelSpec, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    assert spec.N is not None and spec.sub is not None
    inv = _cd_inverse_gram(spec.N, spec.s, spec.sub.lo, spec.sub.hi)
    vx = _cd_raw(spec.N, spec.s, spec.sub, x)
    vy = _cd_raw(spec.N, spec.s, spec.sub, y)
    return np.einsum("...i,ij,...j->...", vx, inv, vy)


def _off_diagonal(spec: KernelSpec, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    match spec.family:
        case KernelFamily.BESSEL_J:
            return _bessel_off(spec.s, x, y)
        case KernelFamily.MODIFIED_BESSEL_K:
            return _modified_off(spec.s, x, y)
        case KernelFamily.PICKRELL_RADIAL:
            assert spec.n is not None
            return _pickrell_off(spec.n, spec.s, x, y)
        case KernelFamily.CD_JACOBI:
            return _cd_values(spec, x, y)


def _diagonal(spec: KernelSpec, x: np.ndarray) -> np.ndarray:
    match spec.family:
        case KernelFamily.BESSEL_J:
            return _bessel_diag(spec.s, x)
        case KernelFamily.MODIFIED_BESSEL_K:
            return _modified_diag(spec.s, x)
        case KernelFamily.PICKRELL_RADIAL:
            assert spec.n is not None
            return _pickrell_diag(spec.n, spec.s, x)
        case KernelFamily.CD_JACOBI:
            return _cd_values(spec, x, x)


def evaluate(
    spec: KernelSpec, x: ArrayLike, y: ArrayLike, *, diag_switch: float = DIAG_SWITCH
) -> np.ndarray | float:
    """Kernel value K(x, y), vectorized over broadcast arguments.

    Each pair is evaluated with its arguments ordered (min, max), so the result is
    exactly symmetric. Pairs closer than ``diag_switch * max(1, |x|)`` use the
    diagonal formula at their midpoint.
    """
    x_arr, y_arr = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    _check_domain(spec, x_arr)
    _check_domain(spec, y_arr)
    lo, hi = np.minimum(x_arr, y_arr), np.maximum(x_arr, y_arr)
    if spec.family is KernelFamily.CD_JACOBI:
        return _unwrap(np.asarray(_off_diagonal(spec, lo, hi), dtype=float))

    near = (hi - lo) <= diag_switch * np.maximum(1.0, np.abs(lo))
    out = np.empty(lo.shape, dtype=float)
    if np.any(near):
        out[near] = _diagonal(spec, 0.5 * (lo[near] + hi[near]))
    far = ~near
    if np.any(far):
        out[far] = _off_diagonal(spec, lo[far], hi[far])
    return _unwrap(out)


def evaluate_diag(spec: KernelSpec, x: ArrayLike) -> np.ndarray | float:
    """lim_{y -> x} K(x, y), from the differentiated closed form."""
    arr = np.asarray(x, dtype=float)
    _check_domain(spec, arr)
    return _unwrap(np.asarray(_diagonal(spec, arr), dtype=float))


def kernel_matrix(spec: KernelSpec, nodes: ArrayLike) -> np.ndarray:
    """Symmetric matrix K(x_i, x_j); each unordered pair is evaluated once."""
    pts = np.asarray(nodes, dtype=float)
    if pts.ndim != 1:
        raise InvalidParameterError("nodes must be one-dimensional")
    _check_domain(spec, pts)
    size = pts.size
    if spec.family is KernelFamily.CD_JACOBI:
        assert spec.N is not None and spec.sub is not None
        inv = _cd_inverse_gram(spec.N, spec.s, spec.sub.lo, spec.sub.hi)
        raw = _cd_raw(spec.N, spec.s, spec.sub, pts)
        full = raw @ inv @ raw.T
        upper = np.triu(full)
        return upper + np.triu(full, 1).T
    rows, cols = np.triu_indices(size)
    values = np.asarray(evaluate(spec, pts[rows], pts[cols]), dtype=float)
    matrix = np.empty((size, size), dtype=float)
    matrix[rows, cols] = values
    matrix[cols, rows] = values
    return matrix


def cd_closed_form(N: int, s: float, x: ArrayLike, y: ArrayLike) -> np.ndarray | float:
    """Bilinear Christoffel-Darboux formula on the full interval [-1, 1], x != y.

    Used as an independent check of the projection form.
    """
    x_arr, y_arr = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    if np.any(x_arr == y_arr):
        raise DomainError("cd_closed_form needs x != y")
    const = N * (N + s) / ((2 * N + s) * 2.0**s)
    pn_x, pn_y = jacobi_polynomial(N, s, x_arr), jacobi_polynomial(N, s, y_arr)
    pm_x, pm_y = jacobi_polynomial(N - 1, s, x_arr), jacobi_polynomial(N - 1, s, y_arr)
    weight = (1.0 - x_arr) ** (s / 2) * (1.0 - y_arr) ** (s / 2)
    value = const * weight * (pn_x * pm_y - pm_x * pn_y) / (x_arr - y_arr)
    return _unwrap(np.asarray(value))


def cd_kernel_functions(N: int, s: float, sub: Interval, q: Quadrature) -> "ProjectionBasis":
    """N functions p_k(u)(1-u)^{s/2} on ``sub``, orthonormal in the quadrature inner product.

    Raises GramSingularError when the rule cannot resolve degree N on ``sub``.
    """
    from infdpp.operators import ProjectionBasis

    KernelSpec.cd_jacobi(N, s, sub)
    raw = _cd_raw(N, s, sub, q.nodes) * q.sqrt_weights[:, None]
    gram = raw.T @ raw
    cond = float(np.linalg.cond(gram))
    if not np.isfinite(cond) or cond >= GRAM_COND_LIMIT:
        raise GramSingularError(
            f"quadrature with {q.size} nodes cannot resolve degree {N} on {sub}", cond
        )
    chol = linalg.cholesky(gram, lower=True)
    vectors = linalg.solve_triangular(chol, raw.T, lower=True).T
    logger.debug("cd basis N=%d s=%g: Gram condition %.3e", N, s, cond)
    return ProjectionBasis(quadrature=q, vectors=vectors)


def kernel_recurrence_residual(
    s: float, x: ArrayLike, y: ArrayLike, steps: int = 1
) -> np.ndarray | float:
    """Relative residual of the Bessel kernel recurrence applied ``steps`` = k times:

        J_s(x, y) = J_{s+2k}(x, y) + sum_{j<k} c_j J_{s+2j+1}(sqrt x) J_{s+2j+1}(sqrt y)

    with c_j = (s+2j+1) / sqrt(xy).
    """
    if steps < 1:
        raise InvalidParameterError(f"steps must be >= 1, got {steps}")
    x_arr, y_arr = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    base = np.asarray(evaluate(KernelSpec.bessel_j(s), x_arr, y_arr))
    top = np.asarray(evaluate(KernelSpec.bessel_j(s + 2 * steps), x_arr, y_arr))
    a, b = np.sqrt(x_arr), np.sqrt(y_arr)
    rank_one = sum(
        (s + 2 * j + 1) / (a * b) * bessel_j(s + 2 * j + 1, a) * bessel_j(s + 2 * j + 1, b)
        for j in range(steps)
    )
    return _unwrap(np.abs(base - top - rank_one) / (1.0 + np.abs(base)))
