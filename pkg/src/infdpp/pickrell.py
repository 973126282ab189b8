"""Pickrell measures: constants, radial parts, the Bessel scaling limit and B^(s).

For s < -1 (s != -1-2k) the Bessel point process J_s is replaced by the infinite
determinantal measure B^(s) = B(H^(s), (0, R)) with H^(s) = L^(s+2n_s) + V^(s),
L^(s+2n_s) the range of the Bessel kernel of order s+2n_s and
V^(s) = span(x^{-s/2-1}, ..., x^{-s/2-n_s}).
"""

import logging
import math
import warnings
from collections.abc import Mapping, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy import stats

from infdpp.exceptions import AngleDegeneracyWarning, DomainError, UndefinedPerturbationOrder
from infdpp.infdet import (
    InfDetMeasureSpec,
    perturbation_convergence,
    window_mask,
    window_projection,
    windowed_compression,
)
from infdpp.kernels import cd_kernel_functions, evaluate, kernel_matrix
from infdpp.models import (
    AsymptoticPoint,
    BesselPerturbationSpec,
    Configuration,
    Grading,
    Interval,
    KernelSpec,
    PickrellParams,
    SeededRng,
)
from infdpp.operators import ProjectionBasis, discretize, trace_norm_distance
from infdpp.quadrature import Quadrature, build_piecewise_quadrature
from infdpp.sampler import sample_configurations
from infdpp.specfun import log_gamma

logger = logging.getLogger(__name__)

BESSEL_LO = 1e-3
DEFAULT_RADII = (10.0, 20.0, 40.0, 80.0)


def n_s_of(s: float) -> int:
    """The integer n_s with s/2 + n_s in (-1/2, 1/2), for s < -1."""
    n = math.floor(-s / 2 + 0.5)
    if abs(s / 2 + n) >= 0.5:
        raise UndefinedPerturbationOrder(s)
    if s >= -1:
        raise DomainError(f"n_s is defined for s < -1, got {s}")
    return n


def log_pushforward_constant(n: int, s: float) -> float:
    """log of pi^{2n-1} Gamma(n+s)^2 / (Gamma(2n+s) Gamma(2n-1+s))."""
    if n < 1 or n + s <= 0:
        raise DomainError(f"pushforward constant needs n >= 1 and n + s > 0, got n={n}, s={s}")
    return float(
        (2 * n - 1) * math.log(math.pi)
        + 2 * log_gamma(n + s)
        - log_gamma(2 * n + s)
        - log_gamma(2 * n - 1 + s)
    )


def pushforward_constant(n: int, s: float) -> float:
    """Mass factor of projecting mu_n^(s) to mu_{n-1}^(s) by cutting the last row and column."""
    return math.exp(log_pushforward_constant(n, s))


def infinite_projection_log_constant(n0: int, n: int, s: float) -> float:
    """log prod_{l=n0}^{n} of the inverse one-step constants.

    This is the normalization making the rescaled finite-n measures a consistent family.
    """
    if n < n0:
        raise DomainError(f"need n0 <= n, got n0={n0}, n={n}")
    return -sum(log_pushforward_constant(level, s) for level in range(n0, n + 1))


def radial_density(n: int, s: float, lambdas: Sequence[float]) -> float:
    """(1/n!) det K_n^(s)(lambda_i, lambda_j) at n eigenvalues of z*z."""
    params = PickrellParams(n=n, s=s)
    points = np.asarray(lambdas, dtype=float)
    if points.shape != (params.n,):
        raise DomainError(f"radial density needs exactly {n} eigenvalues")
    if np.any(points <= 0):
        raise DomainError("eigenvalues of z*z must be positive")
    matrix = kernel_matrix(KernelSpec.pickrell_radial(n, s), points)
    value = float(np.linalg.det(matrix)) / math.factorial(n)
    return max(value, 0.0)


def scaling_grid(lo: float = 0.5, hi: float = 4.0, points: int = 8) -> list[tuple[float, float]]:
    """All pairs from an evenly spaced grid of [lo, hi]."""
    axis = np.linspace(lo, hi, points)
    return [(float(x), float(y)) for x in axis for y in axis]


def scaling_limit_error(n: int, s: float, grid: Sequence[tuple[float, float]]) -> float:
    """max over the grid of |n^2 K_n^(s)(n^2 x, n^2 y) - K^(s)(x, y)|."""
    if s <= -1:
        raise DomainError(f"scaling limit is stated for s > -1, got {s}")
    pairs = np.asarray(grid, dtype=float)
    if pairs.ndim != 2 or pairs.shape[1] != 2:
        raise DomainError("grid must be a sequence of (x, y) pairs")
    x, y = pairs[:, 0], pairs[:, 1]
    scale = float(n) ** 2
    radial = scale * np.asarray(evaluate(KernelSpec.pickrell_radial(n, s), scale * x, scale * y))
    limit = np.asarray(evaluate(KernelSpec.modified_bessel_k(s), x, y))
    return float(np.max(np.abs(radial - limit)))


def bessel_quadrature(
    radii: Sequence[float],
    *,
    lo: float = BESSEL_LO,
    region: Interval | None = None,
    panels_per_segment: int = 6,
    nodes_per_panel: int = 16,
) -> Quadrature:
    """Piecewise rule on [lo, max(radii)] with edges at every radius and region end."""
    edges = {lo, 1.0, *radii}
    if region is not None:
        edges |= {region.lo, region.hi}
    points = sorted(e for e in edges if e >= lo)
    gradings = [Grading.GEOMETRIC_TOWARD_LO] + [Grading.UNIFORM] * (len(points) - 2)
    return build_piecewise_quadrature(points, panels_per_segment, nodes_per_panel, gradings)


def build_bessel_perturbation(
    s: float, q: Quadrature, radius: float
) -> tuple[BesselPerturbationSpec, InfDetMeasureSpec]:
    """B^(s) on ``q`` with E0 = (lo, radius]."""
    n_s = n_s_of(s)
    exponents = tuple(-s / 2 - k for k in range(1, n_s + 1))
    perturbation = BesselPerturbationSpec(
        s=s, n_s=n_s, v_exponents=exponents, target_s=s + 2 * n_s, radius=radius
    )
    x = q.nodes
    V = np.column_stack([x**p for p in exponents])
    measure = InfDetMeasureSpec(
        quadrature=q,
        L=KernelSpec.bessel_j(perturbation.target_s),
        V=V,
        E0=x <= radius,
    )
    return perturbation, measure


def default_radius(
    s: float,
    *,
    candidates: Sequence[float] = DEFAULT_RADII,
    threshold: float = 0.01,
    lo: float = BESSEL_LO,
) -> float:
    """Smallest candidate R whose angle between windowed L and V reaches ``threshold``."""
    for radius in candidates:
        q = bessel_quadrature([radius], lo=lo)
        _, measure = build_bessel_perturbation(s, q, radius)
        windowed = window_projection(measure, np.zeros(q.size, dtype=bool))
        logger.debug("default_radius: R=%g angle %.4f", radius, windowed.angle)
        if windowed.angle >= threshold:
            return float(radius)
    warnings.warn(
        f"no radius in {tuple(candidates)} reaches angle {threshold}",
        AngleDegeneracyWarning,
        stacklevel=2,
    )
    return float(candidates[-1])


class QRConvergence(BaseModel):
    """Distances on the region between Q_R and K^(s+2n_s), with the V-free control."""

    model_config = ConfigDict(frozen=True)

    s: float
    n_s: int
    radii: tuple[float, ...]
    distances: tuple[float, ...]
    control: tuple[float, ...]
    angles: tuple[float, ...]


def qr_convergence(
    s: float,
    radii: Sequence[float],
    region: Interval,
    *,
    lo: float = BESSEL_LO,
    panels_per_segment: int = 6,
    nodes_per_panel: int = 16,
) -> QRConvergence:
    """Trace-norm distance on ``region`` between the windowed H^(s) projection and
    K^(s+2n_s), for each radius."""
    radii = [float(r) for r in radii]
    if any(b <= a for a, b in zip(radii, radii[1:], strict=False)):
        raise DomainError("radii must be strictly increasing")
    if region.hi > radii[0] or region.lo < lo:
        raise DomainError(f"region {region} must lie inside (lo, R] for every radius")
    q = bessel_quadrature(
        radii,
        lo=lo,
        region=region,
        panels_per_segment=panels_per_segment,
        nodes_per_panel=nodes_per_panel,
    )
    perturbation, measure = build_bessel_perturbation(s, q, radii[0])
    windows = [window_mask(q, radii[0], r) for r in radii]
    region_mask = q.mask(region.lo, region.hi)
    reference = discretize(KernelSpec.bessel_j(perturbation.target_s), q)
    perturbed = perturbation_convergence(measure, windows, region_mask, reference=reference)
    # V removed: the compression of K^(s+2n_s) itself, up to the eigenvalue cut
    control = tuple(
        trace_norm_distance(windowed_compression(measure, w), reference, region_mask)
        for w in windows
    )
    return QRConvergence(
        s=s,
        n_s=perturbation.n_s,
        radii=tuple(radii),
        distances=perturbed.distances,
        control=control,
        angles=perturbed.angles,
    )


# --- finite-n radial Monte Carlo ---------------------------------------------------


def radial_quadrature(*, panels_per_segment: int = 24, nodes_per_panel: int = 16) -> Quadrature:
    """u-grid on [-1, 1] graded toward u = 1, where the large eigenvalues live."""
    return build_piecewise_quadrature(
        [-1.0, 0.5, 1.0],
        panels_per_segment,
        nodes_per_panel,
        [Grading.UNIFORM, Grading.GEOMETRIC_TOWARD_HI],
    )


def radial_kernel_basis(n: int, s: float, q: Quadrature | None = None) -> ProjectionBasis:
    """Rank-n Christoffel-Darboux projection for the weight (1-u)^s on the u-grid."""
    return cd_kernel_functions(n, s, Interval(lo=-1.0, hi=1.0), q or radial_quadrature())


def sample_radial(
    n: int, s: float, draws: int, rng: SeededRng, q: Quadrature | None = None
) -> list[np.ndarray]:
    """Eigenvalues lambda = (1+u)/(1-u) of z*z for ``draws`` samples of the radial part."""
    basis = radial_kernel_basis(n, s, q)
    configurations: list[Configuration] = sample_configurations(basis, draws, rng)
    out = []
    for conf in configurations:
        u = np.asarray(conf.points, dtype=float)
        out.append((1.0 + u) / (1.0 - u))
    return out


def conf_map(point: AsymptoticPoint) -> tuple[float, ...]:
    """The configuration of nonzero coordinates, multiplicities kept."""
    return tuple(x for x in point.x if x > 0)


def asymptotic_point(lambdas: np.ndarray, n: int, top: int | None = None) -> AsymptoticPoint:
    """gamma = sum lambda / n^2 and x = the scaled eigenvalues in decreasing order."""
    scaled = np.sort(np.asarray(lambdas, dtype=float) / float(n) ** 2)[::-1]
    if top is not None:
        scaled = scaled[:top]
    gamma = float(np.sum(lambdas)) / float(n) ** 2
    return AsymptoticPoint(gamma=gamma, x=tuple(float(v) for v in scaled))


class AsymptoticSummary(BaseModel):
    """Per-size statistics of scaled radial samples and the KS drift between sizes."""

    model_config = ConfigDict(frozen=True)

    sizes: tuple[int, ...]
    mean_gamma: tuple[float, ...]
    mean_top: tuple[tuple[float, ...], ...]
    ks_distances: tuple[float, ...]
    conf_images: tuple[tuple[float, ...], ...]

    def ks_nonincreasing(self, slack: float = 0.0) -> bool:
        """KS distances between consecutive sizes never grow by more than ``slack``."""
        d = self.ks_distances
        return all(b <= a + slack for a, b in zip(d, d[1:], strict=False))


def ks_slack(draws: int, level: float = 0.95) -> float:
    """Two-sample KS distance exceeded with probability 1 - ``level`` by equal samples."""
    return float(stats.kstwobign.ppf(level)) * math.sqrt(2.0 / draws)


def asymptotic_diagnostics(
    samples: Mapping[int, Sequence[np.ndarray]], *, top: int = 3
) -> AsymptoticSummary:
    """Scaled top eigenvalues per n and the KS distance of the leading one between
    consecutive sizes."""
    sizes = sorted(samples)
    mean_gamma, mean_top, leading, images = [], [], [], []
    for n in sizes:
        points = [asymptotic_point(lam, n, top) for lam in samples[n]]
        mean_gamma.append(float(np.mean([p.gamma for p in points])) if points else 0.0)
        padded = np.array([list(p.x) + [0.0] * (top - len(p.x)) for p in points]).reshape(-1, top)
        mean_top.append(tuple(float(v) for v in padded.mean(axis=0)) if points else ())
        leading.append(padded[:, 0] if points else np.array([]))
        images.append(conf_map(points[0]) if points else ())
    ks = []
    for a, b in zip(leading, leading[1:], strict=False):
        ks.append(float(stats.ks_2samp(a, b).statistic) if a.size and b.size else 0.0)
    return AsymptoticSummary(
        sizes=tuple(sizes),
        mean_gamma=tuple(mean_gamma),
        mean_top=tuple(mean_top),
        ks_distances=tuple(ks),
        conf_images=tuple(images),
    )
