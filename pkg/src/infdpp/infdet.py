"""Infinite determinantal measures B(H, E0) through windowed projections.

H = L + V with L a closed subspace (a projection basis, or the range of a projection
kernel truncated on each window) and V finitely many sampled functions. For a window B
disjoint from E0 the normalized restriction of B(H, E0) to configurations inside
E0 u B is the projection DPP onto chi_{E0 u B} H. Masses are only ever compared as
ratios between windows.
"""

import logging
import math
import warnings
from collections.abc import Sequence
from itertools import product
from typing import Self

import numpy as np
from numpy.polynomial import legendre
from numpy.typing import ArrayLike
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from infdpp.exceptions import AngleDegeneracyWarning, CollapseError, InvalidParameterError
from infdpp.kernels import evaluate_diag, kernel_matrix
from infdpp.models import Configuration, Grading, Interval, KernelSpec, OPEnsembleSpec, SeededRng
from infdpp.operators import (
    DiscretizedOperator,
    ProjectionBasis,
    discretize,
    gap_probability,
    principal_angle,
    project_span,
    trace_norm_distance,
)
from infdpp.quadrature import Quadrature, build_piecewise_quadrature, build_quadrature
from infdpp.sampler import sample_projection_dpp, sample_statistic

logger = logging.getLogger(__name__)

EIGEN_TAU = 1e-6
ANGLE_FLOOR = 1e-6


def _mask(q: Quadrature, value: ArrayLike, name: str) -> np.ndarray:
    arr = np.array(value, copy=True)
    if arr.dtype != bool or arr.shape != (q.size,):
        raise InvalidParameterError(f"{name} must be a boolean mask over the {q.size} nodes")
    arr.setflags(write=False)
    return arr


def window_mask(q: Quadrature, lo: float, hi: float) -> np.ndarray:
    """Nodes in the half-open window (lo, hi]."""
    return (q.nodes > lo) & (q.nodes <= hi)


class InfDetMeasureSpec(BaseModel):
    """H = L + V together with the set E0 carrying infinitely many particles."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    quadrature: Quadrature
    L: ProjectionBasis | KernelSpec
    V: np.ndarray
    E0: np.ndarray

    @field_validator("V", mode="before")
    @classmethod
    def _columns(cls, value: ArrayLike) -> np.ndarray:
        arr = np.array(value, dtype=float, copy=True)
        if arr.ndim == 1:
            arr = arr[:, None]
        arr.setflags(write=False)
        return arr

    @model_validator(mode="after")
    def _check(self) -> Self:
        q = self.quadrature
        _mask(q, self.E0, "E0")
        if self.V.shape[0] != q.size:
            raise InvalidParameterError(f"V must be sampled at the {q.size} nodes")
        if not np.all(np.isfinite(self.V)):
            raise InvalidParameterError("V must be finite at every node")
        if isinstance(self.L, ProjectionBasis) and self.L.quadrature.size != q.size:
            raise InvalidParameterError("L lives on a different quadrature")
        return self

    @property
    def n_v(self) -> int:
        return int(self.V.shape[1])


class WindowedMeasure(BaseModel):
    """The projection onto chi_{E0 u B} H and its diagnostics."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    spec: InfDetMeasureSpec
    window: np.ndarray
    projection: ProjectionBasis
    l_rank: int
    angle: float
    discarded_trace: float = 0.0

    @property
    def support(self) -> np.ndarray:
        return self.spec.E0 | self.window

    @property
    def rank(self) -> int:
        return self.projection.rank


class NormReport(BaseModel):
    """Reweighting hypotheses: the floor of g on E0 u B and tr sqrt(1-g) Q sqrt(1-g)."""

    model_config = ConfigDict(frozen=True)

    epsilon0: float
    trace_hypothesis: float
    rank: int


class ConvergenceReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    distances: tuple[float, ...]
    angles: tuple[float, ...]
    ranks: tuple[int, ...]

    @property
    def angle_bound(self) -> float:
        return min(self.angles) if self.angles else math.pi / 2


class ReweightedIntensity(BaseModel):
    """Importance-weighted mean count in a mask against the reweighted projection's trace."""

    model_config = ConfigDict(frozen=True)

    estimate: float
    std_error: float
    predicted: float


def _l_block(spec: InfDetMeasureSpec, idx: np.ndarray) -> np.ndarray:
    """Nystrom block of the projection Q onto L on the nodes ``idx``."""
    if isinstance(spec.L, ProjectionBasis):
        rows = spec.L.vectors[idx]
        return rows @ rows.T
    sw = spec.quadrature.sqrt_weights[idx]
    return sw[:, None] * kernel_matrix(spec.L, spec.quadrature.nodes[idx]) * sw[None, :]


def _l_diagonal(spec: InfDetMeasureSpec) -> np.ndarray:
    """Nystrom diagonal of Q at every node."""
    if isinstance(spec.L, ProjectionBasis):
        return spec.L.diagonal()
    q = spec.quadrature
    return q.weights * np.asarray(evaluate_diag(spec.L, q.nodes), dtype=float)


def _windowed_l(
    spec: InfDetMeasureSpec, support: np.ndarray, eigen_tau: float
) -> tuple[ProjectionBasis, float]:
    q = spec.quadrature
    if isinstance(spec.L, ProjectionBasis):
        if spec.L.rank == 0:
            return ProjectionBasis(quadrature=q, vectors=np.zeros((q.size, 0))), 0.0
        basis = project_span(q, spec.L.values() * support[:, None])
        if basis.rank < spec.L.rank:
            raise CollapseError(spec.L.rank, basis.rank, "L loses rank on the window")
        return basis, 0.0
    # chi K chi for a projection kernel K has spectrum in [0, 1]; its range is chi L
    idx = np.flatnonzero(support)
    eig, vecs = np.linalg.eigh(_l_block(spec, idx))
    keep = eig > eigen_tau
    discarded = float(np.sum(np.clip(eig[~keep], 0.0, None)))
    vectors = np.zeros((q.size, int(keep.sum())))
    vectors[idx] = vecs[:, keep]
    logger.debug("windowed L: kept %d eigenvalues, discarded trace %.3e", keep.sum(), discarded)
    return ProjectionBasis(quadrature=q, vectors=vectors), discarded


def window_projection(
    spec: InfDetMeasureSpec,
    B: ArrayLike,
    *,
    eigen_tau: float = EIGEN_TAU,
    angle_floor: float = ANGLE_FLOOR,
) -> WindowedMeasure:
    """Orthonormal basis of chi_{E0 u B}(L + V).

    Raises CollapseError when the joint rank falls below rank(chi L) + dim V and warns
    with AngleDegeneracyWarning when the angle between chi L and chi V is below
    ``angle_floor``.
    """
    q = spec.quadrature
    window = _mask(q, B, "window")
    if np.any(window & spec.E0):
        raise InvalidParameterError("window must be disjoint from E0")
    support = spec.E0 | window
    l_basis, discarded = _windowed_l(spec, support, eigen_tau)

    angle = math.pi / 2
    if spec.n_v == 0:
        projection = l_basis
    else:
        v_cols = spec.V * support[:, None]
        norms = np.sqrt(q.weights @ v_cols**2)
        if np.any(norms == 0):
            raise CollapseError(l_basis.rank + spec.n_v, l_basis.rank, "V vanishes on the window")
        v_cols = v_cols / norms
        projection = project_span(q, np.column_stack([l_basis.values(), v_cols]))
        expected = l_basis.rank + spec.n_v
        if projection.rank < expected:
            raise CollapseError(expected, projection.rank)
        if l_basis.rank:
            angle = principal_angle(l_basis, project_span(q, v_cols))
            if angle < angle_floor:
                warnings.warn(
                    f"angle between windowed L and V is {angle:.3e}",
                    AngleDegeneracyWarning,
                    stacklevel=2,
                )
    return WindowedMeasure(
        spec=spec,
        window=window,
        projection=projection,
        l_rank=l_basis.rank,
        angle=angle,
        discarded_trace=discarded,
    )


def windowed_compression(
    spec: InfDetMeasureSpec, B: ArrayLike, *, eigen_tau: float = EIGEN_TAU
) -> DiscretizedOperator:
    """chi Q chi on E0 u B for the unperturbed projection Q onto L.

    Eigenvalues at or below ``eigen_tau`` are dropped, as in the windowed L of
    ``window_projection``; the result differs from Q on E0 u B only by that truncation.
    """
    q = spec.quadrature
    window = _mask(q, B, "window")
    idx = np.flatnonzero(spec.E0 | window)
    eig, vecs = np.linalg.eigh(_l_block(spec, idx))
    keep = eig > eigen_tau
    block = (vecs[:, keep] * eig[keep]) @ vecs[:, keep].T
    matrix = np.zeros((q.size, q.size))
    matrix[np.ix_(idx, idx)] = 0.5 * (block + block.T)
    return DiscretizedOperator(quadrature=q, matrix=matrix)


def relative_mass(
    spec: InfDetMeasureSpec, B1: ArrayLike, B2: ArrayLike, **options: float
) -> float:
    """B(Conf(E; E0 u B1)) / B(Conf(E; E0 u B2)) for B1 inside B2."""
    q = spec.quadrature
    inner, outer = _mask(q, B1, "B1"), _mask(q, B2, "B2")
    if np.any(inner & ~outer):
        raise InvalidParameterError("relative_mass needs B1 contained in B2")
    if np.array_equal(inner, outer):
        return 1.0
    measure = window_projection(spec, outer, **options)
    return gap_probability(measure.projection, spec.E0 | inner)


def op_ensemble_quadrature(
    spec: OPEnsembleSpec,
    cuts: Sequence[float] = (),
    *,
    hi: float = 1.0 - 1e-8,
    panels_per_segment: int = 4,
    nodes_per_panel: int = 24,
) -> Quadrature:
    """Piecewise rule on [a, hi] with edges at b1 and every cut; graded toward u = 1."""
    edges = sorted({spec.domain.lo, spec.b1, *(c for c in cuts if spec.b1 < c < hi), hi})
    gradings = [Grading.UNIFORM] + [Grading.GEOMETRIC_TOWARD_HI] * (len(edges) - 2)
    return build_piecewise_quadrature(edges, panels_per_segment, nodes_per_panel, gradings)


def op_ensemble_as_infdet(spec: OPEnsembleSpec, q: Quadrature) -> InfDetMeasureSpec:
    """L + V presentation of the infinite ensemble with weight (1-u)^s.

    L spans (1-u)^{(s+2n_s)/2} p_k(u) for k < N - n_s and V holds (1-u)^{(s+2k)/2} for
    k < min(N, n_s), with n_s = 0 when the weight is integrable. For N <= n_s the whole
    of H is V and L = {0}.
    """
    from infdpp.pickrell import n_s_of

    n_s = n_s_of(spec.s) if spec.s <= -1 else 0
    u = q.nodes
    if np.any(u >= 1.0):
        raise InvalidParameterError("quadrature for the ensemble must stay below u = 1")
    gap = 1.0 - u
    l_dim, v_dim = max(spec.N - n_s, 0), min(spec.N, n_s)
    if l_dim:
        # Legendre columns span the same space as monomials with far better conditioning
        poly = legendre.legvander(u, l_dim - 1)
        L = project_span(q, poly * gap[:, None] ** ((spec.s + 2 * n_s) / 2))
    else:
        L = ProjectionBasis(quadrature=q, vectors=np.zeros((q.size, 0)))
    V = [gap ** ((spec.s + 2 * k) / 2) for k in range(v_dim)]
    return InfDetMeasureSpec(
        quadrature=q,
        L=L,
        V=np.column_stack(V) if V else np.zeros((q.size, 0)),
        E0=q.mask(spec.domain.lo, spec.b1),
    )


def reweight(
    spec: InfDetMeasureSpec,
    g: ArrayLike,
    B: ArrayLike,
    *,
    epsilon0: float = 1e-12,
    **options: float,
) -> tuple[ProjectionBasis, NormReport]:
    """Projection onto sqrt(g) chi_{E0 u B} H and the discretized reweighting hypotheses.

    The trace hypothesis is sum (1 - g) Q_ii over every node, with Q the projection onto
    L alone; V does not enter it.
    """
    measure = window_projection(spec, B, **options)
    gv = np.asarray(g, dtype=float)
    if gv.shape != (spec.quadrature.size,):
        raise InvalidParameterError("g must be sampled at every node")
    support = measure.support
    floor = float(gv[support].min()) if support.any() else 1.0
    if floor < epsilon0:
        raise InvalidParameterError(f"g drops to {floor:.3e} < eps0={epsilon0:.3e} on E0 u B")
    if np.any(gv > 1.0 + 1e-12):
        raise InvalidParameterError("g must take values in (0, 1]")
    trace = float(np.sum((1.0 - gv) * _l_diagonal(spec)))
    H = measure.projection
    if H.rank == 0:
        return H, NormReport(epsilon0=floor, trace_hypothesis=trace, rank=0)
    scaled = project_span(spec.quadrature, np.sqrt(gv)[:, None] * H.values())
    if scaled.rank < H.rank:
        raise CollapseError(H.rank, scaled.rank, "sqrt(g) H lost dimension")
    return scaled, NormReport(epsilon0=floor, trace_hypothesis=trace, rank=scaled.rank)


def perturbation_convergence(
    spec: InfDetMeasureSpec,
    windows: Sequence[ArrayLike],
    region: ArrayLike,
    *,
    reference: ProjectionBasis | DiscretizedOperator | None = None,
    **options: float,
) -> ConvergenceReport:
    """Trace-norm distance on ``region`` between each windowed projection and the unperturbed one.

    The unperturbed operator is L itself (or its discretized kernel) unless ``reference``
    is given.
    """
    q = spec.quadrature
    masks = [_mask(q, w, "window") for w in windows]
    for small, large in zip(masks, masks[1:], strict=False):
        if np.any(small & ~large):
            raise InvalidParameterError("windows must be nested increasing")
    region_mask = _mask(q, region, "region")
    if reference is None:
        reference = spec.L if isinstance(spec.L, ProjectionBasis) else discretize(spec.L, q)
    distances, angles, ranks = [], [], []
    for window in masks:
        measure = window_projection(spec, window, **options)
        distances.append(trace_norm_distance(measure.projection, reference, region_mask))
        angles.append(measure.angle)
        ranks.append(measure.rank)
    return ConvergenceReport(distances=tuple(distances), angles=tuple(angles), ranks=tuple(ranks))


def sample_infdet(measure: WindowedMeasure, rng: SeededRng) -> Configuration:
    """A configuration from the normalized restriction to E0 u B."""
    return sample_projection_dpp(measure.projection, rng)


def mc_reweighted_intensity(
    measure: WindowedMeasure,
    g: ArrayLike,
    mask: ArrayLike,
    draws: int,
    rng: SeededRng,
    *,
    workers: int = 1,
) -> ReweightedIntensity:
    """E[Psi_g #M] / E[Psi_g] under the windowed measure against the trace on M of the
    projection onto sqrt(g) H."""
    q = measure.spec.quadrature
    gv = np.asarray(g, dtype=float)
    mk = _mask(q, mask, "mask")
    if draws < 2:
        raise InvalidParameterError("need at least two draws")

    def statistic(idx: np.ndarray) -> np.ndarray:
        weight = float(np.prod(gv[idx]))
        return np.array([weight * np.count_nonzero(mk[idx]), weight])

    samples = sample_statistic(measure.projection, statistic, draws, rng, workers)
    num, den = samples[:, 0], samples[:, 1]
    ratio = float(num.mean() / den.mean())
    residual = num - ratio * den
    error = float(np.std(residual, ddof=1) / (np.sqrt(draws) * den.mean()))
    scaled = project_span(q, np.sqrt(gv)[:, None] * measure.projection.values())
    predicted = float(np.sum(scaled.diagonal()[mk]))
    return ReweightedIntensity(estimate=ratio, std_error=error, predicted=predicted)


def _weight_values(spec: OPEnsembleSpec, u: np.ndarray) -> np.ndarray:
    return (1.0 - u) ** spec.s


def hankel_log_mass_ratio(
    spec: OPEnsembleSpec, b1: float, b2: float, *, panels: int = 12, nodes_per_panel: int = 32
) -> float:
    """log det M(b1) - log det M(b2) with M(b)_jk = int_a^b p_j p_k (1-u)^s du.

    Any fixed polynomial basis gives the same difference; Legendre keeps M well conditioned.
    """
    values = []
    for b in (b1, b2):
        q = build_quadrature(
            Interval(lo=spec.domain.lo, hi=b), panels, nodes_per_panel, Grading.GEOMETRIC_TOWARD_HI
        )
        vander = legendre.legvander(q.nodes, spec.N - 1)
        moments = (vander.T * (q.weights * _weight_values(spec, q.nodes))) @ vander
        sign, logdet = np.linalg.slogdet(moments)
        if sign <= 0:
            raise InvalidParameterError(f"moment matrix on [{spec.domain.lo}, {b}] is not positive")
        values.append(logdet)
    return float(values[0] - values[1])


def andreief_log_mass(
    spec: OPEnsembleSpec, c: float, *, panels: int = 4, nodes_per_panel: int = 10
) -> float:
    """log of the N-fold integral over [a, c]^N of prod_{i<j}(u_i-u_j)^2 prod (1-u_i)^s.

    Tensor-product quadrature; feasible for N <= 4.
    """
    if spec.N > 4:
        raise InvalidParameterError("direct tensor quadrature is limited to N <= 4")
    q = build_quadrature(
        Interval(lo=spec.domain.lo, hi=c), panels, nodes_per_panel, Grading.GEOMETRIC_TOWARD_HI
    )
    nodes, w = q.nodes, q.weights * _weight_values(spec, q.nodes)
    grids = np.meshgrid(*([nodes] * spec.N), indexing="ij")
    weights = np.ones_like(grids[0])
    for axis in range(spec.N):
        shape = [1] * spec.N
        shape[axis] = nodes.size
        weights = weights * w.reshape(shape)
    vandermonde = np.ones_like(grids[0])
    for i, j in product(range(spec.N), repeat=2):
        if i < j:
            vandermonde = vandermonde * (grids[i] - grids[j]) ** 2
    return float(np.log(np.sum(weights * vandermonde)))
