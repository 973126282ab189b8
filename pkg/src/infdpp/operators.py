"""Discretized integral operators on a quadrature.

A kernel K on a rule (x_i, w_i) is represented by the symmetric Nystrom matrix
A_ij = sqrt(w_i) K(x_i, x_j) sqrt(w_j). A projection of rank m is represented by a
``ProjectionBasis`` holding m columns U orthonormal in the Euclidean sense, so that
the projection itself is U U^T and the sampled functions are U / sqrt(w).
"""

import logging
from collections.abc import Sequence
from typing import Self

import numpy as np
from numpy.typing import ArrayLike
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy import linalg

from infdpp.exceptions import InvalidParameterError, NonContractionError, SingularTransformError
from infdpp.kernels import kernel_matrix
from infdpp.models import KernelSpec
from infdpp.quadrature import Quadrature

logger = logging.getLogger(__name__)

CONTRACTION_SLACK = 1e-6
RANK_RTOL = 1e-10
COND_LIMIT = 1e12


def _freeze(value: ArrayLike) -> np.ndarray:
    arr = np.array(value, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


class DiscretizedOperator(BaseModel):
    """Nystrom matrix of an integral operator on ``quadrature``."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    quadrature: Quadrature
    matrix: np.ndarray
    hermitian: bool = True

    @field_validator("matrix", mode="before")
    @classmethod
    def _read_only(cls, value: ArrayLike) -> np.ndarray:
        return _freeze(value)

    @model_validator(mode="after")
    def _check_shape(self) -> Self:
        n = self.quadrature.size
        if self.matrix.shape != (n, n):
            raise InvalidParameterError(
                f"operator matrix has shape {self.matrix.shape}, quadrature has {n} nodes"
            )
        if self.hermitian and n:
            residual = float(np.max(np.abs(self.matrix - self.matrix.T)))
            if residual > 1e-10 * max(1.0, float(np.max(np.abs(self.matrix)))):
                raise InvalidParameterError(f"hermitian operator has asymmetry {residual:.3e}")
        return self

    @classmethod
    def from_kernel_values(cls, q: Quadrature, values: ArrayLike) -> "DiscretizedOperator":
        """Wrap a matrix of kernel values K(x_i, x_j) sampled on the nodes of ``q``."""
        kmat = np.asarray(values, dtype=float)
        sw = q.sqrt_weights
        matrix = sw[:, None] * kmat * sw[None, :]
        hermitian = bool(np.allclose(kmat, kmat.T, rtol=0, atol=1e-12))
        if hermitian:
            matrix = 0.5 * (matrix + matrix.T)
        return cls(quadrature=q, matrix=matrix, hermitian=hermitian)

    @property
    def size(self) -> int:
        return self.quadrature.size

    def kernel_values(self) -> np.ndarray:
        """Undo the Nystrom weighting: K(x_i, x_j)."""
        sw = self.quadrature.sqrt_weights
        return self.matrix / sw[:, None] / sw[None, :]

    def trace(self) -> float:
        return float(np.trace(self.matrix))

    def eigenvalues(self) -> np.ndarray:
        if self.hermitian:
            return np.linalg.eigvalsh(self.matrix)
        return np.linalg.eigvals(self.matrix)


class ProjectionBasis(BaseModel):
    """m columns orthonormal in the quadrature inner product, stored Nystrom-weighted.

    ``dropped`` counts raw functions discarded as numerically dependent when the
    basis was built by ``project_span``.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    quadrature: Quadrature
    vectors: np.ndarray
    dropped: int = Field(default=0, ge=0)

    @field_validator("vectors", mode="before")
    @classmethod
    def _read_only(cls, value: ArrayLike) -> np.ndarray:
        arr = np.asarray(value, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
        return _freeze(arr)

    @model_validator(mode="after")
    def _check_orthonormal(self) -> Self:
        if self.vectors.ndim != 2 or self.vectors.shape[0] != self.quadrature.size:
            raise InvalidParameterError(
                f"basis has shape {self.vectors.shape}, quadrature has {self.quadrature.size} nodes"
            )
        if self.rank:
            error = float(np.max(np.abs(self.gram() - np.eye(self.rank))))
            if error > 1e-9:
                raise InvalidParameterError(
                    f"basis columns are not orthonormal (error {error:.3e})"
                )
        return self

    @property
    def rank(self) -> int:
        return int(self.vectors.shape[1])

    def gram(self) -> np.ndarray:
        return self.vectors.T @ self.vectors

    def values(self) -> np.ndarray:
        """The basis functions sampled at the nodes."""
        return self.vectors / self.quadrature.sqrt_weights[:, None]

    def diagonal(self) -> np.ndarray:
        """Diagonal of the projection matrix U U^T (one-point masses per node)."""
        return np.sum(self.vectors**2, axis=1)


class Partition(BaseModel):
    """Ordered disjoint cells of node indices covering a quadrature."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    size: int = Field(ge=0)
    cells: tuple[np.ndarray, ...]

    @field_validator("cells", mode="before")
    @classmethod
    def _as_index_arrays(cls, value: Sequence[ArrayLike]) -> tuple[np.ndarray, ...]:
        cells = []
        for cell in value:
            arr = np.array(cell, dtype=int, copy=True)
            arr.setflags(write=False)
            cells.append(arr)
        return tuple(cells)

    @model_validator(mode="after")
    def _check_cover(self) -> Self:
        joined = np.concatenate(self.cells) if self.cells else np.array([], dtype=int)
        if joined.size != self.size or not np.array_equal(np.sort(joined), np.arange(self.size)):
            raise InvalidParameterError("partition cells must be disjoint and cover every node")
        return self

    @classmethod
    def from_breakpoints(cls, q: Quadrature, breakpoints: Sequence[float]) -> "Partition":
        """Cells between consecutive breakpoints; nodes outside the outer ones form end cells."""
        edges = np.sort(np.asarray(breakpoints, dtype=float))
        labels = np.searchsorted(edges, q.nodes, side="right")
        cells = [np.flatnonzero(labels == k) for k in range(edges.size + 1)]
        return cls(size=q.size, cells=[c for c in cells if c.size])

    @classmethod
    def trivial(cls, q: Quadrature) -> "Partition":
        return cls(size=q.size, cells=[np.arange(q.size)])


def check_mask(q: Quadrature, mask: ArrayLike) -> np.ndarray:
    arr = np.asarray(mask)
    if arr.dtype != bool or arr.shape != (q.size,):
        raise InvalidParameterError(f"mask must be a boolean array of length {q.size}")
    return arr


def _check_same(a: Quadrature, b: Quadrature) -> None:
    if a is b:
        return
    if a.size != b.size or not np.array_equal(a.nodes, b.nodes):
        raise InvalidParameterError("operands live on different quadratures")


def _as_matrix(P: "ProjectionBasis | DiscretizedOperator") -> np.ndarray:
    if isinstance(P, ProjectionBasis):
        return P.vectors @ P.vectors.T
    return np.asarray(P.matrix)


def discretize(spec: KernelSpec, q: Quadrature) -> DiscretizedOperator:
    """Nystrom matrix of ``spec`` on ``q``; the diagonal comes from the diagonal formula."""
    values = kernel_matrix(spec, q.nodes)
    sw = q.sqrt_weights
    return DiscretizedOperator(quadrature=q, matrix=sw[:, None] * values * sw[None, :])


def projection_matrix(P: ProjectionBasis) -> DiscretizedOperator:
    return DiscretizedOperator(quadrature=P.quadrature, matrix=_as_matrix(P))


def compress(A: DiscretizedOperator, mask: ArrayLike) -> DiscretizedOperator:
    """chi_M A chi_M, kept at full size with zeros off the mask."""
    m = check_mask(A.quadrature, mask)
    keep = np.outer(m, m)
    return DiscretizedOperator(
        quadrature=A.quadrature, matrix=np.where(keep, A.matrix, 0.0), hermitian=A.hermitian
    )


def fredholm_det(A: DiscretizedOperator) -> float:
    """det(I + A) of the Nystrom matrix."""
    if A.size == 0:
        return 1.0
    sign, logdet = np.linalg.slogdet(np.eye(A.size) + A.matrix)
    return float(sign * np.exp(logdet))


def det_xi(A: DiscretizedOperator, xi: Partition) -> float:
    """det_2(I + A) * exp(sum over cells of tr(chi_E A chi_E)).

    det_2 is the Carleman determinant prod (1 + l) exp(-l) over the spectrum, so this
    path shares no factorization with ``fredholm_det``.
    """
    if xi.size != A.size:
        raise InvalidParameterError("partition does not match the operator's quadrature")
    if A.size == 0:
        return 1.0
    eig = A.eigenvalues()
    factors = (1.0 + eig) * np.exp(-eig)
    if np.iscomplexobj(factors):
        carleman = float(np.real(np.prod(factors)))
    else:
        sign = float(np.prod(np.sign(1.0 + eig)))
        carleman = sign * float(np.exp(np.sum(np.log(np.abs(1.0 + eig)) - eig)))
    cell_trace = sum(float(np.trace(A.matrix[np.ix_(c, c)])) for c in xi.cells)
    return carleman * float(np.exp(cell_trace))


def gap_probability(P: ProjectionBasis | DiscretizedOperator, mask: ArrayLike) -> float:
    """Probability that no particle falls outside ``mask``: det(I - chi_C P chi_C)."""
    m = check_mask(P.quadrature, mask)
    outside = ~m
    if isinstance(P, ProjectionBasis):
        block = P.vectors[outside]
        eig = np.linalg.eigvalsh(block.T @ block) if P.rank else np.array([])
    else:
        block = P.matrix[np.ix_(outside, outside)]
        eig = np.linalg.eigvalsh(0.5 * (block + block.T)) if block.size else np.array([])
    if eig.size and eig.max() > 1.0 + CONTRACTION_SLACK:
        raise NonContractionError(float(eig.max()))
    return float(np.prod(1.0 - eig))


def counting_generating_det(
    P: ProjectionBasis | DiscretizedOperator,
    masks: Sequence[ArrayLike],
    z: Sequence[float],
) -> float:
    """det(I + sum_j (z_j - 1) chi_{B_j} K chi_{union B}) for disjoint masks B_j."""
    q = P.quadrature
    if len(masks) != len(z):
        raise InvalidParameterError("need one z per mask")
    checked = [check_mask(q, mk) for mk in masks]
    union = np.zeros(q.size, dtype=bool)
    scale = np.zeros(q.size)
    for mk, zj in zip(checked, z, strict=True):
        if np.any(union & mk):
            raise InvalidParameterError("counting masks must be disjoint")
        union |= mk
        scale[mk] = zj - 1.0
    idx = np.flatnonzero(union)
    if idx.size == 0:
        return 1.0
    block = _as_matrix(P)[np.ix_(idx, idx)]
    return float(np.linalg.det(np.eye(idx.size) + scale[idx, None] * block))


def transform_bgk(
    K: DiscretizedOperator, g: ArrayLike, *, cond_limit: float = COND_LIMIT
) -> tuple[DiscretizedOperator, DiscretizedOperator, float]:
    """B = gK(1+(g-1)K)^{-1}, B~ = sqrt(g)K(1+(g-1)K)^{-1}sqrt(g) and E Psi_g.

    The normalization det(I + sqrt(g-1) K sqrt(g-1)) uses the signed factorization
    sign(g-1) sqrt|g-1| K sqrt|g-1|.
    """
    gv = np.asarray(g, dtype=float)
    if gv.shape != (K.size,):
        raise InvalidParameterError(f"g must be sampled at the {K.size} nodes")
    if not np.all(np.isfinite(gv)) or np.any(gv < 0):
        raise InvalidParameterError("g must be finite and nonnegative")
    A = np.asarray(K.matrix)
    eye = np.eye(K.size)
    M = eye + (gv - 1.0)[:, None] * A
    cond = float(np.linalg.cond(M)) if K.size else 1.0
    if not np.isfinite(cond) or cond >= cond_limit:
        raise SingularTransformError(cond)
    logger.debug("transform_bgk: condition of I + (g-1)K is %.3e", cond)

    GA = gv[:, None] * A
    B = linalg.solve(M.T, GA.T).T
    root = np.sqrt(gv)
    AMinv = linalg.solve(M.T, A.T).T
    Bt = root[:, None] * AMinv * root[None, :]
    if K.hermitian:
        Bt = 0.5 * (Bt + Bt.T)

    d = np.sqrt(np.abs(gv - 1.0))
    signed = np.sign(gv - 1.0) * d
    norm_const = float(np.linalg.det(eye + signed[:, None] * A * d[None, :])) if K.size else 1.0
    q = K.quadrature
    return (
        DiscretizedOperator(quadrature=q, matrix=B, hermitian=False),
        DiscretizedOperator(quadrature=q, matrix=Bt, hermitian=K.hermitian),
        norm_const,
    )


def project_span(
    q: Quadrature, raw: ArrayLike | Sequence[ArrayLike], *, rtol: float = RANK_RTOL
) -> ProjectionBasis:
    """Orthonormal basis of the span of sampled functions by pivoted QR.

    Columns whose pivot falls below ``rtol`` times the leading pivot are dropped and
    counted in ``dropped``.
    """
    if isinstance(raw, np.ndarray) and raw.ndim == 2:
        cols = raw
    else:
        funcs = [np.asarray(f, dtype=float) for f in raw]
        if not funcs:
            raise InvalidParameterError("project_span needs at least one function")
        cols = np.column_stack(funcs)
    if cols.shape[1] == 0:
        raise InvalidParameterError("project_span needs at least one function")
    if cols.shape[0] != q.size:
        raise InvalidParameterError(f"functions must be sampled at the {q.size} nodes")
    if not np.all(np.isfinite(cols)):
        raise InvalidParameterError("sampled functions must be finite")
    weighted = q.sqrt_weights[:, None] * cols
    Q, R, _ = linalg.qr(weighted, mode="economic", pivoting=True)
    pivots = np.abs(np.diag(R))
    lead = pivots[0] if pivots.size else 0.0
    rank = int(np.sum(pivots > rtol * lead)) if lead > 0 else 0
    dropped = cols.shape[1] - rank
    if dropped:
        logger.debug("project_span: dropped %d of %d columns", dropped, cols.shape[1])
    return ProjectionBasis(quadrature=q, vectors=Q[:, :rank], dropped=dropped)


def principal_angles(Ba: ProjectionBasis, Bb: ProjectionBasis) -> np.ndarray:
    """All principal angles between the spans, ascending."""
    _check_same(Ba.quadrature, Bb.quadrature)
    if Ba.rank == 0 or Bb.rank == 0:
        raise InvalidParameterError("principal angles need nonzero-dimensional spans")
    return np.sort(linalg.subspace_angles(Ba.vectors, Bb.vectors))


def principal_angle(Ba: ProjectionBasis, Bb: ProjectionBasis) -> float:
    """Smallest angle between the two subspaces."""
    return float(principal_angles(Ba, Bb)[0])


def subspace_gap(Ba: ProjectionBasis, Bb: ProjectionBasis) -> float:
    """Largest principal angle; zero iff equal-dimensional spans coincide."""
    return float(principal_angles(Ba, Bb)[-1])


def trace_norm_distance(
    A: DiscretizedOperator | ProjectionBasis,
    B: DiscretizedOperator | ProjectionBasis,
    mask: ArrayLike,
) -> float:
    """Nuclear norm of chi_M (A - B) chi_M."""
    _check_same(A.quadrature, B.quadrature)
    m = check_mask(A.quadrature, mask)
    if not m.any():
        return 0.0
    diff = (_as_matrix(A) - _as_matrix(B))[np.ix_(m, m)]
    return float(np.linalg.norm(diff, ord="nuc"))
