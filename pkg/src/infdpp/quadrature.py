"""Composite Gauss-Legendre rules on bounded intervals.

Every operator, mass and sampler in the package lives on a fixed ``Quadrature``;
subsets of the phase space are boolean node masks, so set operations are exact.
"""

from collections.abc import Sequence
from typing import Self

import numpy as np
from numpy.typing import ArrayLike
from pydantic import BaseModel, ConfigDict, field_validator, model_validator
from scipy import special

from infdpp.exceptions import InvalidParameterError
from infdpp.models import Grading, Interval


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


class Quadrature(BaseModel):
    """Nodes and positive weights discretizing Lebesgue measure on ``interval``."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    interval: Interval
    nodes: np.ndarray
    weights: np.ndarray
    panels: np.ndarray

    @field_validator("nodes", "weights", "panels", mode="before")
    @classmethod
    def _read_only(cls, value: ArrayLike) -> np.ndarray:
        return _freeze(np.asarray(value))

    @model_validator(mode="after")
    def _check_rule(self) -> Self:
        if self.nodes.ndim != 1 or self.nodes.shape != self.weights.shape:
            raise InvalidParameterError("nodes and weights must be 1-d of equal length")
        if np.any(np.diff(self.nodes) <= 0):
            raise InvalidParameterError("quadrature nodes must be strictly increasing")
        if np.any(self.weights <= 0):
            raise InvalidParameterError("quadrature weights must be positive")
        return self

    @property
    def size(self) -> int:
        return int(self.nodes.size)

    @property
    def sqrt_weights(self) -> np.ndarray:
        return np.sqrt(self.weights)

    def mask(self, lo: float, hi: float) -> np.ndarray:
        """Nodes lying in [lo, hi]."""
        return (self.nodes >= lo) & (self.nodes <= hi)

    def integrate(self, values: ArrayLike) -> float:
        return float(np.dot(self.weights, _sampled(self, values)))


def _sampled(q: Quadrature, values: ArrayLike) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.shape[0] != q.size:
        raise InvalidParameterError(
            f"sampled values have length {arr.shape[0]}, quadrature has {q.size} nodes"
        )
    return arr


def _panel_edges(interval: Interval, panels: int, grading: Grading) -> np.ndarray:
    lo, hi = interval.lo, interval.hi
    k = np.arange(panels + 1, dtype=float)
    match grading:
        case Grading.UNIFORM:
            edges = lo + (hi - lo) * k / panels
        case Grading.GEOMETRIC_TOWARD_LO if lo > 0:
            edges = lo * (hi / lo) ** (k / panels)
        case Grading.GEOMETRIC_TOWARD_LO:
            edges = np.concatenate([[lo], lo + (hi - lo) * 2.0 ** (k[1:] - panels)])
        case Grading.GEOMETRIC_TOWARD_HI:
            edges = np.concatenate([[hi], hi - (hi - lo) * 2.0 ** (k[1:] - panels)])[::-1]
    edges[0], edges[-1] = lo, hi
    return edges


def build_quadrature(
    interval: Interval,
    panels: int,
    nodes_per_panel: int,
    grading: Grading | str = Grading.UNIFORM,
) -> Quadrature:
    """Composite Gauss-Legendre rule with ``panels`` panels of ``nodes_per_panel`` nodes.

    Geometric grading concentrates panels near one end (toward ``lo`` for Bessel-type
    kernels whose particles pile up at zero, toward ``hi`` for (1-u)^s at u = 1).
    """
    if panels < 1:
        raise InvalidParameterError(f"panels must be >= 1, got {panels}")
    if not 2 <= nodes_per_panel <= 64:
        raise InvalidParameterError(f"nodes_per_panel must be in [2, 64], got {nodes_per_panel}")
    edges = _panel_edges(interval, panels, Grading(grading))
    ref_nodes, ref_weights = special.roots_legendre(nodes_per_panel)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * ref_nodes[None, :]).ravel()
    weights = (half[:, None] * ref_weights[None, :]).ravel()
    return Quadrature(
        interval=interval,
        nodes=nodes,
        weights=weights,
        panels=np.column_stack([edges[:-1], edges[1:]]),
    )


def build_piecewise_quadrature(
    breakpoints: Sequence[float],
    panels_per_segment: int,
    nodes_per_panel: int,
    grading: Grading | str | Sequence[Grading | str] = Grading.UNIFORM,
) -> Quadrature:
    """Concatenate composite rules over consecutive breakpoints.

    Every breakpoint is a panel edge, so ``mask(b_i, b_j)`` selects exactly the nodes
    of the segments between them. ``grading`` may be given per segment.
    """
    points = sorted(set(float(b) for b in breakpoints))
    if len(points) < 2:
        raise InvalidParameterError("need at least two distinct breakpoints")
    segments = len(points) - 1
    gradings = [grading] * segments if isinstance(grading, str) else list(grading)
    if len(gradings) != segments:
        raise InvalidParameterError(f"expected {segments} gradings, got {len(gradings)}")
    parts = [
        build_quadrature(Interval(lo=a, hi=b), panels_per_segment, nodes_per_panel, g)
        for a, b, g in zip(points[:-1], points[1:], gradings, strict=True)
    ]
    return Quadrature(
        interval=Interval(lo=points[0], hi=points[-1]),
        nodes=np.concatenate([p.nodes for p in parts]),
        weights=np.concatenate([p.weights for p in parts]),
        panels=np.concatenate([p.panels for p in parts]),
    )


def inner_product(q: Quadrature, f: ArrayLike, g: ArrayLike) -> float:
    """Discrete L2 pairing sum_i w_i f_i g_i."""
    return float(np.sum(q.weights * _sampled(q, f) * _sampled(q, g)))
