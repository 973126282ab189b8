"""Exact sampling of projection DPPs on a quadrature and Monte Carlo estimators.

A draw from a rank-m projection picks m distinct nodes by sequential conditioning:
sample a node i with probability ||V_i||^2 / m, rotate the basis so that only one
column is nonzero at row i, drop that column, repeat.
"""

import logging
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from numpy.typing import ArrayLike

from infdpp.exceptions import InvalidParameterError
from infdpp.models import Configuration, SeededRng
from infdpp.operators import ProjectionBasis, check_mask

logger = logging.getLogger(__name__)

REORTHONORMALIZE_EVERY = 32

Statistic = Callable[[np.ndarray], float | np.ndarray]


def _householder_drop(V: np.ndarray, row: int) -> np.ndarray:
    """Rotate columns so V[row] is a multiple of e_1, then drop the first column."""
    r = V[row].copy()
    norm = np.linalg.norm(r)
    v = r.copy()
    v[0] += np.copysign(norm, r[0]) if r[0] != 0 else norm
    vv = float(v @ v)
    if vv > 0:
        V = V - (2.0 / vv) * np.outer(V @ v, v)
    return V[:, 1:]


def _draw_indices(vectors: np.ndarray, gen: np.random.Generator) -> np.ndarray:
    V = np.array(vectors, dtype=float, copy=True)
    n, m = V.shape
    picked = np.empty(m, dtype=int)
    for step in range(m):
        probs = np.sum(V**2, axis=1)
        probs[picked[:step]] = 0.0
        probs /= probs.sum()
        node = int(gen.choice(n, p=probs))
        picked[step] = node
        V = _householder_drop(V, node)
        if V.shape[1] and (step + 1) % REORTHONORMALIZE_EVERY == 0:
            V, _ = np.linalg.qr(V)
    return np.sort(picked)


def _configuration(P: ProjectionBasis, indices: np.ndarray) -> Configuration:
    nodes = P.quadrature.nodes
    return Configuration(
        points=tuple(float(nodes[i]) for i in indices), indices=tuple(int(i) for i in indices)
    )


def sample_projection_dpp(P: ProjectionBasis, rng: SeededRng) -> Configuration:
    """One exact draw of P's determinantal process on the quadrature nodes."""
    if P.rank == 0:
        return Configuration()
    return _configuration(P, _draw_indices(P.vectors, rng.generator()))


def sample_configurations(
    P: ProjectionBasis, draws: int, rng: SeededRng
) -> list[Configuration]:
    """``draws`` consecutive draws from a single stream."""
    gen = rng.generator()
    if P.rank == 0:
        return [Configuration() for _ in range(draws)]
    return [_configuration(P, _draw_indices(P.vectors, gen)) for _ in range(draws)]


def _split(draws: int, parts: int) -> list[int]:
    base, extra = divmod(draws, parts)
    return [base + (1 if k < extra else 0) for k in range(parts)]


def sample_statistic(
    P: ProjectionBasis,
    statistic: Statistic,
    draws: int,
    rng: SeededRng,
    workers: int = 1,
) -> np.ndarray:
    """Evaluate ``statistic`` on the sorted node indices of each draw, pooled in stream order.

    With ``workers > 1`` the draws are split over child streams of ``rng`` and run on a
    thread pool; the result is deterministic in (rng, draws, workers).
    """
    if workers < 1:
        raise InvalidParameterError(f"workers must be >= 1, got {workers}")
    streams = [rng] if workers == 1 else rng.spawn(workers)
    sizes = _split(draws, len(streams))

    def run(stream: SeededRng, size: int) -> np.ndarray:
        gen = stream.generator()
        empty = np.array([], dtype=int)
        return np.asarray(
            [statistic(_draw_indices(P.vectors, gen) if P.rank else empty) for _ in range(size)],
            dtype=float,
        )

    if len(streams) == 1:
        return run(streams[0], sizes[0])
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(run, streams, sizes))
    return np.concatenate(parts)


def _mean_and_error(values: np.ndarray) -> tuple[float, float]:
    mean = float(np.mean(values))
    if values.size < 2 or np.all(values == values[0]):
        return mean, 0.0
    return mean, float(np.std(values, ddof=1) / np.sqrt(values.size))


def mc_expect_mult_functional(
    P: ProjectionBasis,
    g: ArrayLike,
    draws: int,
    rng: SeededRng,
    *,
    workers: int = 1,
) -> tuple[float, float]:
    """Monte Carlo mean and standard error of prod_{x in X} g(x)."""
    if draws < 100:
        raise InvalidParameterError(f"draws must be >= 100, got {draws}")
    gv = np.asarray(g, dtype=float)
    if gv.shape != (P.quadrature.size,):
        raise InvalidParameterError("g must be sampled at every quadrature node")
    if np.any(gv < 0) or not np.all(np.isfinite(gv)):
        raise InvalidParameterError("g must be finite and nonnegative")
    values = sample_statistic(P, lambda idx: float(np.prod(gv[idx])), draws, rng, workers)
    return _mean_and_error(values)


def mc_counting_moments(
    P: ProjectionBasis,
    masks: Sequence[ArrayLike],
    z: Sequence[float],
    draws: int,
    rng: SeededRng,
    *,
    workers: int = 1,
) -> tuple[float, float]:
    """Monte Carlo estimate of E prod_j z_j^{#B_j} with its standard error."""
    if len(masks) != len(z):
        raise InvalidParameterError("need one z per mask")
    if draws < 1:
        raise InvalidParameterError(f"draws must be >= 1, got {draws}")
    checked = [check_mask(P.quadrature, mk) for mk in masks]
    seen = np.zeros(P.quadrature.size, dtype=bool)
    for mk in checked:
        if np.any(seen & mk):
            raise InvalidParameterError("counting masks must be disjoint")
        seen |= mk
    zs = np.asarray(z, dtype=float)
    if np.all(zs == 1.0):
        return 1.0, 0.0

    def statistic(idx: np.ndarray) -> float:
        counts = np.array([np.count_nonzero(mk[idx]) for mk in checked])
        return float(np.prod(zs**counts))

    return _mean_and_error(sample_statistic(P, statistic, draws, rng, workers))


def mc_mask_counts(
    P: ProjectionBasis,
    mask: ArrayLike,
    draws: int,
    rng: SeededRng,
    *,
    workers: int = 1,
) -> tuple[float, float]:
    """Mean number of particles in ``mask`` with its standard error."""
    mk = check_mask(P.quadrature, mask)
    if draws < 1:
        raise InvalidParameterError(f"draws must be >= 1, got {draws}")
    values = sample_statistic(
        P, lambda idx: float(np.count_nonzero(mk[idx])), draws, rng, workers
    )
    return _mean_and_error(values)
