import math

import numpy as np
import pytest
from pydantic import ValidationError

from infdpp.exceptions import AngleDegeneracyWarning, CollapseError, InvalidParameterError
from infdpp.infdet import (
    InfDetMeasureSpec,
    andreief_log_mass,
    hankel_log_mass_ratio,
    mc_reweighted_intensity,
    op_ensemble_as_infdet,
    op_ensemble_quadrature,
    perturbation_convergence,
    relative_mass,
    reweight,
    sample_infdet,
    window_mask,
    window_projection,
    windowed_compression,
)
from infdpp.kernels import cd_closed_form
from infdpp.models import Interval, KernelSpec, OPEnsembleSpec, SeededRng
from infdpp.operators import (
    discretize,
    principal_angles,
    project_span,
    projection_matrix,
    trace_norm_distance,
    transform_bgk,
)
from infdpp.pickrell import bessel_quadrature

CUTS = (0.65, 0.8, 0.9)


def chain(spec: InfDetMeasureSpec, b1: float, ends) -> list[np.ndarray]:
    return [window_mask(spec.quadrature, b1, c) for c in (b1, *ends)]


@pytest.fixture
def finite_ensemble():
    ensemble = OPEnsembleSpec(N=3, s=0.5, b1=0.5)
    q = op_ensemble_quadrature(ensemble, CUTS)
    return ensemble, op_ensemble_as_infdet(ensemble, q)


@pytest.fixture
def infinite_ensemble():
    ensemble = OPEnsembleSpec(N=3, s=-1.5, b1=0.5)
    q = op_ensemble_quadrature(ensemble, CUTS)
    return ensemble, op_ensemble_as_infdet(ensemble, q)


@pytest.fixture
def flat_spec(unit_quadrature):
    q = unit_quadrature
    return InfDetMeasureSpec(
        quadrature=q,
        L=project_span(q, [np.ones(q.size)]),
        V=np.zeros((q.size, 0)),
        E0=np.ones(q.size, dtype=bool),
    )


def test_window_mask_is_half_open(unit_quadrature):
    x = unit_quadrature.nodes
    mask = window_mask(unit_quadrature, x[3], x[7])
    assert np.flatnonzero(mask).tolist() == [4, 5, 6, 7]


class TestOPEnsemble:
    def test_integrable_weight_has_no_v(self, finite_ensemble):
        _, spec = finite_ensemble
        assert spec.n_v == 0
        assert spec.L.rank == 3

    def test_split_dimensions(self, infinite_ensemble):
        _, spec = infinite_ensemble
        assert spec.n_v == 1
        measure = window_projection(spec, np.zeros(spec.quadrature.size, dtype=bool))
        assert measure.l_rank == 2
        assert measure.rank == measure.l_rank + spec.n_v

    @pytest.mark.parametrize(
        ("N", "s", "dim_l", "dim_v"),
        [(1, -1.5, 0, 1), (1, -3.5, 0, 1), (2, -3.5, 0, 2), (3, -3.5, 1, 2)],
    )
    def test_small_n_is_mostly_v(self, N, s, dim_l, dim_v):
        ensemble = OPEnsembleSpec(N=N, s=s, b1=0.5)
        spec = op_ensemble_as_infdet(ensemble, op_ensemble_quadrature(ensemble))
        assert (spec.L.rank, spec.n_v) == (dim_l, dim_v)
        measure = window_projection(spec, np.zeros(spec.quadrature.size, dtype=bool))
        assert measure.l_rank == dim_l
        assert measure.rank == N

    def test_kernel_matches_closed_form(self):
        ensemble = OPEnsembleSpec(N=4, s=2.0, b1=0.5)
        spec = op_ensemble_as_infdet(ensemble, op_ensemble_quadrature(ensemble, CUTS))
        q = spec.quadrature
        picks = np.searchsorted(q.nodes, [-0.9, -0.4, 0.1, 0.45, 0.7, 0.85, 0.95])
        i, j = np.triu_indices(picks.size, k=1)
        x, y = q.nodes[picks[i]], q.nodes[picks[j]]
        values = spec.L.values()
        kernel = np.sum(values[picks[i]] * values[picks[j]], axis=1)
        np.testing.assert_allclose(kernel, cd_closed_form(4, 2.0, x, y), rtol=1e-9, atol=1e-11)

    def test_quadrature_stays_below_one(self, infinite_ensemble):
        _, spec = infinite_ensemble
        assert spec.quadrature.nodes[-1] < 1.0
        edges = set(spec.quadrature.panels.ravel())
        assert {0.5, *CUTS} <= edges


class TestRelativeMass:
    @pytest.mark.parametrize("fixture", ["finite_ensemble", "infinite_ensemble"])
    def test_matches_hankel(self, request, fixture):
        ensemble, spec = request.getfixturevalue(fixture)
        ends = (ensemble.b1, *CUTS)
        windows = chain(spec, ensemble.b1, CUTS)
        for i in range(len(CUTS)):
            ratio = relative_mass(spec, windows[i], windows[i + 1])
            oracle = math.exp(hankel_log_mass_ratio(ensemble, ends[i], ends[i + 1]))
            assert ratio == pytest.approx(oracle, rel=1e-6)
            assert 0.0 < ratio < 1.0

    @pytest.mark.parametrize("s", [0.5, -1.5])
    @pytest.mark.parametrize("N", [1, 2, 3, 4])
    def test_matches_direct_integral(self, N, s):
        ensemble = OPEnsembleSpec(N=N, s=s, b1=0.5)
        spec = op_ensemble_as_infdet(ensemble, op_ensemble_quadrature(ensemble, CUTS))
        windows = chain(spec, 0.5, CUTS[:1])
        direct = math.exp(andreief_log_mass(ensemble, 0.5) - andreief_log_mass(ensemble, CUTS[0]))
        assert relative_mass(spec, windows[0], windows[1]) == pytest.approx(direct, rel=1e-6)

    def test_cocycle(self, infinite_ensemble):
        _, spec = infinite_ensemble
        windows = chain(spec, 0.5, CUTS)
        steps = [relative_mass(spec, a, b) for a, b in zip(windows, windows[1:], strict=False)]
        total = relative_mass(spec, windows[0], windows[-1])
        assert abs(total - math.prod(steps)) <= 1e-8

    def test_sampled_gap_frequency(self, infinite_ensemble):
        _, spec = infinite_ensemble
        q = spec.quadrature
        inner, outer = window_mask(q, 0.5, 0.65), window_mask(q, 0.5, 0.8)
        measure = window_projection(spec, outer)
        draws = 2000
        empty = [
            sample_infdet(measure, SeededRng(seed=31, stream=k)).count_in(outer & ~inner) == 0
            for k in range(draws)
        ]
        ratio = relative_mass(spec, inner, outer)
        error = math.sqrt(ratio * (1 - ratio) / draws)
        assert abs(float(np.mean(empty)) - ratio) <= 3 * error

    def test_same_window(self, infinite_ensemble):
        _, spec = infinite_ensemble
        window = window_mask(spec.quadrature, 0.5, 0.8)
        assert relative_mass(spec, window, window) == 1.0

    def test_not_nested(self, infinite_ensemble):
        _, spec = infinite_ensemble
        q = spec.quadrature
        with pytest.raises(InvalidParameterError, match="contained"):
            relative_mass(spec, window_mask(q, 0.5, 0.8), window_mask(q, 0.6, 0.9))

    def test_andreief_limited(self):
        with pytest.raises(InvalidParameterError, match="N <= 4"):
            andreief_log_mass(OPEnsembleSpec(N=5, s=0.5, b1=0.5), 0.7)


class TestWindowProjection:
    def test_window_meets_e0(self, infinite_ensemble):
        _, spec = infinite_ensemble
        with pytest.raises(InvalidParameterError, match="disjoint from E0"):
            window_projection(spec, spec.quadrature.mask(0.0, 0.8))

    def test_collapse(self, flat_spec):
        q = flat_spec.quadrature
        spec = flat_spec.model_copy(update={"V": np.ones((q.size, 1))})
        with pytest.raises(CollapseError, match="expected 2, found 1"):
            window_projection(spec, np.zeros(q.size, dtype=bool))

    def test_angle_warning(self, flat_spec):
        q = flat_spec.quadrature
        nearly = (np.ones(q.size) + 1e-8 * (q.nodes - 0.5))[:, None]
        spec = flat_spec.model_copy(update={"V": nearly})
        with pytest.warns(AngleDegeneracyWarning):
            measure = window_projection(spec, np.zeros(q.size, dtype=bool))
        assert measure.rank == 2
        assert measure.angle < 1e-6

    def test_v_must_match_nodes(self, unit_quadrature):
        with pytest.raises(ValidationError, match="nodes"):
            InfDetMeasureSpec(
                quadrature=unit_quadrature,
                L=project_span(unit_quadrature, [np.ones(unit_quadrature.size)]),
                V=np.ones(3),
                E0=np.zeros(unit_quadrature.size, dtype=bool),
            )

    def test_sample_cardinality(self, infinite_ensemble):
        _, spec = infinite_ensemble
        measure = window_projection(spec, window_mask(spec.quadrature, 0.5, 0.8))
        for k in range(20):
            conf = sample_infdet(measure, SeededRng(seed=4, stream=k))
            assert conf.cardinality == measure.rank
            assert conf.count_in(measure.support) == measure.rank


class TestReweight:
    def weight(self, spec):
        return 0.5 + 0.5 * np.cos(2 * spec.quadrature.nodes) ** 2

    def test_matches_transform(self, infinite_ensemble):
        _, spec = infinite_ensemble
        window = window_mask(spec.quadrature, 0.5, 0.8)
        g = self.weight(spec)
        scaled, report = reweight(spec, g, window)
        H = window_projection(spec, window).projection
        _, Bt, _ = transform_bgk(projection_matrix(H), g)
        eig, vecs = np.linalg.eigh(Bt.matrix)
        image = vecs[:, eig > 0.5]
        assert image.shape[1] == scaled.rank == report.rank
        angles = principal_angles(scaled, scaled.model_copy(update={"vectors": image}))
        assert np.max(angles) <= 1e-7
        assert report.trace_hypothesis >= 0.0

    def test_trace_counts_l_only(self, infinite_ensemble):
        _, spec = infinite_ensemble
        window = window_mask(spec.quadrature, 0.5, 0.8)
        g = self.weight(spec)
        _, report = reweight(spec, g, window)
        from_l = float(np.sum((1 - g) * spec.L.diagonal()))
        from_h = float(np.sum((1 - g) * window_projection(spec, window).projection.diagonal()))
        assert report.trace_hypothesis == pytest.approx(from_l, rel=1e-12)
        assert abs(from_h - from_l) > 1e-3

    def test_trace_vanishes_without_l(self):
        ensemble = OPEnsembleSpec(N=1, s=-1.5, b1=0.5)
        spec = op_ensemble_as_infdet(ensemble, op_ensemble_quadrature(ensemble))
        scaled, report = reweight(spec, self.weight(spec), np.zeros(spec.quadrature.size, bool))
        assert scaled.rank == report.rank == 1
        assert report.trace_hypothesis == 0.0

    def test_floor(self, infinite_ensemble):
        _, spec = infinite_ensemble
        g = self.weight(spec)
        g[0] = 0.0
        with pytest.raises(InvalidParameterError, match="eps0"):
            reweight(spec, g, np.zeros(spec.quadrature.size, dtype=bool))

    def test_above_one(self, infinite_ensemble):
        _, spec = infinite_ensemble
        g = self.weight(spec) * 1.5
        with pytest.raises(InvalidParameterError, match=r"\(0, 1\]"):
            reweight(spec, g, np.zeros(spec.quadrature.size, dtype=bool))

    def test_intensity(self, infinite_ensemble):
        _, spec = infinite_ensemble
        q = spec.quadrature
        measure = window_projection(spec, window_mask(q, 0.5, 0.8))
        report = mc_reweighted_intensity(
            measure, self.weight(spec), q.mask(0.0, 0.8), 3000, SeededRng(seed=9), workers=2
        )
        assert report.std_error > 0
        assert abs(report.estimate - report.predicted) <= 4 * report.std_error


class TestPerturbationConvergence:
    def test_windows_must_nest(self, infinite_ensemble):
        _, spec = infinite_ensemble
        q = spec.quadrature
        with pytest.raises(InvalidParameterError, match="nested"):
            perturbation_convergence(
                spec, [window_mask(q, 0.5, 0.9), window_mask(q, 0.5, 0.8)], q.mask(-0.3, 0.3)
            )

    def test_without_v_stays_at_l(self, unit_quadrature):
        q = unit_quadrature
        x = q.nodes
        inside = x <= 0.5
        spec = InfDetMeasureSpec(
            quadrature=q,
            L=project_span(q, [inside * 1.0, inside * x]),
            V=np.zeros((q.size, 0)),
            E0=inside,
        )
        windows = [window_mask(q, 0.5, c) for c in (0.6, 0.8, 1.0)]
        report = perturbation_convergence(spec, windows, q.mask(0.2, 0.9))
        assert max(report.distances) <= 1e-12
        assert report.ranks == (2, 2, 2)

    def test_compression_is_q_up_to_the_cut(self):
        q = bessel_quadrature([10.0, 40.0, 80.0], region=Interval(lo=1.0, hi=2.0))
        spec = InfDetMeasureSpec(
            quadrature=q,
            L=KernelSpec.bessel_j(0.5),
            V=np.zeros((q.size, 0)),
            E0=q.nodes <= 10.0,
        )
        reference = discretize(KernelSpec.bessel_j(0.5), q)
        window = window_mask(q, 10.0, 40.0)
        region = q.mask(1.0, 2.0)
        truncated = windowed_compression(spec, window)
        exact = windowed_compression(spec, window, eigen_tau=-np.inf)
        assert trace_norm_distance(truncated, reference, region) <= 1e-5
        assert trace_norm_distance(exact, reference, region) <= 1e-10
        outside = ~(spec.E0 | window)
        assert not np.any(truncated.matrix[outside])

    @pytest.mark.slow
    def test_distance_decreases(self):
        ensemble = OPEnsembleSpec(N=6, s=-1.5, b1=0.5)
        cuts = (0.9, 0.99, 0.999)
        spec = op_ensemble_as_infdet(ensemble, op_ensemble_quadrature(ensemble, cuts))
        q = spec.quadrature
        windows = [window_mask(q, 0.5, c) for c in cuts]
        report = perturbation_convergence(spec, windows, q.mask(-1 / 3, 1 / 3))
        d = report.distances
        assert all(b < a for a, b in zip(d, d[1:], strict=False))
        assert report.ranks == (6, 6, 6)
