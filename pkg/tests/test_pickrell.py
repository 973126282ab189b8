import math

import numpy as np
import pytest
from pydantic import ValidationError
from scipy import integrate

from infdpp.exceptions import AngleDegeneracyWarning, DomainError, UndefinedPerturbationOrder
from infdpp.experiments.runner import SCALING_FIXTURE, SCALING_FIXTURE_N
from infdpp.infdet import relative_mass, reweight, window_mask
from infdpp.kernels import evaluate_diag
from infdpp.models import AsymptoticPoint, Interval, KernelSpec, SeededRng
from infdpp.pickrell import (
    DEFAULT_RADII,
    AsymptoticSummary,
    asymptotic_diagnostics,
    asymptotic_point,
    bessel_quadrature,
    build_bessel_perturbation,
    conf_map,
    default_radius,
    infinite_projection_log_constant,
    ks_slack,
    log_pushforward_constant,
    n_s_of,
    pushforward_constant,
    qr_convergence,
    radial_density,
    sample_radial,
    scaling_grid,
    scaling_limit_error,
)

PAIRS = [(0.2, 1.5), (0.7, 3.0), (2.0, 9.0), (0.05, 0.6), (4.0, 20.0)]


class TestPerturbationOrder:
    @pytest.mark.parametrize(("s", "expected"), [(-1.5, 1), (-2.5, 1), (-3.5, 2), (-4.0, 2)])
    def test_values(self, s, expected):
        assert n_s_of(s) == expected
        assert -0.5 < s / 2 + expected < 0.5

    @pytest.mark.parametrize("s", [-1.0, -3.0, -5.0])
    def test_excluded_odd_integers(self, s):
        with pytest.raises(UndefinedPerturbationOrder, match="undefined"):
            n_s_of(s)

    def test_integrable_range(self):
        with pytest.raises(DomainError, match="s < -1"):
            n_s_of(-0.5)


class TestConstants:
    @pytest.mark.parametrize("s", [0.0, 0.5, 3.0, -0.5])
    def test_first_level(self, s):
        assert pushforward_constant(1, s) == pytest.approx(math.pi / (1 + s), rel=1e-12)

    def test_deep_negative_s_stays_finite(self):
        values = [log_pushforward_constant(n, -3.5) for n in range(4, 51)]
        assert all(math.isfinite(v) for v in values)

    def test_infinite_projection_constant(self):
        expected = -sum(log_pushforward_constant(n, -1.5) for n in range(2, 21))
        assert infinite_projection_log_constant(2, 20, -1.5) == pytest.approx(expected)

    def test_fibres_must_be_finite(self):
        with pytest.raises(DomainError, match="n \\+ s > 0"):
            log_pushforward_constant(1, -1.5)

    def test_order_of_levels(self):
        with pytest.raises(DomainError, match="n0 <= n"):
            infinite_projection_log_constant(5, 3, 0.5)


class TestRadialDensity:
    def test_single_eigenvalue(self):
        lam = 1.7
        assert radial_density(1, 0.5, [lam]) == pytest.approx(1.5 / (1 + lam) ** 2.5, rel=1e-12)

    @pytest.mark.parametrize("n", [1, 3])
    def test_intensity_integrates_to_n(self, n):
        spec = KernelSpec.pickrell_radial(n, 0.5)

        def density(lam: float) -> float:
            return float(evaluate_diag(spec, lam))

        total, _ = integrate.quad(density, 0.0, np.inf, limit=200)
        assert total == pytest.approx(n, rel=1e-6)

    def test_ratio_toward_zero(self):
        ratio = radial_density(1, 0.0, [1e-12]) / radial_density(1, 0.0, [1.0])
        assert ratio == pytest.approx(4.0, rel=1e-9)

    def test_two_eigenvalues_closed_form(self):
        # s = 0: 6 (l1 - l2)^2 / ((1 + l1)(1 + l2))^4 after u = (l - 1)/(l + 1)
        for a, b in PAIRS:
            expected = 6.0 * (a - b) ** 2 / ((1 + a) * (1 + b)) ** 4
            assert radial_density(2, 0.0, [a, b]) == pytest.approx(expected, rel=1e-10)

    @pytest.mark.parametrize("s", [0.5, 2.0])
    def test_two_eigenvalues_shape(self, s):
        # the density is (l1 - l2)^2 prod (1 + l_i)^{-(4 + s)} up to a constant
        ratios = [
            radial_density(2, s, [a, b]) * ((1 + a) * (1 + b)) ** (4 + s) / (a - b) ** 2
            for a, b in PAIRS
        ]
        np.testing.assert_allclose(ratios, ratios[0], rtol=1e-9)

    def test_coincident_points_vanish(self):
        assert radial_density(2, 0.5, [1.0, 1.0]) == pytest.approx(0.0, abs=1e-14)

    def test_wrong_count(self):
        with pytest.raises(DomainError, match="exactly 2"):
            radial_density(2, 0.5, [1.0])

    @pytest.mark.parametrize("lam", [0.0, -1.0])
    def test_eigenvalues_positive(self, lam):
        with pytest.raises(DomainError, match="positive"):
            radial_density(2, 0.5, [1.0, lam])

    def test_fibres(self):
        with pytest.raises(ValidationError, match="2n \\+ s > 1"):
            radial_density(1, -1.5, [1.0])


class TestScalingLimit:
    def test_grid(self):
        grid = scaling_grid(points=4)
        assert len(grid) == 16
        assert grid[0] == (0.5, 0.5)

    def test_error_decreases(self):
        grid = scaling_grid(points=4)
        errors = [scaling_limit_error(n, 0.5, grid) for n in (10, 40, 160)]
        assert errors[0] > errors[1] > errors[2]

    @pytest.mark.parametrize("s", [0.0, 1.0])
    def test_acceptance_sizes(self, s):
        grid = scaling_grid()
        errors = [scaling_limit_error(n, s, grid) for n in (25, 100, SCALING_FIXTURE_N)]
        assert errors[0] > errors[1] > errors[2]
        assert errors[2] == pytest.approx(SCALING_FIXTURE[s], rel=0.2)

    def test_requires_integrable_weight(self):
        with pytest.raises(DomainError, match="s > -1"):
            scaling_limit_error(10, -1.5, scaling_grid())


class TestBesselPerturbation:
    def test_fields(self):
        q = bessel_quadrature([10.0])
        perturbation, measure = build_bessel_perturbation(-3.5, q, 10.0)
        assert perturbation.n_s == 2
        assert perturbation.v_exponents == (0.75, -0.25)
        assert perturbation.target_s == pytest.approx(0.5)
        assert measure.n_v == 2
        assert np.array_equal(measure.E0, q.nodes <= 10.0)

    def test_quadrature_edges(self):
        q = bessel_quadrature([10.0, 40.0], region=Interval(lo=1.0, hi=2.0))
        assert {1.0, 2.0, 10.0, 40.0} <= set(q.panels.ravel())
        assert q.nodes[0] > 1e-3

    def test_default_radius_first_candidate(self):
        assert default_radius(-1.5, threshold=0.0) == DEFAULT_RADII[0]

    def test_default_radius_gives_up(self):
        with pytest.warns(AngleDegeneracyWarning, match="no radius"):
            radius = default_radius(-1.5, candidates=(10.0,), threshold=2.0)
        assert radius == 10.0

    def test_radii_increasing(self):
        with pytest.raises(DomainError, match="increasing"):
            qr_convergence(-1.5, [40.0, 10.0], Interval(lo=1.0, hi=2.0))

    def test_region_inside_first_window(self):
        with pytest.raises(DomainError, match="region"):
            qr_convergence(-1.5, [10.0, 40.0], Interval(lo=1.0, hi=20.0))

    @pytest.mark.slow
    def test_qr_convergence(self):
        report = qr_convergence(-1.5, [10.0, 40.0, 160.0], Interval(lo=1.0, hi=2.0))
        d = report.distances
        assert report.n_s == 1
        assert d[0] > d[1] > d[2]
        assert d[2] <= 0.5 * d[0]
        assert max(report.control) <= 1e-5

    def test_mass_ratios_do_not_depend_on_radius(self):
        q = bessel_quadrature([10.0, 20.0, 40.0, 80.0])
        _, small = build_bessel_perturbation(-1.5, q, 10.0)
        _, large = build_bessel_perturbation(-1.5, q, 20.0)
        for lo, hi in ((30.0, 40.0), (40.0, 80.0)):
            # both ratios compare configurations inside (0, lo] against (0, hi]
            ratio_small = relative_mass(small, window_mask(q, 10.0, lo), window_mask(q, 10.0, hi))
            ratio_large = relative_mass(large, window_mask(q, 20.0, lo), window_mask(q, 20.0, hi))
            assert ratio_small == pytest.approx(ratio_large, rel=1e-4)

    def test_trace_hypothesis_from_kernel_diagonal(self):
        q = bessel_quadrature([10.0])
        _, measure = build_bessel_perturbation(-1.5, q, 10.0)
        g = 1.0 - 0.5 * np.exp(-q.nodes)
        _, report = reweight(measure, g, np.zeros(q.size, dtype=bool))
        diag = np.asarray(evaluate_diag(KernelSpec.bessel_j(0.5), q.nodes))
        assert report.trace_hypothesis == pytest.approx(np.sum((1 - g) * q.weights * diag))


class TestRadialSampling:
    def test_sample_shapes(self):
        samples = sample_radial(3, 0.5, 10, SeededRng(seed=12))
        assert len(samples) == 10
        for lam in samples:
            assert lam.shape == (3,)
            assert np.all(lam > 0)
            assert np.all(np.isfinite(lam))

    def test_asymptotic_point(self):
        point = asymptotic_point(np.array([4.0, 16.0, 0.0]), 2)
        assert point.gamma == pytest.approx(5.0)
        assert point.x == (4.0, 1.0, 0.0)
        assert conf_map(point) == (4.0, 1.0)

    def test_pickrell_set_validation(self):
        with pytest.raises(ValidationError, match="nonincreasing"):
            AsymptoticPoint(gamma=5.0, x=(1.0, 2.0))
        with pytest.raises(ValidationError, match="dominate"):
            AsymptoticPoint(gamma=1.0, x=(2.0, 0.5))

    def test_diagnostics(self):
        gen = np.random.default_rng(3)
        samples = {n: [gen.exponential(n**2, size=n) for _ in range(40)] for n in (2, 4)}
        summary = asymptotic_diagnostics(samples, top=2)
        assert summary.sizes == (2, 4)
        assert len(summary.ks_distances) == 1
        assert 0.0 <= summary.ks_distances[0] <= 1.0
        for gamma, top in zip(summary.mean_gamma, summary.mean_top, strict=True):
            assert len(top) == 2
            assert gamma >= top[0]

    def test_ks_trend_with_slack(self):
        summary = AsymptoticSummary(
            sizes=(20, 40, 80),
            mean_gamma=(1.0, 1.0, 1.0),
            mean_top=((0.5,), (0.5,), (0.5,)),
            ks_distances=(0.07, 0.09),
            conf_images=((), (), ()),
        )
        assert not summary.ks_nonincreasing()
        assert summary.ks_nonincreasing(slack=0.05)
        assert ks_slack(500) == pytest.approx(1.3581 * math.sqrt(2 / 500), rel=1e-3)

    @pytest.mark.slow
    def test_ks_distances_settle(self):
        sizes, draws = (20, 40, 80), 500
        samples = {n: sample_radial(n, 0.5, draws, SeededRng(seed=7, stream=n)) for n in sizes}
        summary = asymptotic_diagnostics(samples)
        assert len(summary.ks_distances) == 2
        assert summary.ks_nonincreasing(ks_slack(draws))
