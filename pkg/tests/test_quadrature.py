import numpy as np
import pytest
from pydantic import ValidationError

from infdpp.exceptions import InvalidParameterError
from infdpp.models import Grading, Interval
from infdpp.quadrature import build_piecewise_quadrature, build_quadrature, inner_product


class TestBuildQuadrature:
    @pytest.mark.parametrize("k", range(16))
    def test_polynomial_exactness(self, k):
        q = build_quadrature(Interval(lo=0.0, hi=2.0), 3, 8)
        assert q.integrate(q.nodes**k) == pytest.approx(2.0 ** (k + 1) / (k + 1), rel=1e-13)

    def test_weights_sum_to_length(self):
        q = build_quadrature(Interval(lo=-1.0, hi=3.0), 5, 7, Grading.GEOMETRIC_TOWARD_LO)
        assert q.weights.sum() == pytest.approx(4.0, rel=1e-14)

    def test_size(self, unit_quadrature):
        assert unit_quadrature.size == 64

    @pytest.mark.parametrize(
        ("grading", "first_smaller"),
        [(Grading.GEOMETRIC_TOWARD_LO, True), (Grading.GEOMETRIC_TOWARD_HI, False)],
    )
    def test_geometric_grading(self, grading, first_smaller):
        q = build_quadrature(Interval(lo=0.0, hi=1.0), 6, 4, grading)
        widths = q.panels[:, 1] - q.panels[:, 0]
        assert (widths[0] < widths[-1]) is first_smaller
        assert q.panels[0, 0] == 0.0
        assert q.panels[-1, 1] == 1.0

    def test_nodes_strictly_inside(self, unit_quadrature):
        assert np.all(np.diff(unit_quadrature.nodes) > 0)
        assert unit_quadrature.nodes[0] > 0.0
        assert unit_quadrature.nodes[-1] < 1.0

    def test_read_only(self, unit_quadrature):
        with pytest.raises(ValueError):
            unit_quadrature.nodes[0] = 0.5

    @pytest.mark.parametrize(("panels", "nodes"), [(0, 8), (2, 1), (2, 65)])
    def test_invalid_counts(self, panels, nodes):
        with pytest.raises(InvalidParameterError):
            build_quadrature(Interval(lo=0.0, hi=1.0), panels, nodes)

    def test_degenerate_interval(self):
        with pytest.raises(ValidationError, match="degenerate interval"):
            Interval(lo=1.0, hi=1.0)


class TestPiecewise:
    def test_breakpoints_are_panel_edges(self):
        q = build_piecewise_quadrature([0.0, 0.5, 0.9, 1.0], 2, 6)
        edges = set(q.panels.ravel())
        assert {0.0, 0.5, 0.9, 1.0} <= edges
        assert q.mask(0.0, 0.5).sum() == 12
        assert q.mask(0.5, 0.9).sum() == 12

    def test_per_segment_grading(self):
        q = build_piecewise_quadrature(
            [0.0, 1.0, 2.0], 3, 4, [Grading.UNIFORM, Grading.GEOMETRIC_TOWARD_HI]
        )
        assert q.integrate(np.ones(q.size)) == pytest.approx(2.0, rel=1e-14)

    def test_grading_count_mismatch(self):
        with pytest.raises(InvalidParameterError, match="gradings"):
            build_piecewise_quadrature([0.0, 1.0, 2.0], 2, 4, [Grading.UNIFORM])

    def test_needs_two_breakpoints(self):
        with pytest.raises(InvalidParameterError):
            build_piecewise_quadrature([1.0, 1.0], 2, 4)


def test_inner_product(unit_quadrature):
    x = unit_quadrature.nodes
    assert inner_product(unit_quadrature, x, x**2) == pytest.approx(0.25, rel=1e-13)


def test_inner_product_length_mismatch(unit_quadrature):
    with pytest.raises(InvalidParameterError, match="length"):
        inner_product(unit_quadrature, np.ones(3), np.ones(3))
