"""Shared fixtures: quadratures, a Christoffel-Darboux projection, settings."""

import numpy as np
import pytest

from infdpp.config import Settings
from infdpp.kernels import cd_kernel_functions
from infdpp.models import Interval
from infdpp.operators import ProjectionBasis
from infdpp.quadrature import Quadrature, build_quadrature


@pytest.fixture
def unit_quadrature() -> Quadrature:
    return build_quadrature(Interval(lo=0.0, hi=1.0), 4, 16)


@pytest.fixture
def symmetric_quadrature() -> Quadrature:
    return build_quadrature(Interval(lo=-1.0, hi=1.0), 8, 16)


@pytest.fixture
def cd_basis(symmetric_quadrature: Quadrature) -> ProjectionBasis:
    """Rank-5 Christoffel-Darboux projection for (1-u)^{1/2} on [-1, 1]."""
    return cd_kernel_functions(5, 0.5, Interval(lo=-1.0, hi=1.0), symmetric_quadrature)


@pytest.fixture
def gen() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture
def settings() -> Settings:
    return Settings(_env_file=None)
