"""Infinite determinantal measures and Bessel-type kernels, computed on quadrature grids."""

__version__ = "1.0.0"
