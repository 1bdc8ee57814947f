import numpy as np
import pytest

from bouss2d.spectral import SpectralField, TorusGrid, to_spectral


@pytest.fixture
def grid():
    return TorusGrid(32)


def random_field(grid, rng, kmax=None, scale=1.0) -> SpectralField:
    """Random mean-zero real field, band-limited to |k_i| <= kmax."""
    f = to_spectral(grid, rng.standard_normal((grid.n, grid.n)))
    kmax = grid.dealias_cut if kmax is None else kmax
    mask = (np.abs(grid.kx) <= kmax) & (np.abs(grid.ky) <= kmax)
    return SpectralField(grid, f.coeffs * mask * scale)


def gauss_legendre_integral(fn, a, b, n_panels=200, order=20) -> float:
    """Composite Gauss-Legendre on geometrically spaced panels.

    Independent oracle for the adaptive quadrature used in the package;
    geometric spacing resolves integrands steep near the left endpoint.
    """
    edges = np.geomspace(a, b, n_panels + 1)
    x, w = np.polynomial.legendre.leggauss(order)
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        mid, half = (lo + hi) / 2.0, (hi - lo) / 2.0
        total += half * float(np.sum(w * fn(mid + half * x)))
    return total
