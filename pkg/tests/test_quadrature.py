import numpy as np
import pytest
from scipy import integrate

from mmot_ggr.quadrature import box_integral, cell_integrals, gauss_legendre


def test_gauss_rule_exact_for_polynomials():
    x, w = gauss_legendre(5)
    for p in range(10):
        assert np.dot(w, x ** p) == pytest.approx(1.0 / (p + 1), rel=1e-13)


def test_cell_integrals_of_smooth_function():
    f = lambda x, y: np.exp(-x * x - 0.5 * y * y)  # noqa: E731
    lower = np.array([[0.0, 0.0], [-1.0, 0.5]])
    upper = np.array([[1.0, 2.0], [0.5, 1.0]])
    got = cell_integrals(f, lower, upper)
    for k in range(2):
        ref = integrate.dblquad(lambda y, x: f(x, y), lower[k, 0], upper[k, 0], lower[k, 1], upper[k, 1],
                                epsabs=1e-13, epsrel=1e-13)[0]
        assert got[k] == pytest.approx(ref, rel=1e-12)


def test_box_integral_with_kink():
    f = lambda x, y: np.abs(x - 0.3) * (1 + y)  # noqa: E731
    ref = integrate.dblquad(lambda y, x: f(x, y), 0.0, 1.0, 0.0, 1.0, epsabs=1e-13, epsrel=1e-13)[0]
    assert box_integral(f, (0.0, 1.0), (0.0, 1.0), tol=1e-13) == pytest.approx(ref, rel=1e-9)
