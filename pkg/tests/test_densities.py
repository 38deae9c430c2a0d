import numpy as np
import pytest
from scipy import integrate

from mmot_ggr.densities import BUILTIN_NAMES, DegenerateDensityError, DensitySpec, builtin, from_expression


@pytest.mark.parametrize("name", [n for n in BUILTIN_NAMES if builtin(n).dimension == 1])
def test_1d_builtins_integrate_to_electron_count(name):
    spec = builtin(name)
    (a, b), = spec.domain
    mass, _ = integrate.quad(lambda x: float(spec(x)), a, b, limit=400, points=[0.0])
    assert mass == pytest.approx(spec.electron_count, rel=1e-9)


@pytest.mark.parametrize("name", [n for n in BUILTIN_NAMES if builtin(n).dimension == 2])
def test_2d_builtins_integrate_to_electron_count(name):
    spec = builtin(name)
    (x0, x1), (y0, y1) = spec.domain
    mass, _ = integrate.dblquad(lambda y, x: float(spec(x, y)), x0, x1, y0, y1, epsabs=1e-10, epsrel=1e-10)
    assert mass == pytest.approx(spec.electron_count, rel=1e-7)


def test_builtins_are_nonnegative():
    for name in BUILTIN_NAMES:
        spec = builtin(name)
        grids = [np.linspace(lo, hi, 201) for lo, hi in spec.domain]
        pts = np.meshgrid(*grids, indexing="ij")
        assert np.all(spec(*pts) >= 0.0)


def test_expression_density_is_normalised():
    spec = from_expression("1 + x**2", [(-1.0, 1.0)], 4)
    # int_{-1}^{1} (1 + x^2) = 8/3
    assert spec.scale == pytest.approx(4.0 / (8.0 / 3.0))
    assert spec(0.5) == pytest.approx(1.25 * 1.5)


def test_expression_in_2d_broadcasts():
    spec = from_expression("1.0", [(0.0, 2.0), (0.0, 1.0)], 3)
    assert spec(np.zeros(3), np.ones(3)).shape == (3,)
    assert spec(0.1, 0.2) == pytest.approx(1.5)


def test_unknown_builtin():
    with pytest.raises(KeyError):
        builtin("system9")


def test_zero_density_is_rejected():
    with pytest.raises(DegenerateDensityError):
        from_expression("0 * x", [(0.0, 1.0)], 2)


def test_invalid_specs():
    with pytest.raises(ValueError):
        DensitySpec("bad", ((1.0, 0.0),), lambda x: x, 3)
    with pytest.raises(ValueError):
        DensitySpec("bad", ((0.0, 1.0),), lambda x: 1.0 + 0 * x, 1)
