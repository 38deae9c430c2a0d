"""Single-electron densities and the built-in benchmark systems."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate


class DegenerateDensityError(ValueError):
    """The density cannot be used to build an equal-mass partition."""


@dataclass(frozen=True)
class DensitySpec:
    """A density rho >= 0 on an interval or a box, normalised to ``electron_count``.

    ``domain`` is ``((a, b),)`` in 1D and ``((a1, b1), (a2, b2))`` in 2D.
    ``profile`` is the unnormalised shape; it must accept numpy arrays
    (one array per coordinate) and broadcast.
    """

    name: str
    domain: tuple[tuple[float, float], ...]
    profile: Callable[..., np.ndarray] = field(repr=False, compare=False)
    electron_count: int
    scale: float = field(default=0.0, compare=False)

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise ValueError("only 1D and 2D domains are supported")
        if self.electron_count < 2:
            raise ValueError("electron_count must be >= 2")
        for lo, hi in self.domain:
            if not hi > lo:
                raise ValueError(f"empty domain side ({lo}, {hi})")
        if self.scale == 0.0:
            mass = _raw_mass(self.profile, self.domain)
            if not np.isfinite(mass) or mass <= 0.0:
                raise DegenerateDensityError(f"{self.name}: profile has no positive mass")
            object.__setattr__(self, "scale", self.electron_count / mass)

    @property
    def dimension(self) -> int:
        return len(self.domain)

    @property
    def volume(self) -> float:
        return float(np.prod([hi - lo for lo, hi in self.domain]))

    def __call__(self, *coords):
        return self.scale * np.asarray(self.profile(*coords), dtype=float)

    def mass(self) -> float:
        return self.scale * _raw_mass(self.profile, self.domain)


def _raw_mass(profile, domain) -> float:
    if len(domain) == 1:
        (a, b), = domain
        val, _ = integrate.quad(lambda x: float(profile(np.float64(x))), a, b,
                                epsabs=1e-13, epsrel=1e-13, limit=500, points=_kinks(a, b))
        return val
    from .quadrature import box_integral
    return box_integral(profile, domain[0], domain[1], tol=1e-12)


def _kinks(a, b):
    # 0 is the only non-smooth point among the built-in densities
    return [0.0] if a < 0.0 < b else None


def _gauss(center, width):
    center = np.asarray(center, dtype=float)

    def g(*r):
        d2 = sum((ri - ci) ** 2 for ri, ci in zip(r, center))
        return np.exp(-width * d2)
    return g


def _rho1(x):
    return np.cos(np.pi * x) + 1.0


def _rho2(x):
    return 2.0 * np.exp(-6.0 * (x + 0.5) ** 2) + 1.5 * np.exp(-4.0 * (x - 0.5) ** 2)


def _rho3(x):
    return np.exp(-np.abs(x))


def _rho4(x):
    return np.exp(-x ** 2 / np.sqrt(np.pi))


_RHO5_TERMS = ((-3.0, 3.0), (-2.0, 3.0), (-1.0, 2.0), (0.0, 1.0), (1.0, 2.0), (2.0, 3.0), (3.0, 3.0))
_RHO6_TERMS = ((-2.7, 8.0), (-2.025, 8.0), (-1.35, 8.0), (-0.675, 8.0), (0.5, 5.0), (1.5, 5.0), (2.5, 5.0))


def _rho5(x):
    return sum(np.exp(-w * (x - c) ** 2) for c, w in _RHO5_TERMS)


def _rho6(x):
    return sum(np.exp(-w * (x - c) ** 2) for c, w in _RHO6_TERMS)


def _rho7(x, y):
    return _gauss((-1.5, 0.0), 2.5)(x, y) + 0.5 * _gauss((1.5, 0.0), 2.5)(x, y)


def _rho8(x, y):
    return (_gauss((-1.032, -0.84), 2.5)(x, y) + _gauss((0.0, 0.96), 2.5)(x, y)
            + _gauss((1.032, -0.84), 2.5)(x, y))


_BUILTINS = {
    "system1": (_rho1, ((-1.0, 1.0),), 3),
    "system2": (_rho2, ((-1.0, 1.0),), 3),
    "system3": (_rho3, ((-5.0, 5.0),), 3),
    "system4": (_rho4, ((-2.0, 2.0),), 7),
    "system5": (_rho5, ((-4.0, 4.0),), 7),
    "system6": (_rho6, ((-3.0, 3.0),), 7),
    "system7": (_rho7, ((-3.0, 3.0), (-2.0, 2.0)), 3),
    "system8": (_rho8, ((-2.5, 2.5), (-2.5, 2.5)), 3),
}

BUILTIN_NAMES = tuple(_BUILTINS)


def builtin(name: str) -> DensitySpec:
    """Return one of the benchmark densities ``system1`` ... ``system8``."""
    try:
        profile, domain, n = _BUILTINS[name]
    except KeyError:
        raise KeyError(f"unknown system {name!r}; choose from {', '.join(BUILTIN_NAMES)}") from None
    return DensitySpec(name=name, domain=domain, profile=profile, electron_count=n)


def from_expression(expr: str, domain, electron_count: int, name: str = "custom") -> DensitySpec:
    """Build a density from a numpy expression in ``x`` (and ``y`` in 2D).

    The expression is evaluated with ``np`` and the usual elementary functions
    in scope, e.g. ``"exp(-x**2) + 0.5"``.
    """
    domain = tuple((float(lo), float(hi)) for lo, hi in domain)
    names = {k: getattr(np, k) for k in ("exp", "cos", "sin", "abs", "sqrt", "pi", "log", "cosh", "tanh")}
    names["np"] = np
    code = compile(expr, "<density>", "eval")
    if len(domain) == 1:
        def profile(x):
            return np.broadcast_to(eval(code, {"__builtins__": {}}, {**names, "x": x}), np.shape(x))
    else:
        def profile(x, y):
            shape = np.broadcast_shapes(np.shape(x), np.shape(y))
            return np.broadcast_to(eval(code, {"__builtins__": {}}, {**names, "x": x, "y": y}), shape)
    return DensitySpec(name=name, domain=domain, profile=profile, electron_count=int(electron_count))
