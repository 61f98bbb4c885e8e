"""Noise coefficients sigma with their first two derivatives."""

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline


@dataclass(frozen=True)
class CoefficientSpec:
    name: str
    sigma: Callable
    sigma_prime: Callable
    sigma_second: Callable
    lipschitz_bound: float
    growth_exponent: float = 0.0
    lower_bound: float = 0.0
    linear: bool = False

    def check(self, rng=None, n=1000, flat_case=True):
        """Spot-check the Lipschitz and growth bounds on random pairs."""
        rng = np.random.default_rng(0) if rng is None else rng
        a = rng.normal(scale=5.0, size=n)
        b = rng.normal(scale=5.0, size=n)
        lip = np.abs(self.sigma(a) - self.sigma(b)) / np.maximum(np.abs(a - b), 1e-300)
        if np.max(lip) > self.lipschitz_bound * (1 + 1e-9):
            raise ValueError(f"{self.name}: Lipschitz bound violated")
        ratio = np.abs(self.sigma_second(a)) / (1.0 + np.abs(a) ** self.growth_exponent)
        if not np.all(np.isfinite(ratio)):
            raise ValueError(f"{self.name}: sigma'' growth check failed")
        if flat_case and self.sigma(np.array(1.0)) == 0:
            raise ValueError(f"{self.name}: flat case needs sigma(1) != 0")
        return self


def _const(c):
    return lambda u: np.full(np.shape(u), c, dtype=float)


CONSTANT_ONE = CoefficientSpec("constant-1", _const(1.0), _const(0.0), _const(0.0),
                               lipschitz_bound=0.0, lower_bound=1.0, linear=True)
IDENTITY = CoefficientSpec("identity", lambda u: np.asarray(u, dtype=float) * 1.0,
                           _const(1.0), _const(0.0), lipschitz_bound=1.0, linear=True)
TWO_PLUS_SINE = CoefficientSpec("two-plus-sine", lambda u: 2.0 + np.sin(u), np.cos,
                                lambda u: -np.sin(u), lipschitz_bound=1.0, lower_bound=1.0)

PRESETS = {c.name: c for c in (CONSTANT_ONE, IDENTITY, TWO_PLUS_SINE)}


def spline_coefficient(knots, values, name="custom"):
    """Cubic-spline sigma with exact spline derivatives; linear extrapolation outside."""
    knots = np.asarray(knots, dtype=float)
    cs = CubicSpline(knots, np.asarray(values, dtype=float), bc_type="natural")
    d1, d2 = cs.derivative(1), cs.derivative(2)
    lo, hi = knots[0], knots[-1]

    def sig(u):
        u = np.asarray(u, dtype=float)
        return np.where(u < lo, cs(lo) + d1(lo) * (u - lo),
                        np.where(u > hi, cs(hi) + d1(hi) * (u - hi), cs(np.clip(u, lo, hi))))

    def sig1(u):
        return d1(np.clip(np.asarray(u, dtype=float), lo, hi))

    def sig2(u):
        u = np.asarray(u, dtype=float)
        return np.where((u < lo) | (u > hi), 0.0, d2(np.clip(u, lo, hi)))

    grid = np.linspace(lo, hi, 20001)
    lip = float(np.max(np.abs(d1(grid))))
    return CoefficientSpec(name, sig, sig1, sig2, lipschitz_bound=lip, lower_bound=0.0)


def get_preset(name):
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown coefficient preset {name!r}; known: {sorted(PRESETS)}")
