"""Heat kernel and the deterministic functions built from it."""

from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

SQRT_2PI = np.sqrt(2.0 * np.pi)


class DomainError(ValueError):
    pass


class QuadratureError(ArithmeticError):
    def __init__(self, message, achieved):
        super().__init__(f"{message} (achieved abs error {achieved:.3e})")
        self.achieved = achieved


@dataclass(frozen=True)
class KernelPoint:
    t: float
    x: float

    def __post_init__(self):
        if not self.t > 0:
            raise DomainError(f"heat kernel needs t > 0, got {self.t}")


@dataclass(frozen=True)
class WeightQuery:
    R: float
    t: float
    s: float
    y: float
    normalizer: float = 1.0

    def __post_init__(self):
        if not (0 < self.s < self.t):
            raise DomainError(f"need 0 < s < t, got s={self.s}, t={self.t}")
        if not self.R > 0:
            raise DomainError(f"need R > 0, got {self.R}")
        if not self.normalizer > 0:
            raise DomainError(f"need a positive normalizer, got {self.normalizer}")


@dataclass(frozen=True)
class SecondDerivArgs:
    r: float
    z: float
    s: float
    y: float
    t: float
    x: float

    def __post_init__(self):
        if not (0 < self.r < self.s < self.t):
            raise DomainError(
                f"need 0 < r < s < t, got r={self.r}, s={self.s}, t={self.t}")


def p(t, x):
    """Vectorised heat kernel p_t(x) with no argument checks."""
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    return np.exp(-x * x / (2.0 * t)) / np.sqrt(2.0 * np.pi * t)


def heat_kernel(q):
    """p_t(x) = exp(-x^2 / 2t) / sqrt(2 pi t) for a KernelPoint."""
    return float(p(q.t, q.x))


def factorization_residual(t, s, a, b):
    """p_{t-s}(a) p_s(b) - p_t(a+b) p_{s(t-s)/t}(b - (s/t)(a+b))."""
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0) or np.any(s >= t):
        raise DomainError("factorization needs 0 < s < t")
    lhs = p(t - s, a) * p(s, b)
    rhs = p(t, a + b) * p(s * (t - s) / t, b - (s / t) * (a + b))
    out = lhs - rhs
    return float(out) if out.ndim == 0 else out


def gaussian_mass(lo, hi, scale):
    """P(lo < scale * N < hi), computed on the tail side to keep precision."""
    lo = np.asarray(lo, dtype=float) / scale
    hi = np.asarray(hi, dtype=float) / scale
    flip = (lo + hi) > 0
    upper = np.where(flip, special.ndtr(-lo), special.ndtr(hi))
    lower = np.where(flip, special.ndtr(-hi), special.ndtr(lo))
    return upper - lower


def box_mass(R, t, s, y):
    """int_{-R}^{R} p_{t-s}(x - y) dx."""
    return gaussian_mass(-R - np.asarray(y), R - np.asarray(y), np.sqrt(t - s))


def box_mass_scaled(R, t, s, y):
    """int_{-R}^{R} p_{s(t-s)/t}(y - (s/t) x) dx."""
    v = s * (t - s) / t
    h = s * R / t
    return (t / s) * gaussian_mass(-h - np.asarray(y), h - np.asarray(y), np.sqrt(v))


def phi_weight(q):
    val = float(box_mass(q.R, q.t, q.s, q.y)) / q.normalizer
    assert val <= 1.0 / q.normalizer * (1 + 1e-12)
    return val


def varphi_weight(q):
    val = float(box_mass_scaled(q.R, q.t, q.s, q.y)) / q.normalizer
    assert val <= q.t / (q.s * q.normalizer) * (1 + 1e-12)
    return val


def big_phi_value(r, z, s, y, t, x):
    """Vectorised Phi_{r,z,s,y}(t,x) without ordering checks."""
    ind = (np.abs(np.asarray(y) - x) > np.abs(np.asarray(z) - y)).astype(float)
    lead = p(t - s, x - y)
    rest = (p(t - r, z - y) + p(t - r, z - x) + ind) / (s - r) ** 0.25
    return lead * (p(s - r, y - z) + rest)


def big_phi(a):
    if a.s == a.r:
        raise DomainError("Phi is singular at r = s")
    return float(big_phi_value(a.r, a.z, a.s, a.y, a.t, a.x))


def k_atom(a):
    """Point-mass part p_{t-s}^2(x-y) p_{s-r}^2(y-z)."""
    return float(p(a.t - a.s, a.x - a.y) ** 2 * p(a.s - a.r, a.y - a.z) ** 2)


def _bulk_smooth(theta, a):
    # w-integral of p^2_{t-th}(x-w) p^2_{th-r}(w-z) p^2_{th-s}(w-y) in closed form,
    # with the (th-s)^{-1/2} (t-th)^{-1/2} factors removed.
    u = (a.t - theta) / 2.0
    b = (theta - a.r) / 2.0
    c = (theta - a.s) / 2.0
    pref = 1.0 / (4.0 * np.pi) ** 1.5 / np.sqrt(theta - a.r)
    m = (b * a.x + u * a.z) / (u + b)
    return pref * p(u + b, a.x - a.z) * p(u * b / (u + b) + c, m - a.y)


def k_bulk_integrand(theta, a):
    return _bulk_smooth(theta, a) / np.sqrt((theta - a.s) * (a.t - theta))


def k_bulk(a, rtol=1e-8):
    val, err = integrate.quad(_bulk_smooth, a.s, a.t, args=(a,), weight="alg",
                              wvar=(-0.5, -0.5), epsabs=0.0, epsrel=rtol, limit=200)
    if err > max(10 * rtol * abs(val), 1e-300):
        raise QuadratureError("k_integral bulk did not converge", err)
    return val


def k_integral(a, rtol=1e-8):
    """K = sqrt(atom + bulk) with the bulk theta-integral done by QAWS."""
    return float(np.sqrt(k_atom(a) + k_bulk(a, rtol)))


def fejer_weight(xi):
    """(1 - cos xi) / xi^2, equal to 1/2 at the origin."""
    xi = np.asarray(xi, dtype=float)
    small = np.abs(xi) < 1e-4
    safe = np.where(small, 1.0, xi)
    # half-angle form: no cancellation near zero
    out = np.where(small, 0.5 - xi * xi / 24.0, 2.0 * np.sin(safe / 2.0) ** 2 / (safe * safe))
    return float(out) if out.ndim == 0 else out
