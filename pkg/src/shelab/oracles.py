"""Independent quadrature and closed-form oracles used to check simulations."""

import numpy as np
from scipy import integrate, special

from .kernels import fejer_weight, p


def box_integral(R, c):
    """int_{Q_R^2} p_c(x1 - x2) dx1 dx2 in closed form."""
    R = np.asarray(R, dtype=float)
    c = np.asarray(c, dtype=float)
    return (4.0 * R * (special.ndtr(2.0 * R / np.sqrt(c)) - 0.5)
            - 2.0 * c * (p(c, 0.0) - p(c, 2.0 * R)))


def box_integral_1d(R, c):
    """Same quantity through the reduction int_{-2R}^{2R} (2R - |z|) p_c(z) dz."""
    val, _ = integrate.quad(lambda z: 2.0 * (2.0 * R - z) * p(c, z), 0.0, 2.0 * R,
                            epsabs=0.0, epsrel=1e-12, limit=200)
    return val


def fejer_integral(scale, cut=50.0):
    """int_R fejer(xi) exp(-scale xi^2) d xi.

    The slowly decaying oscillatory tail beyond `cut` is handled with the
    Fourier-weighted rule.
    """
    g = lambda x: 2.0 * np.exp(-scale * x * x) / (x * x)
    head, _ = integrate.quad(lambda x: 2.0 * fejer_weight(x) * np.exp(-scale * x * x),
                             0.0, cut, limit=400, epsabs=1e-14, epsrel=1e-12)
    smooth, _ = integrate.quad(g, cut, np.inf, epsabs=1e-14, epsrel=1e-12)
    osc, _ = integrate.quad(g, cut, np.inf, weight="cos", wvar=1.0)
    return head + smooth - osc


def xi_printed_rhs(R, t):
    return 4.0 * R / np.pi * fejer_integral(t / R**2)


def xi_parseval_rhs(R, t):
    return 2.0 * R / np.pi * fejer_integral(t / (8.0 * R**2))


def constant_sigma_variance(R, t):
    """Var of int_{Q_R} u(t,x) dx for sigma == 1: int_0^t g_R(2s) ds."""
    val, _ = integrate.quad(lambda s: box_integral(R, 2.0 * s), 0.0, t,
                            epsabs=0.0, epsrel=1e-11, limit=200)
    return val


def renewal_closed_form(s):
    """E u(s,0)^2 for sigma(x) = x with flat data."""
    s = np.asarray(s, dtype=float)
    return np.exp(s / 4.0) * (1.0 + special.erf(np.sqrt(s) / 2.0))


def solve_renewal(t, n=4000):
    """Product-trapezoid solver for f(s) = 1 + int_0^s f(r) / sqrt(4 pi (s-r)) dr.

    f is taken piecewise linear and integrated exactly against the weak
    singularity, so the scheme is second order. Returns grid and solution.
    """
    h = t / n
    s = np.linspace(0.0, t, n + 1)
    f = np.ones(n + 1)
    c = 1.0 / np.sqrt(4.0 * np.pi)
    k = np.arange(n, dtype=float)
    a = 2.0 * np.sqrt(h) * (np.sqrt(k + 1) - np.sqrt(k))
    b = (2.0 / 3.0) * h**1.5 * ((k + 1) ** 1.5 - k**1.5)
    w_left = (b - k * h * a) / h
    w_right = ((k + 1) * h * a - b) / h
    for i in range(1, n + 1):
        kk = i - 1 - np.arange(i)
        known = np.dot(w_left[kk], f[:i]) + np.dot(w_right[kk[:-1]], f[1:i])
        f[i] = (1.0 + c * known) / (1.0 - c * w_right[0])
    return s, f


def renewal_integral(t):
    """2 int_0^t xi(s) ds for sigma(x) = x."""
    val, _ = integrate.quad(renewal_closed_form, 0.0, t, epsabs=0.0, epsrel=1e-12)
    return 2.0 * val


def flat_variance(R, t, xi):
    """int_0^t xi(s) g_R(2(t-s)) ds for a second-moment function xi."""
    val, _ = integrate.quad(lambda s: xi(s) * box_integral(R, 2.0 * (t - s)), 0.0, t,
                            epsabs=0.0, epsrel=1e-10, limit=200)
    return val


def pam_second_moment(tau, terms=80):
    """E U(tau,0)^2 from the chaos series of the renewal equation."""
    tau = np.asarray(tau, dtype=float)
    coef, power, total = 1.0, 0.0, np.ones_like(tau)
    for _ in range(terms):
        coef = coef * special.beta(power + 0.5, 0.5) / np.sqrt(4.0 * np.pi)
        power = power + 0.5
        total = total + coef * tau**power
    return total


def pam_variance(R, t):
    """Var of int_{Q_R} U(t,x) dx for the Dirac-started PAM."""
    def f(tau):
        return (pam_second_moment(tau) * (t / tau) ** 2
                * box_integral(tau * R / t, 2.0 * tau * (t - tau) / t))
    pts = sorted({t / R**2, t / R, min(1e-3, t / 2)})
    val, _ = integrate.quad(f, 0.0, t, points=pts, limit=500, epsabs=0.0, epsrel=1e-10)
    return val


def lem1_lhs(R, s, xi):
    """(1/s) int_0^s r^{-1} exp(-s ((s-r)/r) xi^2 / R^2) dr = e^c E1(c) / s."""
    c = s * xi * xi / (R * R)
    if c < 500.0:
        return float(np.exp(c) * special.exp1(c) / s)
    val, _ = integrate.quad(lambda u: np.exp(-c * u) / (1.0 + u), 0.0, np.inf)
    return val / s


def lem1_lhs_quad(R, s, xi):
    """Direct quadrature of the defining r-integral."""
    c = xi * xi / (R * R)
    f = lambda r: np.exp(-s * (s - r) / r * c) / r if r > 0 else 0.0
    pts = [s * min(1.0, 1.0 / max(s * c, 1e-300)) * q for q in (1e-3, 1e-2, 1e-1)]
    pts = [q for q in pts if 0 < q < s]
    val, _ = integrate.quad(f, 0.0, s, points=pts or None, limit=400, epsabs=0.0, epsrel=1e-10)
    return val / s


def lem1_rhs(R, s, xi):
    return 7.0 * np.log(R) * np.log(np.e + 1.0 / s) * np.log(np.e + 1.0 / abs(xi))
