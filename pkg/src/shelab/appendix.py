"""Deterministic numerical checks of the appendix kernel inequalities."""

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.stats import qmc

from . import kernels, oracles
from .kernels import SecondDerivArgs, big_phi, k_integral


@dataclass
class SweepGrid:
    """Named parameter ranges; `bound` is the ratio ceiling asserted by the check."""

    ranges: dict = field(default_factory=dict)
    count: int = 10_000
    tolerance: float = 1e-6
    bound: float = 10.0
    seed: int = 1
    report_path: str | None = None


@dataclass
class Report:
    name: str
    columns: list
    rows: list
    summary: dict
    passed: bool

    def write(self, path, header=None):
        with open(path, "w", newline="") as fh:
            if header:
                fh.write(f"# {header}\n")
            w = csv.writer(fh)
            w.writerow(self.columns)
            for r in self.rows:
                w.writerow([_fmt(v) for v in r])
            w.writerow(["summary"] + [f"{k}={_fmt(v)}" for k, v in self.summary.items()])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def kphi_points(count, seed=1, ts=(0.5, 1.0)):
    """Quasi-random ordered points with offsets scaled by the kernel widths."""
    with warnings.catch_warnings():
        # balance warning for non power-of-two counts is irrelevant here
        warnings.simplefilter("ignore", UserWarning)
        q = qmc.Sobol(6, seed=seed).random(count)
    pts = []
    for u in q:
        t = ts[int(u[0] * len(ts)) % len(ts)]
        r = t * (0.01 + 0.97 * u[1])
        s = r + (t - r) * (0.005 + 0.99 * u[2])
        x = -2.0 + 4.0 * u[3]
        y = x + 3.0 * np.sqrt(t - s) * (2 * u[4] - 1)
        z = y + 3.0 * max(np.sqrt(s - r), np.sqrt(t - s)) * (2 * u[5] - 1)
        pts.append(SecondDerivArgs(r, z, s, y, t, x))
    return pts


def check_kphi(sweep=None, points=None, phi_scale=1.0):
    """max K / Phi over the sweep; phi_scale is a fault-injection hook."""
    sweep = sweep or SweepGrid()
    points = points if points is not None else kphi_points(sweep.count, sweep.seed)
    rows = []
    for a in points:
        kv = k_integral(a)
        ph = big_phi(a) * phi_scale
        rows.append([a.r, a.z, a.s, a.y, a.t, a.x, kv, ph, kv / ph])
    ratios = np.array([r[-1] for r in rows])
    i = int(np.argmax(ratios))
    ok = bool(np.all(np.isfinite(ratios)) and ratios.max() <= sweep.bound)
    summary = {"max_ratio": ratios.max(), "argmax": i, "bound": sweep.bound, "n": len(rows)}
    return Report("kphi", ["r", "z", "s", "y", "t", "x", "lhs", "rhs", "ratio"], rows, summary, ok)


def l1phi_indicator(r, s, t, x):
    """int int p_{t-s}(x-y) 1{|y-x| > |z-y|} dy dz, the z-integral done exactly."""
    sd = np.sqrt(t - s)
    val, _ = integrate.quad(lambda y: kernels.p(t - s, x - y) * 2.0 * abs(y - x),
                            x - 40 * sd, x + 40 * sd, points=[x], epsabs=0.0,
                            epsrel=1e-11, limit=200)
    return val


def l1phi_lhs(r, s, t, x):
    """Gaussian summands integrate to 1 + 2 (s-r)^{-1/4}; the indicator adds its own term."""
    q = (s - r) ** -0.25
    return 1.0 + 2.0 * q + q * l1phi_indicator(r, s, t, x)


def check_l1phi(sweep=None, ts=(0.5, 1.0), n=12):
    sweep = sweep or SweepGrid()
    rows = []
    for t in ts:
        for fr in np.linspace(0.02, 0.95, n):
            r = fr * t
            for gap in np.geomspace(1e-4, 0.9, n):
                s = r + gap * (t - r)
                if not s < t:
                    continue
                for x in (0.0, 1.3):
                    lhs = l1phi_lhs(r, s, t, x)
                    rhs = 1.0 + (s - r) ** -0.25
                    rows.append([r, s, t, x, lhs, rhs, lhs / rhs])
    ratios = np.array([r[-1] for r in rows])
    ok = bool(np.all(np.isfinite(ratios)) and ratios.max() <= sweep.bound)
    summary = {"max_ratio": ratios.max(), "bound": sweep.bound, "n": len(rows)}
    return Report("l1phi", ["r", "s", "t", "x", "lhs", "rhs", "ratio"], rows, summary, ok)


def phi_sq_integral(R, t, s, normalizer=1.0, quad=True):
    """int_R phi^2_{R,t}(s,y) dy by quadrature (or through the box integral)."""
    if not quad:
        return float(oracles.box_integral(R, 2 * (t - s))) / normalizer**2
    f = lambda y: kernels.box_mass(R, t, s, y) ** 2
    sd = np.sqrt(t - s)
    val, _ = integrate.quad(f, -R - 40 * sd, R + 40 * sd, points=[-R, R], limit=400,
                            epsabs=0.0, epsrel=1e-11)
    return val / normalizer**2


def varphi_sq_integral(R, t, s, normalizer=1.0, quad=True):
    if not quad:
        return (t / s) ** 2 * float(oracles.box_integral(s * R / t, 2 * s * (t - s) / t)) / normalizer**2
    f = lambda y: kernels.box_mass_scaled(R, t, s, y) ** 2
    h = s * R / t
    sd = np.sqrt(s * (t - s) / t)
    val, _ = integrate.quad(f, -h - 40 * sd, h + 40 * sd, points=[-h, h], limit=400,
                            epsabs=0.0, epsrel=1e-11)
    return val / normalizer**2


def check_phivarphi(sweep=None, ts=(0.5, 1.0), Rs=(8, 16, 32, 64, 128), n_s=9):
    """Part (a) with the sigma == 1 variance, part (b) with the 2 t R log R normalizer."""
    sweep = sweep or SweepGrid()
    rows = []
    ok = True
    for t in ts:
        for R in Rs:
            sig2 = oracles.constant_sigma_variance(R, t)
            Sig2 = 2.0 * t * R * np.log(R)
            for s in np.concatenate([np.linspace(0.02, 0.48, 4) * t,
                                     np.linspace(0.52, 0.98, n_s) * t]):
                a = phi_sq_integral(R, t, s, np.sqrt(sig2))
                a_cf = phi_sq_integral(R, t, s, np.sqrt(sig2), quad=False)
                b = varphi_sq_integral(R, t, s, np.sqrt(Sig2))
                b_cf = varphi_sq_integral(R, t, s, np.sqrt(Sig2), quad=False)
                a_up = 2.0 * R / sig2
                b_up = 2.0 * R * t / (s * Sig2)
                ok &= a <= a_up * (1 + 1e-9) and b <= b_up * (1 + 1e-9)
                ok &= abs(a - a_cf) <= sweep.tolerance * a_cf and abs(b - b_cf) <= sweep.tolerance * b_cf
                rows.append([t, R, s, a, a_up, b, b_up, s * np.log(R) * b])
    arr = np.array(rows)
    upper = arr[:, 2] > arr[:, 0] / 2
    summary = {
        "c_a": arr[upper, 3].min(), "C_a": arr[:, 3].max(),
        "c_b": arr[upper, 7].min(), "C_b": arr[:, 7].max(),
        "band_b": arr[upper, 7].max() / arr[upper, 7].min(),
    }
    ok &= summary["c_a"] > 0 and summary["c_b"] > 0 and summary["band_b"] <= sweep.bound
    return Report("phivarphi", ["t", "R", "s", "int_phi2", "upper_a", "int_varphi2", "upper_b",
                                "s_logR_int_varphi2"], rows, summary, bool(ok))


def check_xi(Rs=(0.5, 1.0, 2.0, 8.0, 32.0), ts=(1e-14, 1e-3, 0.1, 0.5, 1.0, 4.0), tol=1e-6):
    """Left side in closed form versus the printed and the Parseval right sides."""
    rows = []
    for R in Rs:
        for t in ts:
            lhs = float(oracles.box_integral(R, t))
            printed = oracles.xi_printed_rhs(R, t)
            parseval = oracles.xi_parseval_rhs(R, t)
            rows.append([R, t, lhs, printed, parseval, lhs / printed, lhs / parseval])
    arr = np.array(rows)
    err_printed = np.max(np.abs(arr[:, 5] - 1))
    err_parseval = np.max(np.abs(arr[:, 6] - 1))
    small = [r for r in rows if r[1] <= 1e-12]
    limit_err = max(abs(r[2] - 2 * r[0]) for r in small) if small else np.nan
    if err_parseval <= tol:
        matched = "parseval"
    elif err_printed <= tol:
        matched = "printed"
    else:
        matched = "none"
    summary = {"max_rel_err_printed": err_printed, "max_rel_err_parseval": err_parseval,
               "limit_abs_err": limit_err, "matched_form": matched}
    ok = matched != "none" and limit_err <= tol
    return Report("xi", ["R", "t", "lhs", "rhs_printed", "rhs_parseval", "ratio_printed",
                         "ratio_parseval"], rows, summary, bool(ok))


def check_lem1(Rs=(np.e, np.e**2, 10.0, 100.0), ss=(0.01, 0.1, 0.5, 1.0, 2.0, 10.0),
               xis=(0.0, 0.1, 1.0, 10.0)):
    """Compare both sides on the grid; xi = 0 rows are skipped (vacuous bound)."""
    rows, skipped = [], 0
    for R in Rs:
        for s in ss:
            for xi in xis:
                if xi == 0:
                    skipped += 1
                    continue
                lhs = oracles.lem1_lhs(R, s, xi)
                rhs = oracles.lem1_rhs(R, s, xi)
                rows.append([R, s, xi, lhs, rhs, lhs / rhs, s * lhs / rhs])
    arr = np.array(rows)
    i = int(np.argmax(arr[:, 5]))
    summary = {"max_ratio": arr[:, 5].max(), "argmax_R": arr[i, 0], "argmax_s": arr[i, 1],
               "argmax_xi": arr[i, 2], "n_violations": int(np.sum(arr[:, 5] >= 1)),
               "max_ratio_without_1_over_s": arr[:, 6].max(), "skipped_xi0": skipped}
    return Report("lem1", ["R", "s", "xi", "lhs", "rhs", "ratio", "ratio_without_1_over_s"],
                  rows, summary, bool(arr[:, 5].max() < 1))


def check_identity(count=100_000, seed=3):
    """Max |factorization residual| over random admissible tuples."""
    rng = np.random.default_rng(seed)
    t = rng.uniform(0.01, 5.0, count)
    s = t * rng.uniform(1e-3, 1 - 1e-3, count)
    a = rng.normal(scale=2.0, size=count)
    b = rng.normal(scale=2.0, size=count)
    res = np.abs(kernels.factorization_residual(t, s, a, b))
    summary = {"max_residual": float(res.max()), "n": count}
    rows = [[float(res.max())]]
    return Report("identity", ["max_residual"], rows, summary, bool(res.max() < 1e-12))


def run_all(sweep=None, phi_scale=1.0):
    return [check_identity(), check_kphi(sweep, phi_scale=phi_scale), check_l1phi(sweep),
            check_phivarphi(sweep), check_xi(), check_lem1()]
