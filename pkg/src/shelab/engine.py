"""Explicit finite-difference solvers and the single-pass tangent projections.

The scheme on the periodic grid is

    u[n+1] = A u[n] + sigma(u[n]) * xi[n] * sqrt(dt / dx),
    A u = u + mu (u[j+1] - 2 u[j] + u[j-1]),  mu = dt / (2 dx^2).

Tangents are the exact derivatives of the discrete scheme, so identities
such as E[D_v F] = E[F^2] hold for the simulated model itself.
"""

from dataclasses import dataclass

import numpy as np

from .kernels import p
from .noise import SEGMENT_STEPS, Lane, StreamKey, draw_segment

BLOWUP = 1e12


class DivergenceError(FloatingPointError):
    def __init__(self, step):
        super().__init__(f"solution diverged at step {step}")
        self.step = step


class MassDriftError(ValueError):
    pass


@dataclass
class FieldPath:
    grid: object
    values: np.ndarray
    case: str = "flat"
    ratio: np.ndarray | None = None
    key: StreamKey | None = None

    @property
    def final(self):
        return self.ratio[-1] if self.case == "pam" else self.values[-1]


@dataclass
class TangentState:
    grid: object
    z_values: np.ndarray
    projection: float
    normalizer: float
    second: np.ndarray | None = None
    second_projection: float | None = None


def apply_stencil(u, mu):
    """A u on the last axis, periodic."""
    return u + mu * (np.roll(u, 1, axis=-1) + np.roll(u, -1, axis=-1) - 2.0 * u)


def window_weights(x, R, dx):
    """Trapezoid weights of int_{-R}^{R} on the nodes x; R must lie on the grid."""
    k = R / dx
    if abs(k - round(k)) > 1e-9:
        raise ValueError(f"R={R} is not a multiple of dx={dx}")
    ax = np.abs(x)
    w = np.where(ax < R - 1e-9 * dx, dx, 0.0)
    w = np.where(np.abs(ax - R) <= 1e-9 * dx, dx / 2.0, w)
    return w


def window_sum(W, v):
    """(n_R, B) window sums of v (B, n) or (n_R, B, n).

    A row-wise reduction, so each replica's value is independent of the batch size.
    """
    v = v[None] if v.ndim == 2 else v
    return np.sum(W[:, None, :] * v, axis=-1)


def backward_weights(w, mu, n_t):
    """psi[n] = A^(n_t - 1 - n) w for n = 0..n_t-1 (A is symmetric)."""
    out = np.empty((n_t,) + w.shape)
    out[-1] = w
    for n in range(n_t - 2, -1, -1):
        out[n] = apply_stencil(out[n + 1], mu)
    return out


def discrete_constant_variance(grid, R):
    """Exact variance of sum_j w_j u_j at t_end for sigma == 1 in this scheme."""
    mu = grid.dt / (2 * grid.dx**2)
    psi = backward_weights(window_weights(grid.x, R, grid.dx), mu, grid.n_t)
    return grid.dt / grid.dx * float(np.sum(psi**2))


def _noise_rows(grid, keys, seg):
    rows = min(SEGMENT_STEPS, grid.n_t - seg * SEGMENT_STEPS)
    return np.stack([draw_segment(k, seg, (rows, grid.n_x)) for k in keys], axis=1)


def solve_case1(grid, coeff, tape, initial=None):
    """Full path of the flat-data equation for one replica."""
    grid.validate()
    mu = grid.dt / (2 * grid.dx**2)
    a = np.sqrt(grid.dt / grid.dx)
    u = np.ones(grid.n_x) if initial is None else np.array(initial, dtype=float)
    out = np.empty((grid.n_t + 1, grid.n_x))
    out[0] = u
    for n in range(grid.n_t):
        u = apply_stencil(u, mu) + coeff.sigma(u) * tape.row(n) * a
        if not np.all(np.isfinite(u)) or np.max(np.abs(u)) > BLOWUP:
            raise DivergenceError(n + 1)
        out[n + 1] = u
    return FieldPath(grid, out, "flat", key=tape.key)


def solve_case2_pam(grid, tape, start_time=None, noiseless_check=False):
    """Dirac-started PAM on the physical grid, with U = u / p_t stored from step 1.

    With start_time set, the run instead starts from p_{start_time} at that time
    (cross-check mode); the tape still supplies n_t steps.
    """
    grid.validate()
    mu = grid.dt / (2 * grid.dx**2)
    a = np.sqrt(grid.dt / grid.dx)
    x = grid.x
    t0 = 0.0
    if start_time is None:
        u = np.zeros(grid.n_x)
        u[grid.center] = 1.0 / grid.dx
    else:
        t0 = start_time
        u = p(t0, x)
    out = np.empty((grid.n_t + 1, grid.n_x))
    ratio = np.full((grid.n_t + 1, grid.n_x), np.nan)
    out[0] = u
    if start_time is not None:
        ratio[0] = 1.0
    for n in range(grid.n_t):
        u = apply_stencil(u, mu) + u * tape.row(n) * a
        if not np.all(np.isfinite(u)) or np.max(np.abs(u)) > BLOWUP:
            raise DivergenceError(n + 1)
        out[n + 1] = u
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            ratio[n + 1] = u / p(t0 + (n + 1) * grid.dt, x)
    if noiseless_check:
        mass = out[-1].sum() * grid.dx
        if abs(mass - 1.0) > 0.05:
            raise MassDriftError(f"total mass drifted to {mass}")
    return FieldPath(grid, out, "pam", ratio=ratio, key=tape.key)


def spatial_average(path, R, normalizer, centering=None):
    """(int_{Q_R} field(t_end) dx - centering) / normalizer, trapezoid on the nodes."""
    grid = path.grid
    centering = 2.0 * R if centering is None else centering
    w = window_weights(grid.x, R, grid.dx)
    return float((np.dot(w, path.final) - centering) / normalizer)


def _path_weights(path, R):
    grid = path.grid
    w = window_weights(grid.x, R, grid.dx)
    if path.case == "pam":
        w = w / p(grid.t_end, grid.x)
    return w


def tangent_projection(path, coeff, tape, R, normalizer, second_order=False):
    """Single pass for D_v F (flat) or D_w G (pam) on the replayed tape.

    The direction is v = psi sigma(u) / (dx * normalizer) with psi the
    backward-propagated window, so the tangent source per step is
    dt * psi * sigma(u)^2 / dx. With second_order, the derivative of D_v F
    along the same v is co-simulated (source 3 dt psi sigma sigma' Z1 / dx).
    """
    tape.check(path.key)
    grid = path.grid
    if R > grid.L - 6 * np.sqrt(grid.t_end) + 1e-9:
        raise ValueError(f"R={R} too close to the domain edge")
    mu = grid.dt / (2 * grid.dx**2)
    a = np.sqrt(grid.dt / grid.dx)
    c = grid.dt / grid.dx
    w = _path_weights(path, R)
    psi = backward_weights(w, mu, grid.n_t)
    z1 = np.zeros(grid.n_x)
    z3 = np.zeros(grid.n_x)
    for n in range(grid.n_t):
        u = path.values[n]
        na = tape.row(n) * a
        s0, s1 = coeff.sigma(u), coeff.sigma_prime(u)
        if second_order:
            z3 = (apply_stencil(z3, mu) + s1 * z3 * na + coeff.sigma_second(u) * z1 * z1 * na
                  + 3.0 * c * psi[n] * s0 * s1 * z1)
        z1 = apply_stencil(z1, mu) + s1 * z1 * na + c * psi[n] * s0 * s0
    proj = float(np.dot(w, z1)) / normalizer**2
    state = TangentState(grid, z1, proj, normalizer)
    if second_order:
        state.second = z3
        state.second_projection = float(np.dot(w, z3)) / normalizer**3
    return state


def flat_batch(grid, coeff, seed, replica_ids, R_list, tangents=True, second_order=True,
               probe_nodes=None, lane=Lane.SOLUTION):
    """Vectorised flat-case run over a block of replicas.

    Returns a dict with, per R, the centered window sums A (u integral - 2R),
    the unnormalised tangent projections T1 and T3, plus the aborted mask and
    optional time series of u at probe nodes.
    """
    grid.validate(max(R_list))
    mu = grid.dt / (2 * grid.dx**2)
    a = np.sqrt(grid.dt / grid.dx)
    c = grid.dt / grid.dx
    keys = [StreamKey(seed, int(r), lane) for r in replica_ids]
    B = len(keys)
    W = np.stack([window_weights(grid.x, R, grid.dx) for R in R_list])
    u = np.ones((B, grid.n_x))
    need_z = tangents and coeff.name != "constant-1"
    psi = backward_weights(W, mu, grid.n_t) if tangents else None
    z1 = np.zeros((len(R_list), B, grid.n_x)) if tangents else None
    z3 = np.zeros_like(z1) if (tangents and second_order and need_z) else None
    probes = None
    if probe_nodes is not None:
        probes = np.empty((grid.n_t + 1, B, len(probe_nodes)))
        probes[0] = u[:, probe_nodes]
    aborted = np.zeros(B, dtype=bool)
    seg_rows = None
    for n in range(grid.n_t):
        if n % SEGMENT_STEPS == 0:
            seg_rows = _noise_rows(grid, keys, n // SEGMENT_STEPS)
        na = seg_rows[n % SEGMENT_STEPS] * a
        s0 = coeff.sigma(u)
        if tangents:
            src = c * psi[n][:, None, :]
            if need_z:
                s1 = coeff.sigma_prime(u)
                if z3 is not None:
                    z3 = (apply_stencil(z3, mu) + s1 * z3 * na + src * (3.0 * s0 * s1) * z1)
                    if not coeff.linear:
                        z3 = z3 + coeff.sigma_second(u) * z1 * z1 * na
                z1 = apply_stencil(z1, mu) + s1 * z1 * na + src * (s0 * s0)
            else:
                z1 = apply_stencil(z1, mu) + src * (s0 * s0)
        u = apply_stencil(u, mu) + s0 * na
        bad = ~np.all(np.isfinite(u), axis=1) | (np.max(np.abs(u), axis=1) > BLOWUP)
        if np.any(bad):
            aborted |= bad
            u[bad] = 1.0
            if tangents:
                z1[:, bad] = 0.0
                if z3 is not None:
                    z3[:, bad] = 0.0
        if probes is not None:
            probes[n + 1] = u[:, probe_nodes]
    R_arr = np.asarray(R_list, dtype=float)
    out = {"A": window_sum(W, u) - 2.0 * R_arr[:, None], "aborted": aborted,
           "u_center": u[:, grid.center].copy()}
    if tangents:
        out["T1"] = window_sum(W, z1)
        out["T3"] = window_sum(W, z3) if z3 is not None else np.zeros((len(R_list), B))
    if probes is not None:
        out["probes"] = probes
    return out


def dump_slices(path, grid, slices):
    """Binary dump: int64 header (n_rows, n_x), float64 (L, t_end), then rows."""
    slices = np.atleast_2d(np.asarray(slices, dtype=np.float64))
    with open(path, "wb") as fh:
        np.array([slices.shape[0], grid.n_x], dtype=np.int64).tofile(fh)
        np.array([grid.L, grid.t_end], dtype=np.float64).tofile(fh)
        slices.tofile(fh)


def load_slices(path):
    with open(path, "rb") as fh:
        n_rows, n_x = np.fromfile(fh, dtype=np.int64, count=2)
        L, t_end = np.fromfile(fh, dtype=np.float64, count=2)
        data = np.fromfile(fh, dtype=np.float64).reshape(n_rows, n_x)
    return (float(L), float(t_end)), data
