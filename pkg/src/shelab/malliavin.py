"""Derivative fields on anchors, the lattice form of D_v(D_v F), and Stein ingredients.

An anchor (s, y) with s = m dt is the noise cell of step m-1 at node k, so
the discrete derivative of u[n] with respect to that cell starts at step m
with mass sigma(u[m-1, k]) / dx at node k and has lag t - s in time.
"""

from dataclasses import dataclass

import numpy as np

from .engine import apply_stencil, backward_weights, window_weights
from .kernels import p
from .noise import StreamKey, draw_segment, SEGMENT_STEPS, Lane


class BudgetExceededError(RuntimeError):
    pass


@dataclass(frozen=True)
class Anchor:
    step: int
    node: int
    pair: tuple | None = None

    def time(self, grid):
        return self.step * grid.dt

    def position(self, grid):
        return grid.x[self.node]

    def validate(self, grid):
        if not 1 <= self.step <= grid.n_t - 1:
            raise ValueError("anchor time must lie strictly inside (0, t_end)")
        if self.pair is not None and not self.pair[0] < self.step:
            raise ValueError("anchor pair must be strictly time ordered")
        return self


@dataclass
class DerivativeField:
    anchor: Anchor
    values: np.ndarray
    order: int


def _noise(tape, n, grid):
    return tape.row(n) * np.sqrt(grid.dt / grid.dx)


def first_derivative_field(path, coeff, tape, anchor):
    """D_{s,y} u on every step; zero before the anchor step."""
    tape.check(path.key)
    grid = path.grid
    anchor.validate(grid)
    mu = grid.dt / (2 * grid.dx**2)
    m, k = anchor.step, anchor.node
    vals = np.zeros_like(path.values)
    d = np.zeros(grid.n_x)
    d[k] = coeff.sigma(path.values[m - 1, k]) / grid.dx
    vals[m] = d
    for n in range(m, grid.n_t):
        d = apply_stencil(d, mu) + coeff.sigma_prime(path.values[n]) * d * _noise(tape, n, grid)
        vals[n + 1] = d
    return DerivativeField(anchor, vals, 1)


def second_derivative_field(path, coeff, tape, pair, first_rz=None, first_sy=None):
    """D_{r,z} D_{s,y} u for pair = Anchor(step of s, node of y, pair=(step of r, node of z))."""
    grid = path.grid
    pair.validate(grid)
    outer = Anchor(pair.pair[0], pair.pair[1])
    inner = Anchor(pair.step, pair.node)
    first_rz = first_rz or first_derivative_field(path, coeff, tape, outer)
    first_sy = first_sy or first_derivative_field(path, coeff, tape, inner)
    mu = grid.dt / (2 * grid.dx**2)
    m, k = pair.step, pair.node
    vals = np.zeros_like(path.values)
    d = np.zeros(grid.n_x)
    d[k] = coeff.sigma_prime(path.values[m - 1, k]) * first_rz.values[m - 1, k] / grid.dx
    vals[m] = d
    for n in range(m, grid.n_t):
        u = path.values[n]
        na = _noise(tape, n, grid)
        d = (apply_stencil(d, mu) + coeff.sigma_prime(u) * d * na
             + coeff.sigma_second(u) * first_rz.values[n] * first_sy.values[n] * na)
        vals[n + 1] = d
    return DerivativeField(pair, vals, 2)


def ratio_field(field, grid):
    """Case-2 derivative of U: divide the u-derivative by p_t(x) slice by slice."""
    out = np.full_like(field.values, np.nan)
    # p underflows far out at small times; those cells become nan
    with np.errstate(invalid="ignore", divide="ignore"):
        for n in range(1, grid.n_t + 1):
            out[n] = field.values[n] / p(n * grid.dt, grid.x)
    return out


def lattice_cells(grid, n_time, n_space, half_width):
    """Coarse (step, node) anchor lattice with trapezoid cell-count weights."""
    steps = np.unique(np.round(np.linspace(1, grid.n_t, n_time)).astype(int))
    lo = int(np.searchsorted(grid.x, -half_width - 1e-9))
    hi = int(np.searchsorted(grid.x, half_width + 1e-9)) - 1
    nodes = np.unique(np.round(np.linspace(lo, hi, n_space)).astype(int))
    wt = _trap_counts(steps, 1, grid.n_t)
    wx = _trap_counts(nodes, lo, hi)
    cells = [(m, k, a * b) for m, a in zip(steps, wt) for k, b in zip(nodes, wx)]
    return cells


def _trap_counts(idx, lo, hi):
    idx = np.asarray(idx, dtype=float)
    if idx.size == 1:
        return np.array([hi - lo + 1.0])
    gaps = np.diff(idx)
    w = np.zeros(idx.size)
    w[:-1] += gaps / 2
    w[1:] += gaps / 2
    w[0] += 0.5
    w[-1] += 0.5
    return w


def full_cells(grid):
    return [(m, k, 1.0) for m in range(1, grid.n_t + 1) for k in range(grid.n_x)]


def dv_dvF(path, coeff, tape, R, normalizer, cells=None, lattice=(6, 6), budget=5e8):
    """D_v(D_v F) as a sum over outer anchor cells c' of v_{c'} |c'| D_{c'}(D_v F).

    Each inner derivative D_{c'}(D_v F) is an exact tangent of the discrete
    D_v F; the anchor lattice is the only approximation. cells=None picks the
    coarse lattice; pass full_cells(grid) for the exact sum.
    """
    tape.check(path.key)
    grid = path.grid
    if cells is None:
        cells = lattice_cells(grid, lattice[0], lattice[1], R + 3 * np.sqrt(grid.t_end))
    cost = float(len(cells)) * grid.n_t * grid.n_x
    if cost > budget:
        raise BudgetExceededError(f"lattice needs ~{cost:.2e} cell updates > budget {budget:.2e}")
    mu = grid.dt / (2 * grid.dx**2)
    c = grid.dt / grid.dx
    w = window_weights(grid.x, R, grid.dx)
    psi = backward_weights(w, mu, grid.n_t)
    # forward Z1 path
    z1 = np.zeros((grid.n_t + 1, grid.n_x))
    for n in range(grid.n_t):
        u = path.values[n]
        z1[n + 1] = (apply_stencil(z1[n], mu) + coeff.sigma_prime(u) * z1[n] * _noise(tape, n, grid)
                     + c * psi[n] * coeff.sigma(u) ** 2)
    steps = np.array([q[0] for q in cells])
    nodes = np.array([q[1] for q in cells])
    wts = np.array([q[2] for q in cells], dtype=float)
    nA = len(cells)
    du = np.zeros((nA, grid.n_x))
    dz = np.zeros((nA, grid.n_x))
    rows = np.arange(nA)
    for n in range(grid.n_t + 1):
        hit = steps == n
        if np.any(hit):
            prev = path.values[n - 1, nodes[hit]]
            du[rows[hit], nodes[hit]] = coeff.sigma(prev) / grid.dx
            dz[rows[hit], nodes[hit]] = coeff.sigma_prime(prev) * z1[n - 1, nodes[hit]] / grid.dx
        if n == grid.n_t:
            break
        u = path.values[n]
        na = _noise(tape, n, grid)
        s0, s1, s2 = coeff.sigma(u), coeff.sigma_prime(u), coeff.sigma_second(u)
        dz = (apply_stencil(dz, mu) + s1 * dz * na + s2 * du * z1[n] * na
              + 2.0 * c * psi[n] * s0 * s1 * du)
        du = apply_stencil(du, mu) + s1 * du * na
    inner = dz @ w / normalizer**2
    outer = psi[steps - 1, nodes] * coeff.sigma(path.values[steps - 1, nodes]) * grid.dt / normalizer
    return float(np.sum(wts * outer * inner))


def probe_batch(grid, coeff, seed, replica_ids, first, second=(), lane=Lane.SOLUTION):
    """Final-time derivative slices for many replicas at once.

    first: list of Anchor; second: list of (outer Anchor index, inner Anchor index)
    referring to entries of `first`. Returns arrays (B, len(first), n_x) and
    (B, len(second), n_x).
    """
    mu = grid.dt / (2 * grid.dx**2)
    a = np.sqrt(grid.dt / grid.dx)
    keys = [StreamKey(seed, int(r), lane) for r in replica_ids]
    B = len(keys)
    nF, nS = len(first), len(second)
    u = np.ones((B, grid.n_x))
    d1 = np.zeros((B, nF, grid.n_x))
    d2 = np.zeros((B, nS, grid.n_x))
    f_steps = np.array([an.step for an in first])
    f_nodes = np.array([an.node for an in first])
    s_steps = np.array([first[j].step for _, j in second], dtype=int)
    s_nodes = np.array([first[j].node for _, j in second], dtype=int)
    outer_idx = np.array([i for i, _ in second], dtype=int)
    inner_idx = np.array([j for _, j in second], dtype=int)
    rows = None
    prev_u = None
    for n in range(grid.n_t + 1):
        for i in np.nonzero(f_steps == n)[0]:
            d1[:, i, f_nodes[i]] = coeff.sigma(prev_u[:, f_nodes[i]]) / grid.dx
        for q in np.nonzero(s_steps == n)[0]:
            k = s_nodes[q]
            d2[:, q, k] = (coeff.sigma_prime(prev_u[:, k]) * prev_d1[:, outer_idx[q], k] / grid.dx)
        if n == grid.n_t:
            break
        if n % SEGMENT_STEPS == 0:
            rows = np.stack([draw_segment(key, n // SEGMENT_STEPS,
                                          (min(SEGMENT_STEPS, grid.n_t - n), grid.n_x))
                             for key in keys], axis=1)
        na = (rows[n % SEGMENT_STEPS] * a)[:, None, :]
        s1 = coeff.sigma_prime(u)[:, None, :]
        prev_u, prev_d1 = u, d1
        if nS:
            s2 = coeff.sigma_second(u)[:, None, :]
            d2 = (apply_stencil(d2, mu) + s1 * d2 * na
                  + s2 * d1[:, outer_idx] * d1[:, inner_idx] * na)
        d1 = apply_stencil(d1, mu) + s1 * d1 * na
        u = apply_stencil(u, mu) + coeff.sigma(u) * na[:, 0, :]
    return d1, d2


@dataclass
class SteinIngredients:
    norm_F_4: float
    norm_inv_DvF_4: float
    norm_inv_DvF_4_winsorized: float
    norm_one_minus_DvF_2: float
    norm_DvDvF_2: float
    rhs_e85: float
    rhs_e85_winsorized: float
    n_nonpositive: int
    inverse_valid: bool
    tail_truncated: bool


def stein_rhs(f4, inv4, one_minus, dvdv):
    return (f4 * inv4 + 2.0) * one_minus + inv4**2 * dvdv


def stein_report(F, DvF, DvDvF, scale=None, clip_fraction=1e-3):
    """Empirical norms of the four ingredients and the assembled bound."""
    F = np.asarray(F, dtype=float)
    D = np.asarray(DvF, dtype=float)
    DD = np.asarray(DvDvF, dtype=float)
    scale = float(np.median(np.abs(D))) if scale is None else scale
    nonpos = int(np.sum(D < -1e-6 * scale)) + int(np.sum(np.abs(D) <= 1e-6 * scale))
    valid = nonpos <= 0.01 * D.size
    f4 = float(np.mean(F**4) ** 0.25)
    one_minus = float(np.sqrt(np.mean((1.0 - D) ** 2)))
    dvdv = float(np.sqrt(np.mean(DD**2)))
    with np.errstate(divide="ignore"):
        inv_raw = float(np.mean(D ** -4.0) ** 0.25)
    floor = np.quantile(D, clip_fraction)
    inv_w = float(np.mean(np.maximum(D, floor) ** -4.0) ** 0.25)
    return SteinIngredients(f4, inv_raw, inv_w, one_minus, dvdv,
                            stein_rhs(f4, inv_raw, one_minus, dvdv),
                            stein_rhs(f4, inv_w, one_minus, dvdv),
                            nonpos, bool(valid), bool(np.any(D < floor)))
