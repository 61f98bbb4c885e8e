"""Dirac-started PAM in characteristic coordinates.

With eta = x t / tau the ratio V(tau, eta) = U(tau, eta tau / t) solves

    dV/dtau = (t/tau)^2 / 2 * V_eta_eta + V * dW(tau, eta tau / t),

so the box Q_R is fixed in eta and no kernel ever underflows. Time runs in
epochs tau_e = t 4^(e-E); each epoch is uniform in the diffusion clock
-t^2/tau with mu = 1/4, and the eta-step halves from one epoch to the next,
so every epoch resolves the kernel spread t / sqrt(tau) with the same number
of nodes. V starts at 1 at tau_0 (U -> 1 as tau -> 0).
"""

from dataclasses import dataclass

import numpy as np

from .engine import BLOWUP, apply_stencil, window_sum, window_weights
from .noise import SEGMENT_STEPS, Lane, StreamKey, draw_segment

MIN_RATIO = 4000.0


@dataclass(frozen=True)
class Epoch:
    tau0: float
    tau1: float
    h: float
    M: int
    taus: np.ndarray

    @property
    def n_nodes(self):
        return 2 * self.M

    @property
    def n_steps(self):
        return self.taus.size - 1

    @property
    def eta(self):
        return (np.arange(2 * self.M) - self.M) * self.h


@dataclass(frozen=True)
class PamGrid:
    t_end: float
    R_max: float
    h_f: float
    epochs: tuple

    @classmethod
    def build(cls, t_end, R_max, h_f=0.1, n_epochs=None, margin=6.0):
        if n_epochs is None:
            n_epochs = int(np.ceil(np.log(MIN_RATIO * R_max**2 / t_end) / np.log(4.0)))
        E = n_epochs
        epochs = []
        for e in range(E):
            tau0 = t_end * 4.0 ** (e - E)
            tau1 = t_end * 4.0 ** (e + 1 - E)
            h = h_f * 2.0 ** (E - 1 - e)
            M = int(np.ceil((R_max + margin * t_end / np.sqrt(tau0)) / h))
            span = t_end**2 * (1.0 / tau0 - 1.0 / tau1)
            n = int(np.ceil(span / (h * h / 2.0) - 1e-9))
            clock = -t_end**2 / tau0 + span * np.arange(n + 1) / n
            taus = -t_end**2 / clock
            taus[-1] = tau1
            epochs.append(Epoch(tau0, tau1, h, M, taus))
        return cls(t_end, R_max, h_f, tuple(epochs))

    @property
    def n_steps(self):
        return sum(ep.n_steps for ep in self.epochs)

    @property
    def node_steps(self):
        return sum(ep.n_steps * ep.n_nodes for ep in self.epochs)

    @property
    def final(self):
        return self.epochs[-1]


def epoch_mu(grid, ep):
    dclock = grid.t_end**2 * (1.0 / ep.tau0 - 1.0 / ep.tau1) / ep.n_steps
    return dclock / (2.0 * ep.h**2)


def noise_scale(grid, ep):
    """Per-step factor sqrt(dtau / dx_phys) with dx_phys = tau h / t (left point)."""
    dtau = np.diff(ep.taus)
    dx = ep.taus[:-1] * ep.h / grid.t_end
    return np.sqrt(dtau / dx), dtau / dx


def refine_map(old, new):
    """Index pairs for the refining restriction old grid -> new grid."""
    i = np.arange(new.n_nodes)
    pos = (i - new.M) * new.h / old.h + old.M
    j0 = np.floor(pos + 1e-9).astype(int)
    frac = pos - j0
    j1 = np.where(frac > 1e-9, j0 + 1, j0)
    return j0 % old.n_nodes, j1 % old.n_nodes


def regrid(v, old, new):
    j0, j1 = refine_map(old, new)
    return 0.5 * (v[..., j0] + v[..., j1])


def regrid_transpose(w, old, new):
    j0, j1 = refine_map(old, new)
    out = np.zeros(w.shape[:-1] + (old.n_nodes,))
    np.add.at(out, (..., j0), 0.5 * w)
    np.add.at(out, (..., j1), 0.5 * w)
    return out


def backward_weights(grid, W):
    """psi for every (epoch, step), as a list of arrays (n_steps, nR, n_nodes)."""
    out = [None] * len(grid.epochs)
    cur = W
    for e in range(len(grid.epochs) - 1, -1, -1):
        ep = grid.epochs[e]
        mu = epoch_mu(grid, ep)
        arr = np.empty((ep.n_steps,) + cur.shape)
        for k in range(ep.n_steps - 1, -1, -1):
            arr[k] = cur
            cur = apply_stencil(cur, mu)
        out[e] = arr
        if e > 0:
            cur = regrid_transpose(cur, grid.epochs[e - 1], ep)
    return out


def window(grid, R_list):
    ep = grid.final
    return np.stack([window_weights(ep.eta, R, ep.h) for R in R_list])


def pam_batch(grid, seed, replica_ids, R_list, tangents=True, second_order=True,
              lane=Lane.SOLUTION, probe_eta=(0.0, 0.7)):
    """Run a block of replicas; returns A (window sum - 2R), T1, T3 per R."""
    keys = [StreamKey(seed, int(r), lane) for r in replica_ids]
    B = len(keys)
    W = window(grid, R_list)
    psi = backward_weights(grid, W) if tangents else None
    ep0 = grid.epochs[0]
    v = np.ones((B, ep0.n_nodes))
    nR = len(R_list)
    y1 = np.zeros((nR, B, ep0.n_nodes)) if tangents else None
    y3 = np.zeros_like(y1) if (tangents and second_order) else None
    aborted = np.zeros(B, dtype=bool)
    seg = 0
    for e, ep in enumerate(grid.epochs):
        if e > 0:
            prev = grid.epochs[e - 1]
            v = regrid(v, prev, ep)
            if tangents:
                y1 = regrid(y1, prev, ep)
                if y3 is not None:
                    y3 = regrid(y3, prev, ep)
        mu = epoch_mu(grid, ep)
        a, c = noise_scale(grid, ep)
        rows = None
        for k in range(ep.n_steps):
            if k % SEGMENT_STEPS == 0:
                n_rows = min(SEGMENT_STEPS, ep.n_steps - k)
                rows = np.stack([draw_segment(key, seg, (n_rows, ep.n_nodes)) for key in keys],
                                axis=1)
                seg += 1
            na = rows[k % SEGMENT_STEPS] * a[k]
            if tangents:
                src = c[k] * psi[e][k][:, None, :]
                if y3 is not None:
                    y3 = apply_stencil(y3, mu) + y3 * na + 3.0 * src * (v * y1)
                y1 = apply_stencil(y1, mu) + y1 * na + src * (v * v)
            v = apply_stencil(v, mu) + v * na
            bad = ~np.all(np.isfinite(v), axis=1) | (np.max(np.abs(v), axis=1) > BLOWUP)
            if np.any(bad):
                aborted |= bad
                v[bad] = 1.0
                if tangents:
                    y1[:, bad] = 0.0
                    if y3 is not None:
                        y3[:, bad] = 0.0
    R_arr = np.asarray(R_list, dtype=float)
    ep = grid.final
    idx = [int(round(q / ep.h)) + ep.M for q in probe_eta]
    out = {"A": window_sum(W, v) - 2.0 * R_arr[:, None], "aborted": aborted,
           "probes": v[:, idx].copy()}
    if tangents:
        out["T1"] = window_sum(W, y1)
        out["T3"] = window_sum(W, y3) if y3 is not None else np.zeros((nR, B))
    return out


def noiseless_final(grid):
    """V stays identically 1 without noise: the stencil and regrid preserve constants."""
    v = np.ones(grid.epochs[0].n_nodes)
    for e, ep in enumerate(grid.epochs):
        if e > 0:
            v = regrid(v, grid.epochs[e - 1], ep)
        mu = epoch_mu(grid, ep)
        for _ in range(ep.n_steps):
            v = apply_stencil(v, mu)
    return v
