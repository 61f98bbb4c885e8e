"""Replica ensembles: fixed id blocks, a worker pool, ordered merge and a result cache.

Replica r always draws from StreamKey(seed, r, lane), and blocks are merged in
replica-id order, so results do not depend on the number of workers.
"""

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import oracles
from .config import CACHE_ENV
from .engine import flat_batch
from .noise import GridSpec
from .pam import PamGrid, pam_batch
from .stats import EnsembleAccumulator, accumulate

MAX_ABORTED_FRACTION = 1e-3


def replica_blocks(n, block):
    return [(a, min(a + block, n)) for a in range(0, n, block)]


def build_grid(cfg):
    R_max = max(cfg.r_ladder)
    if cfg.case == "pam":
        return PamGrid.build(cfg.t_end, R_max, h_f=cfg.h_f)
    return GridSpec.auto(R_max, cfg.t_end, dx=cfg.dx)


def run_block(cfg, start, stop, grid=None):
    """Raw per-replica arrays for replicas start..stop-1."""
    grid = grid or build_grid(cfg)
    ids = range(start, stop)
    if cfg.case == "pam":
        out = pam_batch(grid, cfg.seed, ids, cfg.r_ladder, tangents=cfg.tangents,
                        second_order=cfg.second_order)
    else:
        out = flat_batch(grid, cfg.coefficient(), cfg.seed, ids, cfg.r_ladder,
                         tangents=cfg.tangents, second_order=cfg.second_order)
    keep = ("A", "T1", "T3", "aborted")
    return {k: out[k] for k in keep if k in out}


def _block_task(args):
    cfg, start, stop = args
    return run_block(cfg, start, stop)


def cache_dir():
    return os.environ.get(CACHE_ENV) or os.path.join(os.path.expanduser("~"), ".cache", "shelab")


@dataclass
class EnsembleResult:
    """Raw arrays are (n_R, n_replicas); F, DvF, DvDvF drop aborted replicas."""

    config_hash: str
    r_ladder: tuple
    A: np.ndarray
    aborted: np.ndarray
    normalizers: np.ndarray
    T1: np.ndarray | None = None
    T3: np.ndarray | None = None

    @property
    def n_aborted(self):
        return int(self.aborted.sum())

    @property
    def failed(self):
        return self.n_aborted > MAX_ABORTED_FRACTION * self.aborted.size

    @property
    def kept(self):
        return ~self.aborted

    @property
    def F(self):
        return self.A[:, self.kept] / self.normalizers[:, None]

    @property
    def DvF(self):
        return None if self.T1 is None else self.T1[:, self.kept] / self.normalizers[:, None] ** 2

    @property
    def DvDvF(self):
        return None if self.T3 is None else self.T3[:, self.kept] / self.normalizers[:, None] ** 3

    def accumulators(self):
        """One accumulator of F per R, with D_vF and D_v(D_vF) as auxiliary scalars."""
        accs = []
        F, D1, D3 = self.F, self.DvF, self.DvDvF
        for i in range(len(self.r_ladder)):
            aux = None if D1 is None else {"DvF": D1[i], "DvDvF": D3[i]}
            accs.append(accumulate(EnsembleAccumulator(self.config_hash), F[i], aux,
                                   self.config_hash))
        return accs


def normalizers(cfg, A, kept):
    if cfg.normalizer == "quadrature":
        return np.array([np.sqrt(oracles.constant_sigma_variance(R, cfg.t_end))
                         for R in cfg.r_ladder])
    return A[:, kept].std(axis=1, ddof=1)


def run_ensemble(cfg, workers=None, use_cache=True):
    """Run (or load) every replica of cfg; merge blocks in replica-id order."""
    key = cfg.config_hash()
    path = os.path.join(cache_dir(), f"{key}.npz")
    if use_cache and os.path.exists(path):
        with np.load(path) as z:
            raw = {k: z[k] for k in z.files}
    else:
        workers = cfg.workers if workers is None else workers
        tasks = [(cfg, a, b) for a, b in replica_blocks(cfg.replicas, cfg.block)]
        if workers == 1:
            grid = build_grid(cfg)
            parts = [run_block(cfg, a, b, grid) for _, a, b in tasks]
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                parts = list(pool.map(_block_task, tasks))
        raw = {k: np.concatenate([p[k] for p in parts], axis=-1) for k in parts[0]}
        if use_cache:
            os.makedirs(cache_dir(), exist_ok=True)
            tmp = path + f".{os.getpid()}.tmp.npz"
            np.savez(tmp, **raw)
            os.replace(tmp, path)
    kept = ~raw["aborted"]
    norm = normalizers(cfg, raw["A"], kept)
    return EnsembleResult(key, tuple(cfg.r_ladder), raw["A"], raw["aborted"], norm,
                          raw.get("T1"), raw.get("T3"))
