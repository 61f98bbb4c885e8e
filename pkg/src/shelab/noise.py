"""Counter-based white-noise streams and replayable noise tapes."""

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

SEGMENT_STEPS = 50
TAPE_MEMORY_BUDGET = 512 * 2**20


class Lane(IntEnum):
    SOLUTION = 0
    DERIVATIVE = 1
    QUADRATURE = 2


class MemoryBudgetError(MemoryError):
    pass


class TapeMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    """Periodic grid on [-L, L) with n_x cells and n_t explicit steps up to t_end."""

    L: float
    n_x: int
    t_end: float
    n_t: int

    @property
    def dx(self):
        return 2.0 * self.L / self.n_x

    @property
    def dt(self):
        return self.t_end / self.n_t

    @property
    def x(self):
        return -self.L + self.dx * np.arange(self.n_x)

    @property
    def center(self):
        return self.n_x // 2

    def validate(self, R_max=None):
        if self.n_x % 2:
            raise ValueError("n_x must be even so that x = 0 is a node")
        if self.dt > self.dx**2 / 2.0 * (1 + 1e-12):
            raise ValueError(f"unstable grid: dt={self.dt} > dx^2/2={self.dx**2 / 2}")
        if R_max is not None and self.L < R_max + 6.0 * np.sqrt(self.t_end) - 1e-12:
            raise ValueError(f"L={self.L} too small for R={R_max}")
        return self

    @classmethod
    def auto(cls, R_max, t_end, dx=0.1):
        """Smallest grid with the required margin, dt = dx^2 / 2."""
        half = int(np.ceil((R_max + 6.0 * np.sqrt(t_end)) / dx))
        n_t = int(np.ceil(t_end / (dx * dx / 2.0) - 1e-9))
        return cls(L=half * dx, n_x=2 * half, t_end=t_end, n_t=n_t).validate(R_max)


@dataclass(frozen=True)
class StreamKey:
    master_seed: int
    replica_id: int
    lane: Lane = Lane.SOLUTION

    def words(self):
        ss = np.random.SeedSequence([int(self.master_seed) & (2**64 - 1),
                                     int(self.replica_id), int(self.lane)])
        return ss.generate_state(2, np.uint64)


def derive_stream(key, segment=0):
    """Philox generator whose output depends only on (key, segment)."""
    bg = np.random.Philox(key=key.words(), counter=[0, 0, int(segment), 0])
    return np.random.Generator(bg)


def draw_segment(key, segment, shape):
    return derive_stream(key, segment).standard_normal(shape)


@dataclass
class NoiseTape:
    """Standard normal draws xi[n, j] for every step and cell of a grid.

    In regenerable mode the draws are recomputed per segment of SEGMENT_STEPS
    steps; in memory mode they are held in `increments`.
    """

    grid: GridSpec
    key: StreamKey
    increments: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def replayable(self):
        return True

    def segment(self, k):
        if self.increments is not None:
            return self.increments[k * SEGMENT_STEPS:(k + 1) * SEGMENT_STEPS]
        if k not in self._cache:
            rows = min(SEGMENT_STEPS, self.grid.n_t - k * SEGMENT_STEPS)
            self._cache.clear()
            self._cache[k] = draw_segment(self.key, k, (rows, self.grid.n_x))
        return self._cache[k]

    def row(self, n):
        return self.segment(n // SEGMENT_STEPS)[n % SEGMENT_STEPS]

    def array(self):
        if self.increments is not None:
            return self.increments
        n_seg = -(-self.grid.n_t // SEGMENT_STEPS)
        return np.concatenate([self.segment(k) for k in range(n_seg)])

    def walsh_increments(self):
        """Delta W = xi * sqrt(dt dx) on every cell."""
        return self.array() * np.sqrt(self.grid.dt * self.grid.dx)

    def check(self, key):
        if key != self.key:
            raise TapeMismatchError(f"tape built for {self.key}, used with {key}")


def sample_tape(grid, key, mode="memory", budget=TAPE_MEMORY_BUDGET):
    grid.validate()
    tape = NoiseTape(grid=grid, key=key)
    if mode == "regenerable":
        return tape
    nbytes = grid.n_t * grid.n_x * 8
    if nbytes > budget:
        raise MemoryBudgetError(
            f"tape needs {nbytes / 2**20:.0f} MiB > budget; use mode='regenerable'")
    tape.increments = tape.array()
    return tape
