"""Monte Carlo laboratory for spatial averages of the stochastic heat equation."""

from .coefficients import CONSTANT_ONE, IDENTITY, TWO_PLUS_SINE, get_preset
from .config import RunConfig, load_config
from .ensemble import run_ensemble
from .noise import GridSpec, Lane, StreamKey

__all__ = ["CONSTANT_ONE", "IDENTITY", "TWO_PLUS_SINE", "GridSpec", "Lane", "RunConfig",
           "StreamKey", "get_preset", "load_config", "run_ensemble"]
