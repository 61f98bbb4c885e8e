"""Mergeable ensemble moments, kernel density estimates and rate fits."""

from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

MAX_ORDER = 8
SAMPLE_CAP = 10**6
EVAL_GRID = np.round(np.arange(-500, 501) * 0.01, 10)


class ConfigMismatchError(ValueError):
    pass


class DegenerateSampleError(ValueError):
    pass


def _central_sums(x):
    x = np.asarray(x, dtype=float)
    m = x.mean()
    d = x - m
    sums = np.zeros(MAX_ORDER + 1)
    powd = np.ones_like(d)
    for k in range(MAX_ORDER + 1):
        sums[k] = powd.sum()
        powd = powd * d
    sums[1] = 0.0
    return x.size, m, sums


def _merge_sums(n_a, m_a, s_a, n_b, m_b, s_b):
    # Pebay's pairwise update for central power sums of every order
    n = n_a + n_b
    if n_a == 0:
        return n_b, m_b, s_b.copy()
    if n_b == 0:
        return n_a, m_a, s_a.copy()
    delta = m_b - m_a
    mean = m_a + delta * n_b / n
    da = -delta * n_b / n
    db = delta * n_a / n
    out = np.zeros(MAX_ORDER + 1)
    for p in range(MAX_ORDER + 1):
        tot = 0.0
        for k in range(p + 1):
            c = special.comb(p, k, exact=True)
            tot += c * (s_a[p - k] * da**k + s_b[p - k] * db**k)
        out[p] = tot
    out[0] = n
    out[1] = 0.0
    return n, mean, out


@dataclass
class EnsembleAccumulator:
    """Streaming count, mean and central power sums up to order 8.

    Raw samples and per-replica auxiliary scalars are kept up to SAMPLE_CAP.
    """

    config_key: str = ""
    count: int = 0
    mean: float = 0.0
    sums: np.ndarray = field(default_factory=lambda: np.zeros(MAX_ORDER + 1))
    samples: list = field(default_factory=list)
    aux: dict = field(default_factory=dict)

    def central_moment(self, k):
        return self.sums[k] / self.count

    @property
    def variance(self):
        return self.sums[2] / (self.count - 1)

    def sample_array(self):
        return np.concatenate(self.samples) if self.samples else np.empty(0)

    def aux_array(self, name):
        return np.concatenate(self.aux.get(name, [])) if self.aux.get(name) else np.empty(0)


def accumulate(acc, values, aux=None, config_key=None):
    """Fold a block of replica results into the accumulator (returns a new one)."""
    if config_key is not None and acc.config_key and config_key != acc.config_key:
        raise ConfigMismatchError(f"{config_key} != {acc.config_key}")
    values = np.atleast_1d(np.asarray(values, dtype=float))
    n_b, m_b, s_b = _central_sums(values)
    n, m, s = _merge_sums(acc.count, acc.mean, acc.sums, n_b, m_b, s_b)
    kept = sum(len(a) for a in acc.samples)
    samples = list(acc.samples)
    if kept < SAMPLE_CAP:
        samples.append(values[:SAMPLE_CAP - kept])
    new_aux = {k: list(v) for k, v in acc.aux.items()}
    for k, v in (aux or {}).items():
        new_aux.setdefault(k, []).append(np.atleast_1d(np.asarray(v, dtype=float)))
    return EnsembleAccumulator(config_key or acc.config_key, n, m, s, samples, new_aux)


def merge(a, b):
    if a.config_key and b.config_key and a.config_key != b.config_key:
        raise ConfigMismatchError(f"{a.config_key} != {b.config_key}")
    n, m, s = _merge_sums(a.count, a.mean, a.sums, b.count, b.mean, b.sums)
    aux = {k: list(v) for k, v in a.aux.items()}
    for k, v in b.aux.items():
        aux.setdefault(k, []).extend(v)
    samples = list(a.samples) + list(b.samples)
    return EnsembleAccumulator(a.config_key or b.config_key, n, m, s, samples, aux)


def standardize(x):
    """(x - mean) / sd with the unbiased sd: sample mean 0 and variance 1."""
    x = np.asarray(x, dtype=float)
    return (x - x.mean()) / x.std(ddof=1)


@dataclass
class DensityEstimate:
    grid: np.ndarray
    values: np.ndarray
    bandwidth: float
    n: int


def default_bandwidth(x):
    x = np.asarray(x, dtype=float)
    iqr = np.subtract(*np.percentile(x, [75, 25]))
    scale = min(x.std(ddof=1), iqr / 1.34)
    return 0.9 * scale * x.size ** (-0.2)


def kde_density(samples, bandwidth=None, grid=None):
    """Gaussian kernel density on [-5, 5] with step 0.01."""
    x = np.asarray(samples, dtype=float)
    if x.size < 1000:
        raise ValueError(f"need at least 1000 samples, got {x.size}")
    h = default_bandwidth(x) if bandwidth is None else float(bandwidth)
    if not h > 0:
        raise DegenerateSampleError("bandwidth is zero: samples are degenerate")
    grid = EVAL_GRID if grid is None else np.asarray(grid)
    vals = _binned_kde(x, h, grid)
    return DensityEstimate(grid, vals, h, x.size)


def _binned_kde(x, h, grid, chunk=2000):
    # exact sum over samples, chunked to bound memory
    out = np.zeros(grid.size)
    xs = np.sort(x)
    for i in range(0, xs.size, chunk):
        d = (grid[:, None] - xs[None, i:i + chunk]) / h
        out += np.exp(-0.5 * d * d).sum(axis=1)
    return out / (xs.size * h * np.sqrt(2 * np.pi))


def normal_pdf(x):
    return np.exp(-0.5 * np.asarray(x) ** 2) / np.sqrt(2 * np.pi)


def sup_distance(d):
    return float(np.max(np.abs(d.values - normal_pdf(d.grid))))


def tv_distance(d):
    return float(0.5 * np.trapezoid(np.abs(d.values - normal_pdf(d.grid)), d.grid))


def ks_statistic(samples):
    return float(stats.kstest(np.asarray(samples), "norm").statistic)


@dataclass
class RateFit:
    R: np.ndarray
    distances: np.ndarray
    slope: float
    intercept: float
    slope_stderr: float


def rate_fit(ladder):
    R = np.array([float(r) for r, _ in ladder])
    d = np.array([float(v) for _, v in ladder])
    if R.size < 3:
        raise ValueError("rate fit needs at least 3 ladder points")
    if np.any(d <= 0):
        raise ValueError("distances must be positive")
    res = stats.linregress(np.log(R), np.log(d))
    return RateFit(R, d, float(res.slope), float(res.intercept), float(res.stderr))


@dataclass
class VarianceReport:
    case: str
    t: float
    R: list
    ratios: list
    target: float
    finite_R_targets: list


def variance_check(variances, R_list, t, case, oracle=None):
    """Ratios sigma^2/R (flat) or Sigma^2/(R log R) (pam) and their targets.

    For flat, `oracle` is the second-moment function xi(s); the limit is
    2 int_0^t xi. For pam the limit is 2t.
    """
    from scipy import integrate
    from . import oracles
    R_arr = np.asarray(R_list, dtype=float)
    v = np.asarray(variances, dtype=float)
    if case == "flat":
        target = 2.0 * integrate.quad(oracle, 0.0, t, epsabs=0.0, epsrel=1e-12)[0]
        finite = [oracles.flat_variance(R, t, oracle) / R for R in R_arr]
        ratios = v / R_arr
    else:
        target = 2.0 * t
        finite = [oracles.pam_variance(R, t) / (R * np.log(R)) for R in R_arr]
        ratios = v / (R_arr * np.log(R_arr))
    return VarianceReport(case, t, list(R_arr), list(ratios), target, finite)


def holder_fit(series, dt, lags):
    """Log-log slope of ||u(t) - u(t - h)||_2 against h, t the last row of series.

    series has shape (n_steps + 1, n_replicas); lags are multiples of dt.
    """
    series = np.asarray(series, dtype=float)
    steps = [int(round(h / dt)) for h in lags]
    if min(steps) < 1 or max(steps) >= series.shape[0]:
        raise ValueError("lags must lie between dt and the run length")
    norms = [float(np.sqrt(np.mean((series[-1] - series[-1 - k]) ** 2))) for k in steps]
    return rate_fit(list(zip(np.asarray(steps) * dt, norms)))
