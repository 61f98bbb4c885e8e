import numpy as np
import pytest
from scipy import special

from shelab.stats import (ConfigMismatchError, DegenerateSampleError, DensityEstimate,
                          EVAL_GRID, EnsembleAccumulator, accumulate, default_bandwidth,
                          kde_density, ks_statistic, merge, normal_pdf, rate_fit, standardize,
                          sup_distance, tv_distance, variance_check)
from shelab import oracles


def _acc(values, key="k"):
    return accumulate(EnsembleAccumulator(key), values, config_key=key)


def test_two_point_merge():
    m = merge(_acc([0.0]), _acc([2.0]))
    assert m.count == 2 and m.mean == 1.0 and m.variance == 2.0


def test_merge_order_invariance_and_concatenation():
    rng = np.random.default_rng(0)
    parts = [rng.normal(size=n) * 3 + 5 for n in (10, 1000, 1, 333)]
    ref = _acc(np.concatenate(parts))
    accs = [_acc(p) for p in parts]
    a = merge(merge(accs[0], accs[1]), merge(accs[2], accs[3]))
    b = merge(accs[3], merge(accs[2], merge(accs[1], accs[0])))
    for k in range(2, 9):
        assert a.central_moment(k) == pytest.approx(b.central_moment(k), rel=1e-12)
        assert a.central_moment(k) == pytest.approx(ref.central_moment(k), rel=1e-10)
    assert a.mean == pytest.approx(ref.mean, rel=1e-14)


def test_streaming_fourth_moment_and_stability():
    rng = np.random.default_rng(1)
    x = rng.normal(size=10**6)
    acc = EnsembleAccumulator("k")
    for block in np.split(x + 1e8, 100):
        acc = accumulate(acc, block, config_key="k")
    assert acc.central_moment(4) == pytest.approx(3.0, abs=0.05)
    assert acc.variance == pytest.approx(x.var(ddof=1), rel=1e-6)
    assert acc.sample_array().size == 10**6


def test_sample_cap_and_aux():
    acc = accumulate(EnsembleAccumulator("k"), np.zeros(10), {"DvF": np.ones(10)}, "k")
    acc = accumulate(acc, np.zeros(5), {"DvF": np.ones(5)}, "k")
    assert acc.aux_array("DvF").size == 15


def test_config_mismatch():
    with pytest.raises(ConfigMismatchError):
        accumulate(_acc([1.0], "a"), [2.0], config_key="b")
    with pytest.raises(ConfigMismatchError):
        merge(_acc([1.0], "a"), _acc([2.0], "b"))


def test_standardize_exact():
    x = np.random.default_rng(2).gamma(2.0, size=5000)
    z = standardize(x)
    assert abs(z.mean()) < 1e-12
    assert z.var(ddof=1) == pytest.approx(1.0, abs=1e-12)


def test_kde_on_normal_draws():
    rng = np.random.default_rng(3)
    d = kde_density(rng.normal(size=10**5))
    assert sup_distance(d) < 0.015
    assert np.all(d.values >= 0)
    h = d.bandwidth
    wide = np.arange(-5 - 5 * h, 5 + 5 * h, 0.01)
    total = np.trapezoid(kde_density(rng.normal(size=10**5), h, wide).values, wide)
    assert total == pytest.approx(1.0, abs=1e-3)


def test_kde_sup_distance_drops_with_n():
    means = []
    for n in (2000, 8000, 32000):
        means.append(np.mean([sup_distance(kde_density(np.random.default_rng(s).normal(size=n)))
                              for s in range(6)]))
    assert means[0] > means[1] > means[2]


def test_kde_errors():
    with pytest.raises(ValueError):
        kde_density(np.zeros(999))
    with pytest.raises(DegenerateSampleError):
        kde_density(np.ones(2000))


def test_default_bandwidth_rule():
    x = np.random.default_rng(4).normal(size=4000)
    iqr = np.subtract(*np.percentile(x, [75, 25]))
    assert default_bandwidth(x) == pytest.approx(0.9 * min(x.std(ddof=1), iqr / 1.34) * 4000 ** -0.2)


def _exact(f):
    return DensityEstimate(EVAL_GRID, f(EVAL_GRID), 0.0, 0)


def test_distances_against_shifted_normals():
    assert sup_distance(_exact(normal_pdf)) == 0.0
    assert tv_distance(_exact(normal_pdf)) == 0.0
    shifted = _exact(lambda x: normal_pdf(x - 0.1))
    fine = np.arange(-5, 5, 1e-4)
    ref = np.max(np.abs(normal_pdf(fine - 0.1) - normal_pdf(fine)))
    assert ref == pytest.approx(0.0242, abs=1e-4)
    assert sup_distance(shifted) == pytest.approx(ref, abs=1e-5)
    assert tv_distance(shifted) == pytest.approx(2 * special.ndtr(0.05) - 1, abs=1e-6)
    wide = _exact(lambda x: normal_pdf(x / 1.1) / 1.1)
    ref = np.max(np.abs(normal_pdf(fine / 1.1) / 1.1 - normal_pdf(fine)))
    assert sup_distance(wide) == pytest.approx(ref, abs=1e-5)
    assert 0 <= tv_distance(wide) <= 1


def test_distances_permutation_invariant():
    x = np.random.default_rng(5).normal(size=3000)
    a = kde_density(x)
    b = kde_density(x[::-1].copy())
    assert sup_distance(a) == pytest.approx(sup_distance(b), rel=1e-12)
    assert tv_distance(a) == pytest.approx(tv_distance(b), rel=1e-12)


def test_ks_statistic():
    assert ks_statistic(np.random.default_rng(6).normal(size=10**4)) < 0.02


def test_rate_fit_examples():
    R = np.array([4, 8, 16, 32])
    fit = rate_fit(list(zip(R, R ** -0.5)))
    assert fit.slope == pytest.approx(-0.5, abs=1e-12)
    # local slope is -1/2 + 1/(2 log R); the ladder regression lands just above -0.3
    fit = rate_fit(list(zip(R, np.sqrt(np.log(R)) / np.sqrt(R))))
    assert fit.slope == pytest.approx(-0.280959, abs=1e-6)
    assert rate_fit(list(zip(R, np.ones(4)))).slope == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        rate_fit([(4, 1.0), (8, 0.0), (16, 1.0)])
    with pytest.raises(ValueError):
        rate_fit([(4, 1.0), (8, 1.0)])


def test_variance_check_targets():
    R = [4, 8, 16, 32]
    flat = variance_check([oracles.constant_sigma_variance(r, 0.5) for r in R], R, 0.5, "flat",
                          lambda s: 1.0)
    assert flat.target == pytest.approx(1.0)
    np.testing.assert_allclose(flat.ratios, flat.finite_R_targets, rtol=1e-8)
    ident = variance_check([1.0] * 4, R, 0.5, "flat", oracles.renewal_closed_form)
    assert ident.target == pytest.approx(1.3449356503313905, rel=1e-10)
    pam = variance_check([1.0, 2.0, 3.0], [16, 32, 64], 0.5, "pam")
    assert pam.target == 1.0 and len(pam.ratios) == 3


def test_holder_fit_recovers_brownian_exponent():
    from shelab.stats import holder_fit
    rng = np.random.default_rng(4)
    dt = 1e-3
    paths = np.cumsum(rng.normal(scale=np.sqrt(dt), size=(513, 4000)), axis=0)
    fit = holder_fit(paths, dt, dt * 2.0 ** np.arange(1, 8))
    assert fit.slope == pytest.approx(0.5, abs=0.02)
    with pytest.raises(ValueError):
        holder_fit(paths, dt, [dt / 4])
