import numpy as np
import pytest

from shelab import oracles
from shelab.engine import apply_stencil
from shelab.pam import (PamGrid, backward_weights, epoch_mu, noiseless_final, pam_batch, regrid,
                        regrid_transpose, window)


def test_grid_layout():
    g = PamGrid.build(0.5, 64, h_f=0.2)
    assert len(g.epochs) == 13
    assert g.epochs[0].tau0 == pytest.approx(0.5 * 4.0**-13)
    assert g.final.tau1 == 0.5 and g.final.h == pytest.approx(0.2)
    for a, b in zip(g.epochs, g.epochs[1:]):
        assert a.tau1 == b.tau0
        assert a.h == pytest.approx(2 * b.h)
    for ep in g.epochs:
        assert epoch_mu(g, ep) == pytest.approx(0.25, rel=1e-12)
        assert ep.M * ep.h >= 64 + 6 * 0.5 / np.sqrt(ep.tau0)
        assert np.all(np.diff(ep.taus) > 0)


def test_noiseless_run_stays_one():
    np.testing.assert_array_equal(noiseless_final(PamGrid.build(0.5, 4, h_f=0.2)), 1.0)


def test_regrid_transpose_is_adjoint():
    g = PamGrid.build(0.5, 2, h_f=0.2)
    old, new = g.epochs[2], g.epochs[3]
    rng = np.random.default_rng(0)
    v = rng.normal(size=old.n_nodes)
    w = rng.normal(size=new.n_nodes)
    assert np.dot(regrid(v, old, new), w) == pytest.approx(np.dot(v, regrid_transpose(w, old, new)),
                                                           rel=1e-12)


def test_backward_weights_propagate_window():
    g = PamGrid.build(0.5, 2, h_f=0.2)
    W = window(g, [2])
    psi = backward_weights(g, W)
    rng = np.random.default_rng(1)
    ep0 = g.epochs[0]
    v = rng.normal(size=ep0.n_nodes)
    # psi[e][k] weighs the state right after step k of epoch e
    start = np.dot(psi[0][0][0], apply_stencil(v, epoch_mu(g, ep0)))
    for e, ep in enumerate(g.epochs):
        if e:
            v = regrid(v, g.epochs[e - 1], ep)
        mu = epoch_mu(g, ep)
        for _ in range(ep.n_steps):
            v = apply_stencil(v, mu)
    assert np.dot(W[0], v) == pytest.approx(start, rel=1e-10)


def test_ensemble_ratio_properties():
    g = PamGrid.build(0.5, 2, h_f=0.2)
    out = pam_batch(g, 3, range(3000), [2], tangents=True, second_order=False)
    U = out["probes"]
    se = U.std(axis=0, ddof=1) / np.sqrt(len(U))
    assert np.all(np.abs(U.mean(axis=0) - 1) < 3 * se)
    v = U.var(axis=0, ddof=1)
    se_v = np.sqrt((np.mean((U - U.mean(axis=0)) ** 4, axis=0) - v**2) / len(U))
    assert abs(v[0] - v[1]) < 3 * np.hypot(*se_v)
    assert np.mean(U[:, 0] ** 2) == pytest.approx(float(oracles.pam_second_moment(0.5)), rel=0.05)
    A = out["A"][0]
    assert A.var(ddof=1) == pytest.approx(oracles.pam_variance(2, 0.5), rel=0.1)
    T1 = out["T1"][0]
    assert np.all(T1 > 0)
    assert T1.mean() == pytest.approx(A.var(ddof=1), rel=0.1)
    assert not out["aborted"].any()


def test_blocks_are_independent_of_batching():
    g = PamGrid.build(0.5, 2, h_f=0.2)
    a = pam_batch(g, 5, range(4), [2])
    b = pam_batch(g, 5, [2, 3], [2])
    np.testing.assert_array_equal(a["A"][:, 2:], b["A"])
    np.testing.assert_array_equal(a["T3"][:, 2:], b["T3"])
