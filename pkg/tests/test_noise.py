import numpy as np
import pytest

from shelab.noise import (GridSpec, Lane, MemoryBudgetError, NoiseTape, SEGMENT_STEPS, StreamKey,
                          TapeMismatchError, derive_stream, draw_segment, sample_tape)


def test_grid_invariants():
    g = GridSpec.auto(4.0, 0.5, dx=0.1)
    assert g.n_x % 2 == 0
    assert g.dt <= g.dx**2 / 2 * (1 + 1e-12)
    assert g.L >= 4.0 + 6 * np.sqrt(0.5)
    assert g.x[g.center] == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        GridSpec(2.0, 40, 0.5, 10).validate()
    with pytest.raises(ValueError):
        GridSpec(2.0, 41, 0.5, 1000).validate()
    with pytest.raises(ValueError):
        GridSpec(2.0, 40, 0.5, 1000).validate(R_max=1.0)


def test_same_key_reproduces_stream():
    k = StreamKey(123, 0, Lane.SOLUTION)
    a = derive_stream(k, 0).standard_normal(10**6)
    b = derive_stream(k, 0).standard_normal(10**6)
    np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("other", [StreamKey(123, 1, Lane.SOLUTION), StreamKey(123, 0, Lane.DERIVATIVE)])
def test_streams_are_uncorrelated(other):
    a = derive_stream(StreamKey(123, 0, Lane.SOLUTION)).standard_normal(10**6)
    b = derive_stream(other).standard_normal(10**6)
    assert abs(np.corrcoef(a, b)[0, 1]) < 4 / np.sqrt(10**6)


def test_segments_are_independent_of_call_order():
    k = StreamKey(9, 4)
    late = draw_segment(k, 7, (3, 5))
    draw_segment(k, 0, (3, 5))
    np.testing.assert_array_equal(late, draw_segment(k, 7, (3, 5)))
    assert not np.array_equal(draw_segment(k, 6, (3, 5)), late)


def test_tape_moments():
    g = GridSpec(L=25.0, n_x=1000, t_end=1.0, n_t=1000)
    tape = sample_tape(g, StreamKey(5, 0))
    xi = tape.array()
    assert xi.shape == (1000, 1000)
    assert abs(xi.mean()) < 4 / 1000
    assert abs(xi.var() - 1) < 0.01
    # neighbouring cells uncorrelated
    c = np.mean(xi[:, :-1] * xi[:, 1:])
    assert abs(c) < 4 / np.sqrt(xi[:, 1:].size)
    np.testing.assert_allclose(tape.walsh_increments().var(), g.dt * g.dx, rtol=0.01)


def test_tape_modes_agree_bitwise():
    g = GridSpec(L=5.0, n_x=100, t_end=0.5, n_t=137)
    key = StreamKey(11, 3)
    mem = sample_tape(g, key)
    regen = sample_tape(g, key, mode="regenerable")
    assert regen.increments is None
    np.testing.assert_array_equal(mem.array(), regen.array())
    for n in (0, SEGMENT_STEPS - 1, SEGMENT_STEPS, 136):
        np.testing.assert_array_equal(mem.row(n), regen.row(n))
    np.testing.assert_array_equal(sample_tape(g, key).array(), mem.array())


def test_tape_memory_budget():
    g = GridSpec(L=5.0, n_x=100, t_end=0.5, n_t=200)
    with pytest.raises(MemoryBudgetError, match="regenerable"):
        sample_tape(g, StreamKey(1, 0), budget=1000)


def test_tape_key_check():
    g = GridSpec(L=5.0, n_x=100, t_end=0.5, n_t=200)
    tape = NoiseTape(g, StreamKey(1, 0))
    tape.check(StreamKey(1, 0))
    with pytest.raises(TapeMismatchError):
        tape.check(StreamKey(1, 1))
