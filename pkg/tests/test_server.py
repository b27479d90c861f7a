import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from fedsim.errors import ConfigError, StructuralError
from fedsim.server import (
    EpochDecayConfig,
    ModelHistory,
    ServerAveragingConfig,
    cumulative_epochs,
    epochs_at,
    maybe_server_average,
    push_history,
    uniform_mean,
)

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


def history_of(*values):
    h = ModelHistory(len(values))
    for t, v in enumerate(values, start=1):
        h.push(t, np.asarray(v, dtype=float))
    return h


def test_config_validation():
    with pytest.raises(ConfigError):
        ServerAveragingConfig(P=0)
    with pytest.raises(ConfigError):
        ServerAveragingConfig(R=0)
    with pytest.raises(ConfigError):
        EpochDecayConfig(initial_epochs=0.5, enabled=True)
    with pytest.raises(ConfigError):
        EpochDecayConfig(decay_interval=0)


def test_average_p1_returns_newest_exactly():
    w = np.array([0.1, -0.3, 7.0])
    h = history_of(w)
    out = maybe_server_average(h, 40, ServerAveragingConfig(P=1, R=40, enabled=True))
    assert np.array_equal(out, w)


def test_average_trigger_rule():
    h = history_of([2.0], [4.0])
    cfg = ServerAveragingConfig(P=2, R=40, enabled=True)
    assert maybe_server_average(h, 41, cfg) is None
    assert np.array_equal(maybe_server_average(h, 40, cfg), [3.0])
    assert maybe_server_average(h, 40, ServerAveragingConfig(P=2, R=40, enabled=False)) is None


def test_average_needs_full_history():
    h = history_of([2.0])
    h2 = ModelHistory(3)
    h2.push(1, np.array([1.0]))
    assert maybe_server_average(h2, 10, ServerAveragingConfig(P=3, R=10, enabled=True)) is None


def test_average_uses_newest_p():
    h = ModelHistory(2)
    for t, v in ((1, 100.0), (2, 2.0), (3, 4.0)):
        h.push(t, np.array([v]))
    assert h.rounds == [2, 3]
    assert np.array_equal(maybe_server_average(h, 3, ServerAveragingConfig(P=2, R=3, enabled=True)), [3.0])


def test_history_fifo_and_ordering():
    h = ModelHistory(2)
    for t in (1, 2, 3):
        push_history(h, t, np.array([float(t)]))
    assert h.rounds == [2, 3]
    with pytest.raises(StructuralError):
        h.push(3, np.array([0.0]))
    fresh = ModelHistory(4)
    fresh.push(1, np.zeros(2))
    assert len(fresh) == 1
    assert ModelHistory(0).capacity == 1


def test_replace_newest():
    h = history_of([1.0], [2.0])
    h.replace_newest(np.array([9.0]))
    assert h.rounds == [1, 2] and h.newest(1)[0][0] == 9.0


@given(st.integers(1, 6).flatmap(
    lambda p: st.lists(arrays(np.float64, 5, elements=finite), min_size=p, max_size=p)))
def test_uniform_mean_within_bounds(models):
    m = uniform_mean(models)
    stack = np.stack(models)
    assert np.all(m >= stack.min(axis=0)) and np.all(m <= stack.max(axis=0))


@given(arrays(np.float64, 7, elements=finite), st.integers(1, 8))
def test_uniform_mean_identity(w, p):
    assert np.array_equal(uniform_mean([w.copy() for _ in range(p)]), w)


def test_uniform_mean_value():
    assert np.allclose(uniform_mean([np.array([1.0, 2.0]), np.array([3.0, 6.0]), np.array([5.0, 1.0])]),
                       [3.0, 3.0], rtol=0, atol=1e-15)


def test_epoch_schedule_table():
    cfg = EpochDecayConfig(initial_epochs=5, decay_interval=100, enabled=True)
    assert {epochs_at(t, cfg) for t in range(1, 101)} == {5.0}
    assert [epochs_at(t, cfg) for t in (101, 200, 201, 300, 301, 401, 500)] == [2.5, 2.5, 1.25, 1.25, 1.0, 1.0, 1.0]
    assert cumulative_epochs(500, cfg) == 100 * (5 + 2.5 + 1.25 + 1 + 1) == 1075.0
    assert cumulative_epochs(500, EpochDecayConfig(initial_epochs=5)) == 2500.0


def test_epoch_schedule_disabled_and_floor():
    assert epochs_at(1234, EpochDecayConfig(initial_epochs=5, enabled=False)) == 5.0
    for t in (1, 50, 10**6):
        assert epochs_at(t, EpochDecayConfig(initial_epochs=1, decay_interval=3, enabled=True)) == 1.0


@given(st.floats(1, 64), st.integers(1, 300))
def test_epoch_schedule_monotone(e, d):
    cfg = EpochDecayConfig(initial_epochs=e, decay_interval=d, enabled=True)
    vals = [epochs_at(t, cfg) for t in range(1, 2000, 7)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))
    assert min(vals) >= 1.0
