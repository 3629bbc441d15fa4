import math

import numpy as np
import pytest
from scipy import stats

from mcmarket.model import transition_matrix
from mcmarket.simulate import (
    THREADS_ENV,
    FunctionalError,
    build_path,
    mc_expectation,
    mc_threads,
    path_from_events,
    path_rng,
    simulate_path,
    simulate_paths,
)

from conftest import LN11


def test_path_accessors(twostate):
    path = build_path(twostate, [0, 1], [0.5])
    assert path.n_jumps == 1
    assert path.state_at(0.5) == 1 and path.state_before(0.5) == 0
    assert path.count_before(0.5) == 0
    assert path.log_price_before(0.5)[0] == pytest.approx(-0.25)
    assert path.log_price_at(0.5)[0] == pytest.approx(-0.25 + LN11)
    assert path.terminal_log_price[0] == pytest.approx(LN11)
    assert path.counts().tolist() == [[0, 1], [0, 0]]
    np.testing.assert_allclose(path.occupation(), [0.5, 0.5])
    assert path.compensated(0, 1) == pytest.approx(0.5)
    assert path.scenario().states == (0, 1)


def test_prefix_and_observation(twostate):
    path = build_path(twostate, [0, 1, 0], [0.2, 0.7])
    pre = path.prefix(1)
    assert pre.states == (0, 1) and pre.time == pytest.approx(0.2)
    assert pre.current_state == 1 and pre.last_jump_time == pytest.approx(0.2)
    seen = path.observed_before(0.7)
    assert seen.states == (0, 1) and seen.n_jumps == 1
    with pytest.raises(ValueError):
        path.prefix(3)


@pytest.mark.parametrize(
    "states, times, message",
    [
        ([0, 1], [], "do not match"),
        ([0, 1], [1.5], "strictly increasing"),
        ([0, 1, 0], [0.5, 0.5], "strictly increasing"),
        ([0, 0], [0.5], "zero intensity"),
    ],
)
def test_build_path_rejects(twostate, states, times, message):
    with pytest.raises(ValueError, match=message):
        build_path(twostate, states, times)


def test_event_document_round_trip(kh):
    path = simulate_path(kh, "2", seed=11)
    again = path_from_events(kh, path.to_dict())
    assert again.states == path.states
    np.testing.assert_array_equal(again.jump_times, path.jump_times)
    assert again.initial_state == 1


def test_same_seed_same_path(kh):
    a = simulate_path(kh, seed=5)
    b = simulate_path(kh, seed=5)
    assert a.states == b.states
    np.testing.assert_array_equal(a.jump_times, b.jump_times)


def test_streams_differ_by_index():
    assert path_rng(3, 0).random() != path_rng(3, 1).random()
    with pytest.raises(ValueError):
        path_rng(-1, 0)


def test_absorbing_state_never_jumps():
    from mcmarket.fixtures import twostate_config
    from mcmarket.model import validate_model

    model = validate_model(twostate_config(lambda_down=0.0))
    path = simulate_path(model, "2", seed=1)
    assert path.n_jumps == 0
    assert path.terminal_log_price[0] == pytest.approx(0.5)


def test_initial_law(twostate):
    paths = simulate_paths(twostate, 200, seed=2, initial=[0.0, 1.0])
    assert all(p.initial_state == 1 for p in paths)
    with pytest.raises(ValueError, match="probability vector"):
        simulate_path(twostate, [0.5, 0.6])


def test_jump_count_mean(twostate):
    est = mc_expectation(twostate, lambda p: p.n_jumps, 4000, seed=1)
    assert est.within(1.0, z=4)


def test_compensated_counts_are_centered(kh):
    est = mc_expectation(kh, lambda p: [p.compensated(0, 1), p.compensated(1, 0)], 4000, seed=3)
    assert est.within(np.zeros(2), z=4)


def test_terminal_law_matches_transition_matrix(kh):
    t = 1.0
    est = mc_expectation(kh, lambda p: np.eye(3)[p.state_at(t)], 6000, seed=9)
    assert est.within(transition_matrix(kh, t)[0], z=4)


def test_thread_count_does_not_change_estimate(twostate):
    one = mc_expectation(twostate, lambda p: p.terminal_log_price[0], 500, seed=4, threads=1)
    four = mc_expectation(twostate, lambda p: p.terminal_log_price[0], 500, seed=4, threads=4)
    assert one.mean == four.mean and one.se == four.se


def test_functional_errors_name_the_path(twostate):
    def boom(path):
        raise KeyError("x")

    with pytest.raises(FunctionalError, match="path 0"):
        mc_expectation(twostate, boom, 10, seed=0)


def test_too_few_paths(twostate):
    with pytest.raises(ValueError, match="at least 2"):
        mc_expectation(twostate, lambda p: 0.0, 1, seed=0)


def test_thread_env(monkeypatch):
    monkeypatch.setenv(THREADS_ENV, "3")
    assert mc_threads() == 3
    monkeypatch.setenv(THREADS_ENV, "zero")
    with pytest.raises(ValueError, match=THREADS_ENV):
        mc_threads()


def test_standard_error_shrinks(twostate):
    small = mc_expectation(twostate, lambda p: p.n_jumps, 100, seed=1)
    large = mc_expectation(twostate, lambda p: p.n_jumps, 10000, seed=1)
    assert large.se < small.se
    assert math.isfinite(large.z_score(1.0))


def test_holding_times_are_exponential(twostate):
    paths = simulate_paths(twostate, 2000, seed=3, initial="1", horizon=50.0)
    first = np.array([p.jump_times[0] for p in paths])
    assert stats.kstest(first, "expon").pvalue > 1e-3
