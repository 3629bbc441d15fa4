import math

import numpy as np
import pytest

from mcmarket.insider import (
    BRIDGE_CAP,
    ZeroPosteriorSupport,
    bridge_compensator_integral,
    classify_jump,
    dk_sets,
    group_by_time,
    insider_compensator_kh,
    insider_compensator_mixture,
    is_absolutely_continuous,
    is_determined,
    kh_counts,
    kh_jump_pairs,
    kh_structure,
    posterior_scenario_weights,
    predictable_bounds,
    sample_next_jump,
    simulate_bridge,
)
from mcmarket.scenario import Scenario
from mcmarket.simulate import build_path, simulate_path, simulate_paths

from conftest import LN09, LN11


@pytest.fixture
def twostate_path(twostate):
    return build_path(twostate, [0, 1, 0], [0.2, 0.7])


@pytest.fixture
def pinned_path(pinned):
    # ℓ = 3 − 1 + drift part −0.1 = 1.9
    return build_path(pinned, [0, 1, 0], [0.3, 0.6])


def test_last_jump_is_predictable(twostate, twostate_path):
    last = classify_jump(twostate, twostate_path, 2)
    assert last.accessible
    assert last.predictable_time == pytest.approx(0.7, abs=1e-9)
    assert last.lower == pytest.approx(0.7, abs=1e-9)
    assert last.to_dict(twostate)["kind"] == "accessible"


def test_earlier_jump_is_inaccessible(twostate, twostate_path):
    first = classify_jump(twostate, twostate_path, 1)
    assert not first.accessible
    assert first.predictable_time is None
    assert first.lower == pytest.approx(0.0, abs=1e-9)
    assert first.upper == pytest.approx(0.5, abs=1e-9)
    assert first.lower <= first.actual_time <= first.upper


def test_rank_test_agrees_with_lp(twostate, twostate_path):
    h = twostate_path.scenario()
    ell = twostate_path.terminal_log_price
    for k in (1, 2):
        det = is_determined(twostate, h, k, ell, prefix=twostate_path.prefix(k - 1))
        assert det.reachable and det.agrees
    assert bool(is_determined(twostate, h, 2, ell, prefix=twostate_path.prefix(1)))
    assert is_determined(twostate, h, 1, ell).reason == "no dimension drop"


def _path_with_jumps(model, rng, lo=1, hi=5):
    while True:
        path = simulate_path(model, seed=rng)
        if lo <= path.n_jumps <= hi:
            return path


@pytest.mark.parametrize("seed", range(100))
def test_rank_test_and_bounds_on_random_markets(random_model, seed):
    rng = np.random.default_rng(1000 + seed)
    for instance in range(10):
        model = random_model(10 * seed + instance)
        path = _path_with_jumps(model, rng)
        h, ell, T = path.scenario(), path.terminal_log_price, path.horizon
        for k in range(1, path.n_jumps + 1):
            prefix = path.prefix(k - 1)
            det = is_determined(model, h, k, ell, T, prefix=prefix)
            assert det.reachable
            assert det.agrees, (seed, instance, k)
            bounds = predictable_bounds(model, prefix, h, ell, T)
            tau = float(path.jump_times[k - 1])
            assert bounds.lower - 1e-7 <= tau <= bounds.upper + 1e-7
            if det:
                assert tau == pytest.approx(bounds.upper, abs=1e-7)


def test_unreachable_value(twostate, twostate_path):
    det = is_determined(twostate, twostate_path.scenario(), 1, [5.0])
    assert not det and det.reason == "unreachable"
    assert predictable_bounds(twostate, twostate_path.prefix(0), twostate_path.scenario(), [5.0]) is None
    with pytest.raises(ZeroPosteriorSupport):
        classify_jump(twostate, twostate_path, 1, ell=[5.0])


def test_index_checks(twostate, twostate_path):
    with pytest.raises(ValueError, match="k must be"):
        classify_jump(twostate, twostate_path, 3)
    with pytest.raises(ValueError, match="k must be"):
        is_determined(twostate, twostate_path.scenario(), 0, [0.0])


def test_absolute_continuity(kh, twostate):
    assert is_absolutely_continuous(kh, Scenario((0, 1, 2, 0)))
    assert not is_absolutely_continuous(twostate, Scenario((0, 1)))
    assert is_absolutely_continuous(twostate, Scenario((0,)))


def test_grouping_by_time():
    h1, h2, h3 = Scenario((0, 1)), Scenario((0, 2)), Scenario((0, 1, 0))
    groups = group_by_time([(0.7, 0.5, h3), (0.5, 0.2, h1), (0.5 + 1e-12, 0.3, h2)], 1.0)
    assert [g.time for g in groups] == [0.5, 0.7]
    assert groups[0].mass == pytest.approx(0.5)
    assert groups[0].scenarios == (h1, h2)


def test_dk_sets(twostate, twostate_path):
    d1 = dk_sets(twostate, 1, n_max=3)
    assert d1.members == (Scenario((0, 1)),)
    assert len(d1.others) == 2
    d2 = dk_sets(twostate, 2, n_max=3, prefix=twostate_path.prefix(1), ell=twostate_path.terminal_log_price)
    assert Scenario((0, 1, 0)) in d2.members
    assert [g.time for g in d2.representatives] == [pytest.approx(0.7, abs=1e-9)]


def test_pinned_posterior_identifies_the_scenario(pinned, pinned_path):
    ell = pinned_path.terminal_log_price
    assert ell[0] == pytest.approx(1.9)
    post = posterior_scenario_weights(pinned, pinned_path.prefix(0), ell, n_max=5, n_samples=4000, seed=1)
    assert post.dimension == 1
    assert len(post.candidates) == 1
    assert post.weights == {Scenario((0, 1, 0)): pytest.approx(1.0)}


def test_posterior_weights_are_normalized(twostate):
    path = build_path(twostate, [0, 1], [0.5])
    post = posterior_scenario_weights(twostate, path.prefix(0), path.terminal_log_price, n_max=4, n_samples=4000, seed=2)
    assert post.dimension == 1
    assert sum(post.weights.values()) == pytest.approx(1.0)
    assert all(c.weight > 0 for c in post.candidates)
    determined = [c.scenario for c in post.candidates if c.determined]
    assert determined == [Scenario((0, 1))]


def test_atomic_posterior_uses_prior_weights(kh):
    ell = [0.01 + LN11 + LN09]
    post = posterior_scenario_weights(kh, build_path(kh, [0], []).prefix(0), ell, n_max=3, n_samples=100)
    assert post.atomic
    # one up and one down in either order: 1>2>1 and 1>3>1
    assert {h.states for h in post.weights} == {(0, 1, 0), (0, 2, 0)}
    assert all(w == pytest.approx(0.5) for w in post.weights.values())


def test_no_continuation_reaches_ell(twostate):
    with pytest.raises(ZeroPosteriorSupport):
        posterior_scenario_weights(twostate, build_path(twostate, [0], []).prefix(0), [9.0], n_max=3, n_samples=100)


def test_compensator_mixture_atom_at_predictable_time(pinned, pinned_path):
    mix = insider_compensator_mixture(pinned, pinned_path.prefix(1), pinned_path.terminal_log_price, n_max=4, n_samples=4000, seed=3)
    assert mix.k == 2
    assert len(mix.atoms) == 1
    assert mix.atoms[0].time == pytest.approx(0.6, abs=1e-9)
    assert mix.accessible_mass == pytest.approx(1.0)
    assert mix.inaccessible_mass == 0.0
    assert mix.total_mass == pytest.approx(1.0)


def test_compensator_mixture_density_part(pinned, pinned_path):
    mix = insider_compensator_mixture(pinned, pinned_path.prefix(0), pinned_path.terminal_log_price, n_max=4, n_samples=4000, seed=3, grid=20)
    assert not mix.atoms
    assert mix.inaccessible_mass == pytest.approx(1.0)
    assert float(np.sum(mix.density * np.diff(mix.edges))) == pytest.approx(1.0)
    assert np.all(mix.hazard >= 0)
    # t_0 + t_2 = 0.7 on this scenario, so the first jump comes before 0.8
    assert np.all(mix.density[mix.edges[:-1] >= 0.8] == 0)


def test_next_jump_draws(pinned, pinned_path):
    post = posterior_scenario_weights(pinned, pinned_path.prefix(1), pinned_path.terminal_log_price, n_max=4, n_samples=2000)
    draw = sample_next_jump(pinned, post, np.random.default_rng(0))
    assert draw.kind == "accessible"
    assert draw.time == pytest.approx(0.6, abs=1e-9)
    assert draw.state == 0


def test_kh_structure(kh, twostate):
    s = kh_structure(kh)
    assert s.beta_up[0] == pytest.approx(LN11)
    assert s.beta_down[0] == pytest.approx(LN09)
    assert s.lambda_up == 1.0
    with pytest.raises(ValueError, match="3 states"):
        kh_structure(twostate)


def test_kh_counts_and_pairs(kh):
    assert kh_counts([0, 1, 2, 1]) == (2, 1)
    ell = [0.01 + 2 * LN11 + LN09]
    assert kh_jump_pairs(kh, ell, n_max=6) == [(2, 1)]


def test_symmetric_jumps_leave_pairs_ambiguous(kh_symmetric):
    pairs = kh_jump_pairs(kh_symmetric, [0.01 + LN11], n_max=5)
    assert pairs == [(1, 0), (2, 1), (3, 2)]


def test_bridge_intensities():
    b = insider_compensator_kh(1.0, 2.0, 0.5, 1.0, 3, 1, 1, 1)
    assert b.up == pytest.approx(4.0)
    assert b.down == 0.0
    assert not b.saturated
    capped = insider_compensator_kh(1.0, 1.0, 1.0 - 1e-15, 1.0, 2, 0)
    assert capped.saturated and capped.up == BRIDGE_CAP
    with pytest.raises(ValueError, match="exceed"):
        insider_compensator_kh(1.0, 1.0, 0.5, 1.0, 1, 1, 2, 0)


def test_bridge_integral_closed_form():
    assert bridge_compensator_integral([0.3], 1, 1.0, 0.5) == pytest.approx(-math.log(0.7))
    assert bridge_compensator_integral([], 2, 1.0, 0.5) == pytest.approx(2 * math.log(2))
    assert bridge_compensator_integral([], 1, 1.0, 1.0) == math.inf


def test_bridge_compensated_count_is_centered():
    rng = np.random.default_rng(4)
    n, T, t = 3, 1.0, 0.8
    values = []
    for _ in range(20000):
        times = simulate_bridge(n, T, rng)
        values.append(np.sum(times <= t) - bridge_compensator_integral(times, n, T, t))
    values = np.array(values)
    se = values.std(ddof=1) / math.sqrt(len(values))
    assert abs(values.mean()) < 4 * se


@pytest.mark.parametrize("n", [1, 2, 3])
@pytest.mark.parametrize("fraction", [0.25, 0.5, 0.75])
def test_bridge_compensator_mean(n, fraction):
    rng = np.random.default_rng(100 * n + int(100 * fraction))
    T = 2.0
    t = fraction * T
    values = np.array([bridge_compensator_integral(simulate_bridge(n, T, rng), n, T, t) for _ in range(20000)])
    se = values.std(ddof=1) / math.sqrt(len(values))
    assert abs(values.mean() - n * t / T) <= 4 * se


def test_insider_compensator_matches_unconditional_count(kh):
    # averaging over the insider's knowledge of N⁺_T recovers the plain count
    t = 0.6
    is_up = kh_structure(kh).is_up
    diffs = []
    for path in simulate_paths(kh, 20000, seed=12, initial=0):
        ups = [tau for (e, k), tau in zip(zip(path.states[:-1], path.states[1:]), path.jump_times) if is_up(e, k)]
        integral = bridge_compensator_integral(ups, len(ups), path.horizon, t)
        diffs.append(integral - sum(1 for tau in ups if tau <= t))
    diffs = np.array(diffs)
    se = diffs.std(ddof=1) / math.sqrt(len(diffs))
    assert abs(diffs.mean()) <= 4 * se
