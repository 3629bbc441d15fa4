import math
from collections import Counter

import numpy as np
import pytest
from scipy import stats

from mcmarket import scenario
from mcmarket.fixtures import twostate_config
from mcmarket.model import validate_model
from mcmarket.scenario import (
    Scenario,
    conditional_law_sample,
    dim_chain,
    enumerate_scenarios,
    pred_system,
    residual_support,
    sample_holding_times,
    scenario_dim,
    scenario_prob,
    support_hull,
    tail_mass,
)
from mcmarket.simulate import build_path, simulate_paths

from conftest import LN11


@pytest.fixture
def skewed():
    # total rates 1 and 3 along 1>2, so the closed form applies
    return validate_model(twostate_config(lambda_down=3.0))


def test_scenario_algebra(kh):
    h = Scenario.parse(kh, "1>2>3>1")
    assert h.n == 3 and h.start == 0 and h.end == 0
    assert h.prefix(1).states == (0, 1)
    assert h.suffix(2).states == (2, 0)
    assert (h.prefix(1) | h.suffix(1)).states == h.states
    assert h.format(kh) == "1>2>3>1"
    assert Scenario.parse(kh, "1,3").states == (0, 2)
    with pytest.raises(ValueError, match="consecutive"):
        Scenario((0, 0))
    with pytest.raises(ValueError, match="cannot join"):
        h.prefix(1).concat(Scenario((2, 0)))
    with pytest.raises(ValueError):
        h.suffix(4)


def test_enumeration_counts(kh, twostate):
    assert len(enumerate_scenarios(kh, 0, 3)) == 1 + 2 + 4 + 8
    two = enumerate_scenarios(twostate, 0, 4)
    assert [h.n for h in two] == [0, 1, 2, 3, 4]
    assert all(h.is_admissible(twostate) for h in two)


@pytest.mark.parametrize("n", [0, 1, 2, 4, 6])
def test_equal_rates_are_poisson(kh, n):
    h = enumerate_scenarios(kh, 0, n)[-1]
    assert h.n == n
    expected = math.exp(-2.0) / math.factorial(n)
    assert scenario_prob(kh, h, 1.0) == pytest.approx(expected, rel=1e-8)
    assert scenario_prob(kh, h, 1.0, method="expm") == pytest.approx(expected, rel=1e-8)


def test_quad_and_expm_agree(kh):
    h = Scenario((0, 1, 2))
    assert scenario_prob(kh, h, method="quad") == pytest.approx(scenario_prob(kh, h, method="expm"), rel=1e-8)


def test_closed_form_distinct_rates(skewed):
    h = Scenario((0, 1))
    t = 0.7
    expected = (math.exp(-t) - math.exp(-3 * t)) / 2
    assert scenario_prob(skewed, h, t, method="closed") == pytest.approx(expected, rel=1e-10)
    assert scenario_prob(skewed, h, t, method="expm") == pytest.approx(expected, rel=1e-8)
    assert scenario_prob(skewed, h, t) == pytest.approx(expected, rel=1e-10)


def test_closed_form_refuses_repeated_rates(kh):
    with pytest.raises(ValueError, match="distinct"):
        scenario_prob(kh, Scenario((0, 1)), method="closed")


def test_inadmissible_scenario_has_zero_probability():
    model = validate_model(twostate_config(lambda_down=0.0))
    h = Scenario((0, 1, 0))
    assert not h.is_admissible(model)
    assert scenario_prob(model, h) == 0.0


def test_probabilities_and_tail_sum_to_one(skewed):
    n_max = 6
    total = sum(scenario_prob(skewed, h) for h in enumerate_scenarios(skewed, 0, n_max))
    assert total + tail_mass(skewed, 0, n_max) == pytest.approx(1.0, abs=1e-9)
    assert tail_mass(skewed, 0, n_max) > 0


def test_tail_mass_matches_simulated_jump_counts(kh):
    n_max, n_paths = 2, 4000
    expected = 1 - 5 * math.exp(-2)
    assert tail_mass(kh, 0, n_max) == pytest.approx(expected, abs=1e-9)
    freq = np.mean([p.n_jumps > n_max for p in simulate_paths(kh, n_paths, seed=11, initial=0)])
    se = math.sqrt(expected * (1 - expected) / n_paths)
    assert abs(freq - expected) <= 4 * se


def test_dimensions(twostate, kh):
    assert scenario_dim(twostate, Scenario((0,))) == 0
    assert scenario_dim(twostate, Scenario((0, 1))) == 1
    assert dim_chain(twostate, Scenario((0, 1, 0))) == [1, 1, 0]
    assert dim_chain(kh, Scenario((0, 1, 2))) == [0, 0, 0]


def test_support_hull(twostate, kh):
    hull = support_hull(twostate, Scenario((0, 1)))
    np.testing.assert_allclose(hull.vertices[:, 0], [LN11 - 0.5, LN11 + 0.5])
    assert hull.contains([LN11])
    assert not hull.contains([LN11 + 0.6])
    kh_hull = support_hull(kh, Scenario((0, 1)))
    assert kh_hull.point_mass
    assert kh_hull.contains([0.01 + LN11])


def test_residual_support_follows_prefix(twostate):
    path = build_path(twostate, [0, 1, 0], [0.2, 0.7])
    h = path.scenario()
    res = residual_support(twostate, h, path.prefix(1))
    assert res.horizon == pytest.approx(0.8)
    assert support_hull(twostate, h).contains(res.vertices[0])
    with pytest.raises(ValueError, match="does not follow"):
        residual_support(twostate, Scenario((0,)), path.prefix(1))


def test_pred_system(twostate):
    drifts, target = pred_system(twostate, Scenario((0, 1)), [LN11])
    assert drifts.tolist() == [[-0.5, 0.5]]
    assert target[0] == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ValueError, match="entries"):
        pred_system(twostate, Scenario((0, 1)), [0.0, 1.0])


def test_equal_rates_sample_uniform_simplex(kh):
    sample = conditional_law_sample(kh, Scenario((0, 1, 2)), n_samples=20000, seed=1)
    assert sample.acceptance_rate == 1.0
    np.testing.assert_allclose(sample.holding.sum(axis=1), 1.0)
    assert sample.holding[:, 0].mean() == pytest.approx(1 / 3, abs=0.01)
    np.testing.assert_allclose(sample.ell[:, 0], 0.01 + 2 * LN11)


def test_conditional_holding_law(skewed):
    # density of Δt_0 on [0, 1] is proportional to exp(2 Δt_0)
    sample = conditional_law_sample(skewed, Scenario((0, 1)), n_samples=20000, seed=2)
    expected = (math.e**2 + 1) / (2 * (math.e**2 - 1))
    assert sample.holding[:, 0].mean() == pytest.approx(expected, abs=0.01)
    assert 0 < sample.acceptance_rate < 1
    assert sample.jump_times.shape == (20000, 1)


def test_single_holding_time_is_deterministic():
    holding, rate = sample_holding_times(np.array([2.0]), 0.5, 3, np.random.default_rng(0))
    assert holding.tolist() == [[0.5], [0.5], [0.5]]
    assert rate == 1.0


def test_sampling_inadmissible_scenario_fails():
    model = validate_model(twostate_config(lambda_down=0.0))
    with pytest.raises(ValueError, match="inadmissible"):
        conditional_law_sample(model, Scenario((0, 1, 0)))


@pytest.mark.parametrize("name", ["twostate", "kh"])
def test_scenario_frequencies_match_probabilities(request, name):
    model = request.getfixturevalue(name)
    n_paths = 50_000
    counts = Counter(p.scenario().states for p in simulate_paths(model, n_paths, seed=21, initial=0))
    for h in enumerate_scenarios(model, 0, 3):
        p = scenario_prob(model, h)
        se = math.sqrt(p * (1 - p) / n_paths)
        assert abs(counts[h.states] / n_paths - p) <= 4 * se, h.format(model)


def test_probability_methods_agree(random_model):
    model = random_model(7, n_states=4, n_assets=1)
    compared = 0
    for h in enumerate_scenarios(model, 0, 4):
        if h.n == 0:
            continue
        reference = scenario_prob(model, h, method="expm")
        assert scenario_prob(model, h, method="quad") == pytest.approx(reference, abs=1e-8)
        try:
            closed = scenario_prob(model, h, method="closed")
        except ValueError:
            continue
        assert closed == pytest.approx(reference, abs=1e-8)
        compared += 1
    assert compared > 0


def test_dimension_chains_of_fixtures(kh, twostate):
    n_max = 6
    for e0 in range(3):
        for h in enumerate_scenarios(kh, e0, n_max):
            assert dim_chain(kh, h) == [0] * (h.n + 1)
    for e0 in range(2):
        for h in enumerate_scenarios(twostate, e0, n_max):
            chain = dim_chain(twostate, h)
            assert chain == [1] * h.n + [0]
            assert all(a >= b for a, b in zip(chain, chain[1:]))


def test_conditional_law_matches_filtered_simulation(skewed):
    h = Scenario((0, 1))
    simulated = np.array(
        [p.terminal_log_price[0] for p in simulate_paths(skewed, 30_000, seed=5, initial=0) if p.scenario() == h]
    )
    sample = conditional_law_sample(skewed, h, n_samples=5000, seed=6)
    assert len(simulated) > 3000
    assert stats.ks_2samp(simulated, sample.ell[:, 0]).pvalue > 1e-3


def test_sampler_gives_up_after_max_proposals():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError, match="accepted after"):
        sample_holding_times(np.array([0.1, 200.0]), 10.0, 1000, rng, max_proposals=10_000)


def test_conditional_sampler_names_the_scenario(monkeypatch):
    model = validate_model(twostate_config(lambda_down=200.0, horizon=10.0))
    monkeypatch.setattr(scenario, "MAX_PROPOSALS", 10_000)
    with pytest.raises(ValueError, match="scenario 1>2"):
        conditional_law_sample(model, Scenario((0, 1)), n_samples=1000)
