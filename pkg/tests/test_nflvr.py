import numpy as np
import pytest

from mcmarket.nflvr import (
    InvalidCertificate,
    arbitrage_strategy,
    check_certificate,
    flvr_scan,
    reachability_sets,
)
from mcmarket.simulate import build_path, simulate_paths


@pytest.fixture
def pinned_report(pinned):
    path = build_path(pinned, [0, 1, 0], [0.3, 0.6])
    return flvr_scan(pinned, path, n_max=4, n_samples=2000, seed=1)


def test_kh_window_closes_at_last_down_move(kh):
    # up, up, down: the down-move at 0.8 is the last chance to hedge a drift of 0.01
    path = build_path(kh, [0, 1, 2, 1], [0.2, 0.5, 0.8])
    report = flvr_scan(kh, path, n_max=4, n_samples=100)
    assert report.tau_prime == pytest.approx(0.8)
    assert report.tau_double_prime is None
    assert report.tau_flvr == pytest.approx(0.8)
    assert [s.check.condition1.feasible for s in report.steps] == [True, True, True, False]
    assert report.steps[2].sets.hat == (1,)


def test_kh_only_up_moves_left(kh):
    path = build_path(kh, [0, 2, 0, 1], [0.2, 0.5, 0.8])
    report = flvr_scan(kh, path, n_max=4, n_samples=100)
    assert report.tau_prime == pytest.approx(0.2)
    failed = report.condition1_failure()
    assert failed.k == 2
    assert failed.check.condition1.certificate_kind == "strict"
    assert failed.check.condition1.certificate.tolist() == [1.0]


def test_kh_inaccessible_arbitrage_is_riskless(kh):
    path = build_path(kh, [0, 2, 0, 1], [0.2, 0.5, 0.8])
    report = flvr_scan(kh, path, n_max=4, n_samples=100)
    result = arbitrage_strategy(kh, report, "inaccessible", n_paths=300, seed=2)
    assert result.entry == pytest.approx(0.2)
    assert result.exit_by == 1.0
    assert result.floor == pytest.approx(0.008)
    assert result.positive_fraction == 1.0
    assert result.worst >= result.floor - 1e-12


def test_symmetric_kh_has_no_free_lunch(kh_symmetric):
    path = build_path(kh_symmetric, [0, 1, 0], [0.3, 0.6])
    report = flvr_scan(kh_symmetric, path, n_max=2, n_samples=100)
    assert not report.arbitrage
    assert report.tau_flvr == 1.0
    with pytest.raises(ValueError, match="condition \\(1\\)"):
        arbitrage_strategy(kh_symmetric, report, "inaccessible")


def test_pinned_scenario_times(pinned_report):
    assert pinned_report.tau_prime == pytest.approx(0.3)
    assert pinned_report.tau_double_prime == pytest.approx(0.6, abs=1e-9)
    assert pinned_report.tau_flvr == pytest.approx(0.3)
    step = pinned_report.steps[1]
    assert step.sets.hat == ()
    assert [g.states for g in step.sets.checks] == [(0,)]
    assert step.window_end == pytest.approx(0.6)


def test_pinned_inaccessible_variant(pinned, pinned_report):
    result = arbitrage_strategy(pinned, pinned_report, "inaccessible", n_paths=200, seed=3)
    assert result.xi.tolist() == [1.0]
    assert result.exit_by == pytest.approx(0.57)
    np.testing.assert_allclose(result.pnl, 0.27 * 0.25)
    assert result.floor == pytest.approx(0.0675)


def test_pinned_accessible_variant(pinned, pinned_report):
    result = arbitrage_strategy(pinned, pinned_report, "accessible", n_paths=200, seed=3)
    assert result.xi.tolist() == [-1.0]
    assert result.eps == pytest.approx(0.003)
    assert result.entry == pytest.approx(0.597)
    expected = 1 - np.exp(-1.0) - 0.003 * 0.25
    np.testing.assert_allclose(result.pnl, expected, rtol=1e-9)
    assert result.worst >= result.floor - 1e-12
    assert result.to_dict(pinned)["positive_fraction"] == 1.0


def test_bad_eps_is_rejected(pinned, pinned_report):
    with pytest.raises(ValueError, match="trading window"):
        arbitrage_strategy(pinned, pinned_report, "accessible", eps=0.0)
    with pytest.raises(ValueError, match="trading window"):
        arbitrage_strategy(pinned, pinned_report, "accessible", eps=0.5)


def test_wrong_sign_portfolio_is_not_an_arbitrage(pinned, pinned_report):
    with pytest.raises(InvalidCertificate):
        check_certificate(pinned, 1, [0], [1.0], homogeneous=True)
    with pytest.raises(InvalidCertificate):
        arbitrage_strategy(pinned, pinned_report, "inaccessible", xi=[-1.0])


def test_reachability_sets_from_posterior(pinned, pinned_report):
    step = pinned_report.steps[0]
    sets = reachability_sets(pinned, step.posterior.prefix, step.posterior.ell, posterior=step.posterior)
    assert sets.hat == (1,)
    assert sets.checks == ()
    assert sets.to_dict(pinned)["inaccessible_targets"] == ["2"]


def test_scan_is_reproducible(pinned):
    path = build_path(pinned, [0, 1, 0], [0.3, 0.6])
    a = flvr_scan(pinned, path, n_max=4, n_samples=1000, seed=7).to_dict(pinned)
    b = flvr_scan(pinned, path, n_max=4, n_samples=1000, seed=7).to_dict(pinned)
    assert a == b


def _last_down_move(path) -> float:
    times = [t for (e, k), t in zip(zip(path.states[:-1], path.states[1:]), path.jump_times) if k == (e - 1) % 3]
    return float(times[-1]) if times else 0.0


def test_kh_window_on_simulated_paths(kh):
    for i, path in enumerate(simulate_paths(kh, 15, seed=31, initial=0)):
        report = flvr_scan(kh, path, n_max=max(path.n_jumps, 1), n_samples=100, seed=i)
        assert report.tau_flvr == pytest.approx(_last_down_move(path), abs=1e-12)
        failed = report.condition1_failure()
        assert failed is not None
        assert failed.check.condition1.certificate_kind == "strict"
        check_certificate(kh, failed.state, failed.sets.hat, failed.check.condition1.certificate, homogeneous=False)
        result = arbitrage_strategy(kh, report, "inaccessible", n_paths=100, seed=i)
        assert result.positive_fraction == 1.0


def test_accessible_floor_improves_linearly_as_eps_shrinks(pinned, pinned_report):
    floors = []
    for eps in (1e-2, 5e-3, 2.5e-3):
        result = arbitrage_strategy(pinned, pinned_report, "accessible", eps=eps, n_paths=100, seed=4)
        np.testing.assert_allclose(result.pnl, 1 - np.exp(-1.0) - 0.25 * eps, rtol=1e-9)
        floors.append(result.floor)
    assert floors[0] < floors[1] < floors[2]
    first_slope = (floors[1] - floors[0]) / 5e-3
    second_slope = (floors[2] - floors[1]) / 2.5e-3
    assert first_slope == pytest.approx(second_slope, rel=1e-9)
    assert first_slope > 0


@pytest.mark.parametrize(
    "name, states, times, n_max",
    [
        ("kh", [0, 1, 2, 1], [0.2, 0.5, 0.8], 3),
        ("pinned", [0, 1, 0], [0.3, 0.6], 2),
    ],
)
def test_more_continuations_do_not_widen_the_sets(request, name, states, times, n_max):
    model = request.getfixturevalue(name)
    path = build_path(model, states, times)
    small = flvr_scan(model, path, n_max=n_max, n_samples=2000, seed=9)
    large = flvr_scan(model, path, n_max=n_max + 3, n_samples=2000, seed=9)
    for a, b in zip(small.steps, large.steps):
        assert set(b.sets.hat) <= set(a.sets.hat)
        small_checks = {round(g.time, 9): set(g.states) for g in a.sets.checks}
        for g in b.sets.checks:
            assert set(g.states) <= small_checks.get(round(g.time, 9), set())
    assert large.tau_flvr == pytest.approx(small.tau_flvr)
