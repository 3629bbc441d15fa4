"""
Insider NFLVR along a path.

At each jump index k the insider splits the possible next moves into states reachable by a
totally inaccessible jump (Ŷ) and, per predictable time, states reachable by an accessible
jump (Y̌). No free lunch with vanishing risk holds on the step iff
    (1) Γ^{e,Ŷ} λ̃ = r^e·1 − μ^e has a strictly positive solution, and
    (2) Γ^{e,Y̌} λ̃ = 0 has a strictly positive solution for every predictable time.
The first failures give τ′ and τ″; trading before τ^FLVR = τ′ ∧ τ″ ∧ T is free of free lunches.
Failed systems come with separating certificates ξ, which are the arbitrage portfolios.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Literal

import numpy as np

from .feasibility import TIME_TOL, FeasibilitySolution, solve_strict
from .insider import (
    N_SAMPLES_DEFAULT,
    Posterior,
    PredictableGroup,
    group_by_time,
    posterior_scenario_weights,
    sample_next_jump,
)
from .model import MarketModel
from .noarb import excess_drift, jump_returns
from .scenario import N_MAX_DEFAULT
from .simulate import PathPrefix, PathRecord, path_rng

logger = logging.getLogger(__name__)

SUPPORT_THRESHOLD = 1e-12

Variant = Literal["inaccessible", "accessible"]


class InvalidCertificate(ValueError):
    """A portfolio fails the sign conditions that make it an arbitrage."""


@dataclass(frozen=True)
class PredictableTargets:
    time: float
    states: tuple[int, ...]
    mass: float


@dataclass(frozen=True)
class ReachabilitySets:
    k: int
    state: int
    time: float
    hat: tuple[int, ...]                       # Ŷ
    checks: tuple[PredictableTargets, ...]     # Y̌ per predictable time
    threshold: float

    def to_dict(self, model: MarketModel) -> dict[str, Any]:
        return {
            "k": self.k,
            "state": model.label(self.state),
            "time": self.time,
            "inaccessible_targets": [model.label(f) for f in self.hat],
            "predictable": [
                {"time": g.time, "targets": [model.label(f) for f in g.states], "mass": g.mass} for g in self.checks
            ],
            "threshold": self.threshold,
        }


def reachability_sets(
    model: MarketModel,
    prefix: PathPrefix,
    ell: Any,
    n_max: int = N_MAX_DEFAULT,
    posterior: Posterior | None = None,
    n_samples: int = N_SAMPLES_DEFAULT,
    seed: int = 0,
    T: float | None = None,
    threshold: float = SUPPORT_THRESHOLD,
) -> ReachabilitySets:
    """
    Ŷ and Y̌ for the next jump after the prefix, from the continuations with posterior
    weight at least `threshold`.
    """
    T = model.horizon if T is None else float(T)
    post = posterior or posterior_scenario_weights(model, prefix, ell, n_max, n_samples, seed, T)
    hat: set[int] = set()
    entries = []
    for c in post.supported(threshold):
        if c.scenario.n == 0:
            continue
        target = c.scenario.states[1]
        if c.determined and c.first_hold is not None:
            entries.append((prefix.time + c.first_hold.t_lo, c.weight, c.scenario))
        else:
            hat.add(target)
    checks = tuple(
        PredictableTargets(time=g.time, states=tuple(sorted({h.states[1] for h in g.scenarios})), mass=g.mass)
        for g in group_by_time(entries, T)
    )
    return ReachabilitySets(
        k=prefix.n_jumps + 1, state=prefix.current_state, time=prefix.time,
        hat=tuple(sorted(hat)), checks=checks, threshold=threshold,
    )


@dataclass(frozen=True)
class StepCheck:
    condition1: FeasibilitySolution
    condition2: tuple[tuple[float, FeasibilitySolution], ...]

    @property
    def passed(self) -> bool:
        return self.condition1.feasible and all(s.feasible for _, s in self.condition2)


def check_nflvr_step(model: MarketModel, e: int, sets: ReachabilitySets) -> StepCheck:
    """Solve system (1) on Ŷ and the homogeneous system (2) on each Y̌."""
    hat = list(sets.hat)
    cond1 = solve_strict(jump_returns(model, e, hat), excess_drift(model, e), scale=model.lam[e, hat] if hat else None)
    cond2 = []
    for g in sets.checks:
        targets = list(g.states)
        sol = solve_strict(jump_returns(model, e, targets), np.zeros(model.n_assets), scale=model.lam[e, targets])
        cond2.append((g.time, sol))
    return StepCheck(condition1=cond1, condition2=tuple(cond2))


@dataclass(frozen=True, eq=False)
class StepReport:
    k: int
    time: float
    state: int
    window_end: float          # the next observed jump, or T
    sets: ReachabilitySets
    check: StepCheck
    posterior: Posterior = field(repr=False)

    def to_dict(self, model: MarketModel) -> dict[str, Any]:
        return {
            "k": self.k,
            "time": self.time,
            "state": model.label(self.state),
            "window_end": self.window_end,
            "posterior_dimension": self.posterior.dimension,
            "sets": self.sets.to_dict(model),
            "condition1": self.check.condition1.to_dict(),
            "condition2": [{"time": t, **sol.to_dict()} for t, sol in self.check.condition2],
        }


@dataclass(frozen=True, eq=False)
class FlvrReport:
    steps: tuple[StepReport, ...]
    tau_prime: float | None
    tau_double_prime: float | None
    horizon: float
    n_max: int
    threshold: float

    @property
    def tau_flvr(self) -> float:
        return min(t for t in (self.tau_prime, self.tau_double_prime, self.horizon) if t is not None)

    @property
    def arbitrage(self) -> bool:
        return self.tau_prime is not None or self.tau_double_prime is not None

    def condition1_failure(self) -> StepReport | None:
        return next((s for s in self.steps if not s.check.condition1.feasible), None)

    def condition2_failure(self) -> tuple[StepReport, int] | None:
        """The step and predictable group that realize τ″."""
        for s in self.steps:
            for i, (t, sol) in enumerate(s.check.condition2):
                if not sol.feasible and self.tau_double_prime is not None and abs(t - self.tau_double_prime) <= TIME_TOL * max(1.0, self.horizon):
                    return s, i
        return None

    def to_dict(self, model: MarketModel) -> dict[str, Any]:
        return {
            "tau_prime": self.tau_prime,
            "tau_double_prime": self.tau_double_prime,
            "tau_flvr": self.tau_flvr,
            "horizon": self.horizon,
            "n_max": self.n_max,
            "threshold": self.threshold,
            "scope": f"checked along one path over continuations with at most {self.n_max} further jumps",
            "steps": [s.to_dict(model) for s in self.steps],
        }


def _step_seed(seed: int, k: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=(k,)).generate_state(1)[0])


def flvr_scan(
    model: MarketModel,
    path: PathRecord,
    ell: Any = None,
    n_max: int = N_MAX_DEFAULT,
    n_samples: int = N_SAMPLES_DEFAULT,
    seed: int = 0,
    threshold: float = SUPPORT_THRESHOLD,
) -> FlvrReport:
    """
    Walk the jumps of a path and locate τ′, τ″ and τ^FLVR.

    Step k starts at τ_{k−1}. A failure of (1) there sets τ′ = τ_{k−1}. A failure of (2) at a
    predictable time t counts for τ″ only if t comes no later than the next observed jump,
    since the insider's information changes at that jump.
    """
    ell = path.terminal_log_price if ell is None else np.atleast_1d(np.asarray(ell, dtype=float))
    T = path.horizon
    tol = TIME_TOL * max(1.0, T)
    steps = []
    tau_prime: float | None = None
    tau_dd: float | None = None
    for k in range(1, path.n_jumps + 2):
        prefix = path.prefix(k - 1)
        window_end = float(path.jump_times[k - 1]) if k <= path.n_jumps else T
        post = posterior_scenario_weights(model, prefix, ell, n_max, n_samples, _step_seed(seed, k), T)
        sets = reachability_sets(model, prefix, ell, n_max, posterior=post, T=T, threshold=threshold)
        check = check_nflvr_step(model, prefix.current_state, sets)
        steps.append(StepReport(k, prefix.time, prefix.current_state, window_end, sets, check, post))

        if not check.condition1.feasible and tau_prime is None:
            tau_prime = prefix.time
        for t, sol in check.condition2:
            if not sol.feasible and t <= window_end + tol:
                tau_dd = t if tau_dd is None else min(tau_dd, t)
        logger.debug(f"step {k} at t={prefix.time:.6g}: condition (1) {check.condition1.status}, {len(check.condition2)} predictable groups")

    report = FlvrReport(
        steps=tuple(steps), tau_prime=tau_prime, tau_double_prime=tau_dd, horizon=T, n_max=n_max, threshold=threshold
    )
    logger.info(f"τ′={tau_prime}, τ″={tau_dd}, τ^FLVR={report.tau_flvr}")
    return report


def check_certificate(model: MarketModel, e: int, targets: list[int] | tuple[int, ...], xi: Any, homogeneous: bool) -> np.ndarray:
    """
    Verify that ξ is an arbitrage portfolio in state e.

    ξᵀγ^{e,f} > 0 for every target f, and for the inhomogeneous system also ξᵀ(μ^e − r^e) > 0.

    Raises:
        InvalidCertificate: a sign condition fails
    """
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if xi.shape != (model.n_assets,):
        raise InvalidCertificate(f"certificate must have {model.n_assets} entries, got {xi.size}")
    gains = xi @ jump_returns(model, e, list(targets))
    if np.any(gains <= 0):
        raise InvalidCertificate(f"jump gains {gains.tolist()} are not all positive")
    if not homogeneous and xi @ model.drift[:, e] <= 0:
        raise InvalidCertificate(f"drift gain {float(xi @ model.drift[:, e])} is not positive")
    return xi


@dataclass(frozen=True, eq=False)
class ArbitrageResult:
    variant: Variant
    k: int
    state: int
    entry: float
    exit_by: float
    eps: float
    xi: np.ndarray
    floor: float
    pnl: np.ndarray
    seed: int

    @property
    def n_paths(self) -> int:
        return len(self.pnl)

    @property
    def mean(self) -> float:
        return float(self.pnl.mean())

    @property
    def worst(self) -> float:
        return float(self.pnl.min())

    @property
    def positive_fraction(self) -> float:
        return float(np.mean(self.pnl > 0))

    def to_dict(self, model: MarketModel) -> dict[str, Any]:
        return {
            "variant": self.variant,
            "k": self.k,
            "state": model.label(self.state),
            "entry": self.entry,
            "exit_by": self.exit_by,
            "eps": self.eps,
            "xi": self.xi.tolist(),
            "floor": self.floor,
            "mean": self.mean,
            "worst": self.worst,
            "positive_fraction": self.positive_fraction,
            "n_paths": self.n_paths,
            "seed": self.seed,
        }


def arbitrage_strategy(
    model: MarketModel,
    report: FlvrReport,
    variant: Variant = "inaccessible",
    eps: float | None = None,
    n_paths: int = 1000,
    seed: int = 0,
    xi: Any = None,
) -> ArbitrageResult:
    """
    Trade the certificate of a failed condition and simulate the P&L given the insider's information.

    Positions are held at constant currency exposure ξ_i in asset i, so over a stretch of
    length Δ in state e followed by a jump to f the discounted gain is Δ·ξᵀa^e + ξᵀγ^{e,f}.

    inaccessible: enter at τ′ = τ_{k−1}; exit at the next jump, or ε before the earliest
        predictable time (or T) if no inaccessible jump came first.
    accessible: enter at τ″ − ε and exit right after τ″.

    Raises:
        ValueError: the report has no failure of the requested kind
        InvalidCertificate: the certificate is weak or fails its sign conditions
    """
    T = report.horizon
    tol = TIME_TOL * max(1.0, T)
    if variant == "inaccessible":
        step = report.condition1_failure()
        if step is None:
            raise ValueError("no condition (1) failure in the report")
        solution, targets, homogeneous = step.check.condition1, step.sets.hat, False
        predictable = [g.time for g in step.sets.checks if g.mass > 0]
        entry = step.time
        if predictable:
            cap = min(predictable)
            eps = (cap - entry) / 10 if eps is None else float(eps)
            exit_by = cap - eps
        else:
            eps = 0.0 if eps is None else float(eps)
            exit_by = T
    elif variant == "accessible":
        found = report.condition2_failure()
        if found is None:
            raise ValueError("no condition (2) failure in the report")
        step, index = found
        t_dd, solution = step.check.condition2[index]
        targets, homogeneous = step.sets.checks[index].states, True
        if eps is None:
            eps = min(0.01 * (t_dd - step.time), (T - step.time) / 10)
        eps = float(eps)
        entry, exit_by = t_dd - eps, t_dd
    else:
        raise ValueError(f"unknown variant {variant!r}")
    if eps < 0 or (variant == "accessible" and eps == 0) or entry < step.time or exit_by <= entry:
        raise ValueError(f"eps={eps} leaves no trading window after t={step.time}")

    e = step.state
    if xi is None:
        if solution.certificate_kind != "strict":
            raise InvalidCertificate(f"certificate is {solution.certificate_kind}, a strict one is needed")
        xi = solution.certificate
    xi = check_certificate(model, e, targets, xi, homogeneous)
    drift_gain = float(xi @ model.drift[:, e])
    gamma = model.gamma[:, e, :]

    pnl = np.empty(n_paths)
    for i in range(n_paths):
        nxt = sample_next_jump(model, step.posterior, path_rng(seed, i))
        match variant:
            case "inaccessible":
                if nxt.time is not None and nxt.kind == "inaccessible" and nxt.time < exit_by:
                    pnl[i] = (nxt.time - entry) * drift_gain + xi @ gamma[:, nxt.state]
                else:
                    pnl[i] = (exit_by - entry) * drift_gain
            case "accessible":
                if nxt.time is not None and nxt.time < entry:
                    pnl[i] = 0.0
                elif nxt.time is not None and nxt.time <= exit_by + tol:
                    pnl[i] = (nxt.time - entry) * drift_gain + xi @ gamma[:, nxt.state]
                else:
                    pnl[i] = eps * drift_gain

    target_gains = [float(xi @ gamma[:, f]) for f in targets]
    if variant == "inaccessible":
        floor = min(target_gains + [(exit_by - entry) * drift_gain])
    else:
        mass = step.sets.checks[index].mass
        jump_floor = min(target_gains) if mass >= 1 - 1e-9 else min(target_gains + [0.0])
        floor = jump_floor - eps * abs(drift_gain)

    result = ArbitrageResult(
        variant=variant, k=step.k, state=e, entry=entry, exit_by=exit_by, eps=eps, xi=xi, floor=floor, pnl=pnl, seed=seed,
    )
    logger.info(
        f"{variant} arbitrage from t={entry:.6g}: mean P&L {result.mean:.4g}, worst {result.worst:.4g}, "
        f"positive on {100 * result.positive_fraction:.1f}% of {n_paths} paths"
    )
    return result
