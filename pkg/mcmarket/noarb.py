"""
No-arbitrage for the ordinary agent.

Condition (NA) asks, state by state, for strictly positive intensities λ̃^e over the
reachable states with Γ^e λ̃^e = r^e·1 − μ^e, where Γ^e holds the jump returns γ^{ief}.
When every state is solvable the λ̃ define an equivalent martingale measure whose density
process along a path is computed exactly from the event times.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from .feasibility import FeasibilitySolution, solve_strict
from .model import IntensityOverride, MarketModel, check_equivalent
from .simulate import MCEstimate, PathRecord, mc_expectation

logger = logging.getLogger(__name__)

Z_DEFAULT = 3.0


@dataclass(frozen=True)
class StateOutcome:
    state: int
    reachable: tuple[int, ...]
    solution: FeasibilitySolution

    def to_dict(self, model: MarketModel) -> dict[str, Any]:
        out = {"state": model.label(self.state), "reachable": [model.label(k) for k in self.reachable]}
        out.update(self.solution.to_dict())
        if self.solution.feasible:
            out["tilde_lambda"] = {model.label(k): float(x) for k, x in zip(self.reachable, self.solution.witness)}
        return out


@dataclass(frozen=True)
class NASolution:
    outcomes: tuple[StateOutcome, ...]
    override: IntensityOverride | None

    @property
    def feasible(self) -> bool:
        return all(o.solution.feasible for o in self.outcomes)

    def to_dict(self, model: MarketModel) -> dict[str, Any]:
        return {
            "feasible": self.feasible,
            "states": [o.to_dict(model) for o in self.outcomes],
            "tilde_lambda": None if self.override is None else self.override.tilde_lambda.tolist(),
        }


def jump_returns(model: MarketModel, e: int, targets: list[int] | tuple[int, ...]) -> np.ndarray:
    """Γ^{e,𝒜}: the (m, |𝒜|) matrix of γ^{ief} over f ∈ 𝒜."""
    return model.gamma[:, e, list(targets)].reshape(model.n_assets, len(targets))


def excess_drift(model: MarketModel, e: int) -> np.ndarray:
    """r^e·1 − μ^e."""
    return model.r[e] - model.mu[:, e]


def na_solve(model: MarketModel) -> NASolution:
    """
    Solve (NA) in every state.

    The intensities λ^{e,·} are the reference point, so λ̃ = λ is returned when λ already
    gives a martingale measure, and otherwise the closest max-slack point in ratio terms.
    """
    outcomes = []
    for e in range(model.n_states):
        targets = tuple(model.reachable(e))
        scale = model.lam[e, list(targets)] if targets else None
        solution = solve_strict(jump_returns(model, e, targets), excess_drift(model, e), scale=scale)
        outcomes.append(StateOutcome(state=e, reachable=targets, solution=solution))
        logger.debug(f"(NA) state {model.label(e)}: {solution.status}")

    override = None
    if all(o.solution.feasible for o in outcomes):
        tilde = np.zeros_like(model.lam)
        for o in outcomes:
            tilde[o.state, list(o.reachable)] = o.solution.witness
        override = IntensityOverride.from_matrix(tilde)
    solution = NASolution(outcomes=tuple(outcomes), override=override)
    logger.info(f"(NA) for {model.name!r}: {'feasible' if solution.feasible else 'infeasible'}")
    return solution


@dataclass(frozen=True, eq=False)
class DensityPath:
    """The step-and-exponential path of Z_t: jumps by λ̃/λ, exponential drift in between."""

    knots: np.ndarray        # 0, τ_1, …, τ_N
    log_values: np.ndarray   # log Z right after each knot
    gaps: np.ndarray         # λ^e − λ̃^e of the state held after each knot
    horizon: float

    def log_value_at(self, t: float) -> float:
        if not 0 <= t <= self.horizon:
            raise ValueError(f"t must be in [0, {self.horizon}], got {t}")
        k = int(np.searchsorted(self.knots, t, side="right")) - 1
        return float(self.log_values[k] + self.gaps[k] * (t - self.knots[k]))

    def value_at(self, t: float) -> float:
        return float(np.exp(self.log_value_at(t)))

    @property
    def terminal(self) -> float:
        return self.value_at(self.horizon)


def density_along_path(model: MarketModel, override: IntensityOverride, path: PathRecord) -> DensityPath:
    """
    Z_t = ∏_{jumps e→k by t} (λ̃^{ek}/λ^{ek}) · exp(∫_0^t (λ^{Y_s} − λ̃^{Y_s}) ds).
    """
    if not check_equivalent(model, override):
        raise ValueError("override is not equivalent to the model intensities")
    lam, tilde = model.lam, override.tilde_lambda
    gap_by_state = lam.sum(axis=1) - tilde.sum(axis=1)
    states = np.array(path.states)
    knots = np.concatenate([[0.0], path.jump_times])
    gaps = gap_by_state[states]

    log_values = np.empty(len(states))
    log_values[0] = 0.0
    for j in range(1, len(states)):
        e, k = states[j - 1], states[j]
        log_values[j] = log_values[j - 1] + gaps[j - 1] * (knots[j] - knots[j - 1]) + np.log(tilde[e, k] / lam[e, k])
    return DensityPath(knots=knots, log_values=log_values, gaps=gaps, horizon=path.horizon)


@dataclass(frozen=True)
class MartingaleCheck:
    name: str
    target: float
    mean: float
    se: float
    z_score: float
    passed: bool

    def to_dict(self) -> dict[str, Any]:
        return dict(self.__dict__)


@dataclass(frozen=True)
class MartingaleReport:
    checks: tuple[MartingaleCheck, ...]
    n_paths: int
    seed: int
    z: float

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict[str, Any]:
        return {
            "passed": self.passed,
            "n_paths": self.n_paths,
            "seed": self.seed,
            "z": self.z,
            "checks": [c.to_dict() for c in self.checks],
        }


def reweighted_expectation(
    model: MarketModel,
    override: IntensityOverride,
    functional: Callable[[PathRecord], float | np.ndarray],
    n_paths: int,
    seed: int,
    initial: Any = None,
) -> MCEstimate:
    """E_ℙ[Z_T · f(path)], which equals E_ℚ[f(path)]."""

    def weighted(path: PathRecord):
        return density_along_path(model, override, path).terminal * np.asarray(functional(path), dtype=float)

    return mc_expectation(model, weighted, n_paths, seed, initial=initial)


def verify_martingale_measure(
    model: MarketModel,
    override: IntensityOverride,
    n_paths: int,
    seed: int,
    z: float = Z_DEFAULT,
    initial: Any = None,
) -> MartingaleReport:
    """
    Monte Carlo check of the measure change: E_ℙ[Z_T] = 1 and E_ℙ[Z_T S̃^i_T] = S^i_0.
    """
    estimate = reweighted_expectation(
        model, override, lambda p: np.concatenate([[1.0], p.discounted_price_at(p.horizon)]), n_paths, seed, initial
    )
    targets = np.concatenate([[1.0], [a.s0 for a in model.assets]])
    names = ["E[Z_T]"] + [f"E[Z_T S_T/S0_T] {a.name}" for a in model.assets]
    scores = estimate.z_score(targets)
    mean, se = np.atleast_1d(estimate.mean), np.atleast_1d(estimate.se)
    checks = tuple(
        MartingaleCheck(name, float(t), float(mu), float(s), float(zs), bool(zs <= z))
        for name, t, mu, s, zs in zip(names, targets, mean, se, np.atleast_1d(scores))
    )
    report = MartingaleReport(checks=checks, n_paths=n_paths, seed=seed, z=z)
    for c in checks:
        logger.info(f"{c.name}: {c.mean:.6f} ± {c.se:.2e} (target {c.target}) {'✅' if c.passed else '❌'}")
    return report
