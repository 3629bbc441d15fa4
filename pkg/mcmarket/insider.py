"""
Insider analytics: the agent who knows the terminal log prices ℓ = L_T from time 0.

Given (T, ℓ) and the observed past, some remaining scenarios pin down the next holding
time exactly (the next jump is predictable for the insider) and others leave it random
(totally inaccessible). This module decides which is which, weighs the remaining scenarios
given ℓ, and builds the insider's compensator of the next jump time. The Kohatsu-Higa
embedding, where the insider compensator is a binomial bridge, has closed-form helpers.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from .feasibility import TIME_TOL, TimeBounds, time_bounds
from .model import MarketModel
from .scenario import (
    N_MAX_DEFAULT,
    Scenario,
    conditional_law_sample,
    enumerate_scenarios,
    pred_system,
    sample_holding_times,
    scenario_dim,
    scenario_prob,
    support_hull,
)
from .simulate import PathPrefix, PathRecord, path_rng

logger = logging.getLogger(__name__)

ATOM_TOL = 1e-9
BRIDGE_CAP = 1e12
N_SAMPLES_DEFAULT = 20_000
WIDEN_STEPS = 5


class ZeroPosteriorSupport(ValueError):
    """No admissible continuation is consistent with the insider value ℓ."""


def _ell(model: MarketModel, ell: Any) -> np.ndarray:
    ell = np.atleast_1d(np.asarray(ell, dtype=float))
    if ell.shape != (model.n_assets,):
        raise ValueError(f"ell must have {model.n_assets} entries, got {ell.size}")
    return ell


def _check_prefix(h: Scenario, prefix: PathPrefix) -> int:
    k = prefix.n_jumps
    if k > h.n or tuple(prefix.states) != h.states[: k + 1]:
        raise ValueError(f"observed states {list(prefix.states)} do not follow scenario {list(h.states)}")
    return k


def drops_at_first_step(model: MarketModel, h: Scenario) -> bool:
    """D(h) = D(h^(1)) + 1: the first holding time of h is pinned by (T, ℓ)."""
    return h.n >= 1 and scenario_dim(model, h) == scenario_dim(model, h.suffix(1)) + 1


# -- determination and bounds ---------------------------------------------------


@dataclass(frozen=True)
class Determination:
    determined: bool
    reason: str
    rank_drop: bool
    reachable: bool
    lp: TimeBounds | None

    def __bool__(self) -> bool:
        return self.determined

    @property
    def agrees(self) -> bool:
        """Whether the rank test and the LP bounds give the same answer (True when no LP was run)."""
        if self.lp is None:
            return True
        return self.lp.determined == self.determined


def is_determined(
    model: MarketModel,
    h: Scenario,
    k: int,
    ell: Any,
    T: float | None = None,
    L0: Any = None,
    prefix: PathPrefix | None = None,
) -> Determination:
    """
    Is the k-th jump time of h fixed by (T, ℓ, h) and the first k−1 holding times?

    The rank test asks for ℓ in the relevant support and D(h^(k−1)) = D(h^(k)) + 1. The LP
    bounds of the residual holding-time system give an independent answer when the residual
    target is known: always for k = 1, and for k > 1 when `prefix` supplies the first k−1
    jumps. For k > 1 without a prefix, reachability is checked against 𝒜_T(h).
    """
    if not 1 <= k <= h.n:
        raise ValueError(f"k must be in [1, {h.n}], got {k}")
    T = model.horizon if T is None else float(T)
    ell = _ell(model, ell)
    rank_drop = scenario_dim(model, h.suffix(k - 1)) == scenario_dim(model, h.suffix(k)) + 1

    if prefix is not None:
        if _check_prefix(h, prefix) != k - 1:
            raise ValueError(f"prefix has {prefix.n_jumps} jumps, expected {k - 1}")
        rest, horizon, base = h.suffix(k - 1), T - prefix.time, prefix.log_price
    elif k == 1:
        rest, horizon, base = h, T, (model.log_s0 if L0 is None else np.asarray(L0, dtype=float))
    else:
        reachable = support_hull(model, h, T, L0).contains(ell)
        return Determination(
            determined=reachable and rank_drop,
            reason=("dimension drop" if rank_drop else "no dimension drop") if reachable else "unreachable",
            rank_drop=rank_drop, reachable=reachable, lp=None,
        )

    reachable = support_hull(model, rest, horizon, base).contains(ell)
    drifts, target = pred_system(model, rest, ell, base)
    lp = time_bounds(drifts, target, horizon)
    determined = reachable and rank_drop
    reason = ("dimension drop" if rank_drop else "no dimension drop") if reachable else "unreachable"
    result = Determination(determined=determined, reason=reason, rank_drop=rank_drop, reachable=reachable, lp=lp)
    if reachable and lp is not None and not result.agrees:
        logger.warning(
            f"rank test and LP bounds disagree for {h.format(model)} at k={k}: "
            f"rank drop {rank_drop}, LP width {lp.t_hi - lp.t_lo:.3e}"
        )
    return result


@dataclass(frozen=True)
class PredictableBounds:
    lower: float        # τ̲_k
    upper: float        # τ̄_k
    determined: bool
    interior: bool

    def to_dict(self) -> dict[str, Any]:
        return dict(self.__dict__)


def predictable_bounds(
    model: MarketModel,
    prefix: PathPrefix,
    h: Scenario,
    ell: Any,
    T: float | None = None,
) -> PredictableBounds | None:
    """
    (τ̲_k, τ̄_k) for the next jump k = prefix.n_jumps + 1, as τ_{k−1} + the LP bounds of the
    residual holding-time system. None when ℓ cannot be reached along h from the prefix.
    """
    T = model.horizon if T is None else float(T)
    done = _check_prefix(h, prefix)
    if done >= h.n:
        raise ValueError(f"scenario {list(h.states)} has no jump after the observed {done}")
    rest = h.suffix(done)
    drifts, target = pred_system(model, rest, _ell(model, ell), prefix.log_price)
    tb = time_bounds(drifts, target, T - prefix.time)
    if tb is None:
        return None
    return PredictableBounds(
        lower=prefix.time + tb.t_lo, upper=prefix.time + tb.t_hi, determined=tb.determined, interior=tb.interior
    )


@dataclass(frozen=True)
class JumpClassification:
    k: int
    scenario: Scenario
    mode: str                    # "determined" or "undetermined"
    lower: float
    upper: float
    actual_time: float | None
    predictable_time: float | None

    @property
    def accessible(self) -> bool:
        return self.mode == "determined"

    def to_dict(self, model: MarketModel) -> dict[str, Any]:
        return {
            "k": self.k,
            "scenario": self.scenario.labels(model),
            "mode": self.mode,
            "kind": "accessible" if self.accessible else "totally_inaccessible",
            "lower": self.lower,
            "upper": self.upper,
            "predictable_time": self.predictable_time,
            "actual_time": self.actual_time,
        }


def classify_jump(model: MarketModel, path: PathRecord, k: int, ell: Any = None) -> JumpClassification:
    """
    Classify the k-th jump of a path for an insider who knows ℓ and the path's scenario H_T.
    """
    if not 1 <= k <= path.n_jumps:
        raise ValueError(f"k must be in [1, {path.n_jumps}], got {k}")
    ell = path.terminal_log_price if ell is None else _ell(model, ell)
    h = path.scenario()
    prefix = path.prefix(k - 1)
    bounds = predictable_bounds(model, prefix, h, ell, path.horizon)
    if bounds is None:
        raise ZeroPosteriorSupport(f"ell {ell.tolist()} is not reachable along the path's own scenario")
    det = is_determined(model, h, k, ell, path.horizon, prefix=prefix)
    mode = "determined" if det else "undetermined"
    return JumpClassification(
        k=k, scenario=h, mode=mode, lower=bounds.lower, upper=bounds.upper,
        actual_time=float(path.jump_times[k - 1]),
        predictable_time=bounds.upper if det else None,
    )


def is_absolutely_continuous(model: MarketModel, h: Scenario) -> bool:
    """With H_T = h known, the insider compensator has no atoms iff D(h) = 0."""
    return scenario_dim(model, h) == 0


# -- D_k sets -----------------------------------------------------------------------


@dataclass(frozen=True)
class PredictableGroup:
    time: float
    mass: float
    scenarios: tuple[Scenario, ...]


def group_by_time(entries: Sequence[tuple[float, float, Scenario]], horizon: float) -> list[PredictableGroup]:
    """Merge (time, mass, scenario) entries whose times agree within TIME_TOL."""
    tol = TIME_TOL * max(1.0, horizon)
    groups: list[list[tuple[float, float, Scenario]]] = []
    for entry in sorted(entries, key=lambda x: x[0]):
        if groups and entry[0] - groups[-1][0][0] <= tol:
            groups[-1].append(entry)
        else:
            groups.append([entry])
    return [
        PredictableGroup(time=g[0][0], mass=float(sum(x[1] for x in g)), scenarios=tuple(x[2] for x in g))
        for g in groups
    ]


@dataclass(frozen=True)
class DkSet:
    k: int
    members: tuple[Scenario, ...]
    others: tuple[Scenario, ...]
    representatives: tuple[PredictableGroup, ...]


def dk_sets(
    model: MarketModel,
    k: int,
    n_max: int = N_MAX_DEFAULT,
    e0: int = 0,
    prefix: PathPrefix | None = None,
    ell: Any = None,
    T: float | None = None,
) -> DkSet:
    """
    𝒟_k: enumerated scenarios whose dimension drops by one at step k.

    With a prefix (k−1 observed jumps) and ℓ, members reachable from the prefix are grouped
    by their predictable time τ̄_k; each group is one representative class.
    """
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    T = model.horizon if T is None else float(T)
    if prefix is not None:
        if prefix.n_jumps != k - 1:
            raise ValueError(f"prefix has {prefix.n_jumps} jumps, expected {k - 1}")
        e0 = prefix.states[0]
    pool = [h for h in enumerate_scenarios(model, e0, n_max) if h.n >= k]
    if prefix is not None:
        pool = [h for h in pool if h.states[:k] == tuple(prefix.states)]

    members, others = [], []
    for h in pool:
        drop = scenario_dim(model, h.suffix(k - 1)) == scenario_dim(model, h.suffix(k)) + 1
        (members if drop else others).append(h)

    groups: list[PredictableGroup] = []
    if prefix is not None and ell is not None:
        entries = []
        for h in members:
            bounds = predictable_bounds(model, prefix, h, ell, T)
            if bounds is not None and bounds.determined:
                entries.append((bounds.upper, 0.0, h))
        groups = group_by_time(entries, T)
    return DkSet(k=k, members=tuple(members), others=tuple(others), representatives=tuple(groups))


# -- posterior over the remaining scenario --------------------------------------


@dataclass(frozen=True, eq=False)
class Candidate:
    """A continuation from the current state, with its weight given ℓ."""

    scenario: Scenario
    prior: float
    dimension: int
    density: float
    density_se: float
    weight: float
    determined: bool
    first_hold: TimeBounds | None
    box_holding: np.ndarray | None   # conditional holding times whose ℓ fell near the target


@dataclass(frozen=True, eq=False)
class Posterior:
    prefix: PathPrefix
    ell: np.ndarray
    horizon: float
    dimension: int                   # smallest support dimension containing ℓ
    candidates: tuple[Candidate, ...]
    n_considered: int
    n_max: int

    @property
    def atomic(self) -> bool:
        return self.dimension == 0

    @property
    def remaining_time(self) -> float:
        return self.horizon - self.prefix.time

    def full_scenario(self, c: Candidate) -> Scenario:
        return Scenario(tuple(self.prefix.states)).concat(c.scenario)

    @property
    def weights(self) -> dict[Scenario, float]:
        """ℙ(H_T = h | L_T = ℓ, observed past), keyed by the full scenario."""
        return {self.full_scenario(c): c.weight for c in self.candidates}

    def supported(self, threshold: float) -> list[Candidate]:
        return [c for c in self.candidates if c.weight >= threshold]

    def to_dict(self, model: MarketModel) -> dict[str, Any]:
        return {
            "time": self.prefix.time,
            "dimension": self.dimension,
            "n_considered": self.n_considered,
            "n_max": self.n_max,
            "candidates": [
                {"continuation": c.scenario.labels(model), "weight": c.weight, "prior": c.prior,
                 "density": c.density, "density_se": c.density_se, "determined": c.determined}
                for c in self.candidates
            ],
        }


def _affine_coordinates(vertices: np.ndarray, dim: int) -> tuple[np.ndarray, np.ndarray]:
    origin = vertices[0]
    _, _, vt = np.linalg.svd(vertices - origin)
    return origin, vt[:dim]


def _fd_widths(coords: np.ndarray) -> np.ndarray:
    n = coords.shape[0]
    q75, q25 = np.percentile(coords, [75, 25], axis=0)
    widths = 2.0 * (q75 - q25) / n ** (1 / 3)
    fallback = (coords.max(axis=0) - coords.min(axis=0)) / math.sqrt(n)
    return np.where(widths > 0, widths, np.where(fallback > 0, fallback, 1.0))


def posterior_scenario_weights(
    model: MarketModel,
    prefix: PathPrefix,
    ell: Any,
    n_max: int = N_MAX_DEFAULT,
    n_samples: int = N_SAMPLES_DEFAULT,
    seed: int = 0,
    T: float | None = None,
) -> Posterior:
    """
    Weights of the continuations of the observed prefix given L_T = ℓ.

    A continuation is a candidate when its residual support 𝒜_{T−s} contains ℓ. Only
    candidates of the smallest support dimension d* carry weight. For d* = 0 the conditional
    laws are point masses and the weights are the scenario probabilities Π renormalized.
    For d* ≥ 1 each weight is Π times the conditional density at ℓ, estimated with a box of
    Freedman-Diaconis widths in orthonormal coordinates of the candidate's support.

    Raises:
        ZeroPosteriorSupport: no continuation with at most n_max jumps can produce ℓ
    """
    T = model.horizon if T is None else float(T)
    ell = _ell(model, ell)
    remaining = T - prefix.time
    if remaining < 0:
        raise ValueError(f"prefix time {prefix.time} is past the horizon {T}")
    base = prefix.log_price

    pool = enumerate_scenarios(model, prefix.current_state, n_max)
    found = []
    for h in pool:
        hull = support_hull(model, h, remaining, base)
        if hull.contains(ell):
            prior = scenario_prob(model, h, remaining, method="expm")
            if prior > 0:
                found.append((h, hull, prior))
    if not found:
        raise ZeroPosteriorSupport(
            f"no continuation of {list(prefix.states)} with at most {n_max} jumps reaches ell={ell.tolist()}"
        )
    d_star = min(hull.dimension for _, hull, _ in found)
    found = [x for x in found if x[1].dimension == d_star]

    raw: list[tuple[Scenario, float, float, float, np.ndarray | None]] = []
    if d_star == 0:
        raw = [(h, prior, 1.0, 0.0, None) for h, _, prior in found]
    else:
        samples = []
        for i, (h, hull, prior) in enumerate(found):
            cond = conditional_law_sample(model, h, remaining, base, n_samples, path_rng(seed, i))
            origin, basis = _affine_coordinates(hull.vertices, d_star)
            coords = (cond.ell - origin) @ basis.T
            samples.append((h, prior, coords, (ell - origin) @ basis.T, _fd_widths(coords), cond.holding))
        for step in range(WIDEN_STEPS):
            raw = []
            for h, prior, coords, target, widths, holding in samples:
                w = widths * 2.0**step
                inside = np.all(np.abs(coords - target) <= w / 2, axis=1)
                count = int(inside.sum())
                volume = float(np.prod(w)) * len(coords)
                raw.append((h, prior, count / volume, math.sqrt(count) / volume, holding[inside]))
            if any(density > 0 for _, _, density, _, _ in raw):
                break
            logger.debug(f"posterior: no samples near ell, widening boxes (step {step + 1})")
        else:
            raise ZeroPosteriorSupport(f"no conditional samples land near ell={ell.tolist()}")

    total = sum(prior * density for _, prior, density, _, _ in raw)
    candidates = []
    for h, prior, density, se, holding in raw:
        weight = prior * density / total
        if weight <= 0:
            continue
        determined = drops_at_first_step(model, h)
        first_hold = None
        if h.n >= 1:
            drifts, target = pred_system(model, h, ell, base)
            first_hold = time_bounds(drifts, target, remaining)
        candidates.append(Candidate(h, prior, d_star, density, se, weight, determined, first_hold, holding))

    logger.debug(
        f"posterior at t={prefix.time:.6g}: {len(candidates)} of {len(pool)} continuations, d*={d_star}"
    )
    return Posterior(
        prefix=prefix, ell=ell, horizon=T, dimension=d_star, candidates=tuple(candidates),
        n_considered=len(pool), n_max=n_max,
    )


@dataclass(frozen=True)
class NextJump:
    time: float | None
    state: int | None
    kind: str                 # "accessible", "inaccessible" or "none"
    continuation: Scenario


def sample_next_jump(model: MarketModel, posterior: Posterior, rng: np.random.Generator) -> NextJump:
    """Draw (τ_k, Y_{τ_k}) from the insider's law at the prefix time."""
    weights = np.array([c.weight for c in posterior.candidates])
    c = posterior.candidates[int(rng.choice(len(weights), p=weights / weights.sum()))]
    s = posterior.prefix.time
    if c.scenario.n == 0:
        return NextJump(None, None, "none", c.scenario)
    if c.determined and c.first_hold is not None:
        return NextJump(s + c.first_hold.t_lo, c.scenario.states[1], "accessible", c.scenario)
    if c.box_holding is not None and len(c.box_holding):
        hold = float(c.box_holding[rng.integers(len(c.box_holding)), 0])
    else:
        holding, _ = sample_holding_times(model.total_rates[list(c.scenario.states)], posterior.remaining_time, 1, rng)
        hold = float(holding[0, 0])
    return NextJump(s + hold, c.scenario.states[1], "inaccessible", c.scenario)


# -- compensators -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CompensatorMixture:
    """The insider's law of the next jump time τ_k: atoms at predictable times plus a density."""

    k: int
    start: float
    atoms: tuple[PredictableGroup, ...]
    edges: np.ndarray
    density: np.ndarray
    density_se: np.ndarray
    hazard: np.ndarray
    inaccessible_mass: float
    no_jump_mass: float

    @property
    def accessible_mass(self) -> float:
        return float(sum(a.mass for a in self.atoms))

    @property
    def total_mass(self) -> float:
        return self.accessible_mass + float(np.sum(self.density * np.diff(self.edges))) + self.no_jump_mass

    def to_dict(self) -> dict[str, Any]:
        return {
            "k": self.k,
            "start": self.start,
            "atoms": [{"time": a.time, "mass": a.mass} for a in self.atoms],
            "accessible_mass": self.accessible_mass,
            "inaccessible_mass": self.inaccessible_mass,
            "no_jump_mass": self.no_jump_mass,
        }


def insider_compensator_mixture(
    model: MarketModel,
    prefix: PathPrefix,
    ell: Any,
    n_max: int = N_MAX_DEFAULT,
    n_samples: int = N_SAMPLES_DEFAULT,
    seed: int = 0,
    grid: int = 50,
    T: float | None = None,
    posterior: Posterior | None = None,
) -> CompensatorMixture:
    """
    Decompose the insider's law of the next jump after the prefix.

    Determined continuations put atoms at their predictable times (grouped by time). The
    others contribute a density on a grid over (s, T], estimated from conditional holding
    times, together with its hazard form density / (1 − F(s−)).
    """
    T = model.horizon if T is None else float(T)
    post = posterior or posterior_scenario_weights(model, prefix, ell, n_max, n_samples, seed, T)
    s = prefix.time
    edges = np.linspace(s, T, grid + 1)
    widths = np.diff(edges)
    density = np.zeros(grid)
    variance = np.zeros(grid)
    rng = path_rng(seed, 1 << 20)

    atoms_in, no_jump, inaccessible = [], 0.0, 0.0
    for c in post.candidates:
        if c.scenario.n == 0:
            no_jump += c.weight
        elif c.determined and c.first_hold is not None:
            atoms_in.append((s + c.first_hold.t_lo, c.weight, post.full_scenario(c)))
        else:
            inaccessible += c.weight
            if c.box_holding is not None and len(c.box_holding):
                holds = c.box_holding[:, 0]
            else:
                holding, _ = sample_holding_times(model.total_rates[list(c.scenario.states)], post.remaining_time, n_samples, rng)
                holds = holding[:, 0]
            counts, _ = np.histogram(s + holds, bins=edges)
            p = counts / len(holds)
            density += c.weight * p / widths
            variance += c.weight**2 * p * (1 - p) / len(holds) / widths**2

    atoms = group_by_time(atoms_in, T)
    cdf_before = np.concatenate([[0.0], np.cumsum(density * widths)[:-1]])
    for a in atoms:
        cdf_before += a.mass * (a.time < edges[:-1])
    survival = 1.0 - cdf_before
    hazard = np.where(survival > 1e-12, density / np.where(survival > 1e-12, survival, 1.0), 0.0)
    return CompensatorMixture(
        k=prefix.n_jumps + 1, start=s, atoms=tuple(atoms), edges=edges, density=density,
        density_se=np.sqrt(variance), hazard=hazard, inaccessible_mass=inaccessible, no_jump_mass=no_jump,
    )


# -- Kohatsu-Higa embedding --------------------------------------------------------


@dataclass(frozen=True)
class KHStructure:
    """Three states on a cycle: up-moves 1→2→3→1 carry β⁺, down-moves carry β⁻; one common drift."""

    beta_up: np.ndarray
    beta_down: np.ndarray
    drift: np.ndarray
    lambda_up: float
    lambda_down: float

    @staticmethod
    def is_up(e: int, k: int) -> bool:
        return k == (e + 1) % 3


def kh_structure(model: MarketModel) -> KHStructure:
    """Recognize the embedding, or raise ValueError."""
    if model.n_states != 3:
        raise ValueError(f"the Kohatsu-Higa embedding has 3 states, model has {model.n_states}")
    up = [(e, (e + 1) % 3) for e in range(3)]
    down = [(e, (e - 1) % 3) for e in range(3)]
    lam, beta, drift = model.lam, model.beta, model.drift
    for moves, what in ((up, "up"), (down, "down")):
        rates = {float(lam[e, k]) for e, k in moves}
        if len(rates) != 1 or next(iter(rates)) <= 0:
            raise ValueError(f"{what}-moves must share one positive intensity, got {sorted(rates)}")
        if any(not np.allclose(beta[:, e, k], beta[:, moves[0][0], moves[0][1]], rtol=0, atol=ATOM_TOL) for e, k in moves):
            raise ValueError(f"{what}-moves must share one jump size")
    if not np.allclose(drift, drift[:, :1], rtol=0, atol=ATOM_TOL):
        raise ValueError("all states must share one drift")
    return KHStructure(
        beta_up=beta[:, 0, 1].copy(), beta_down=beta[:, 0, 2].copy(), drift=drift[:, 0].copy(),
        lambda_up=float(lam[0, 1]), lambda_down=float(lam[0, 2]),
    )


def kh_counts(states: Sequence[int]) -> tuple[int, int]:
    """(up-moves, down-moves) along a sequence of visited states."""
    ups = sum(KHStructure.is_up(e, k) for e, k in zip(states[:-1], states[1:]))
    return ups, len(states) - 1 - ups


def kh_jump_pairs(
    model: MarketModel,
    ell: Any,
    T: float | None = None,
    L0: Any = None,
    n_max: int = N_MAX_DEFAULT,
) -> list[tuple[int, int]]:
    """
    All (n⁺, n⁻) with n⁺ + n⁻ ≤ n_max and L_0 + aT + β⁺n⁺ + β⁻n⁻ = ℓ within ATOM_TOL.

    One pair means ℓ pins the counts; several pairs happen when β⁺/β⁻ is rational.
    """
    kh = kh_structure(model)
    T = model.horizon if T is None else float(T)
    base = model.log_s0 if L0 is None else np.asarray(L0, dtype=float)
    residual = _ell(model, ell) - base - kh.drift * T
    tol = ATOM_TOL * max(1.0, float(np.abs(residual).max()))
    pairs = []
    for n_up in range(n_max + 1):
        for n_down in range(n_max + 1 - n_up):
            if np.all(np.abs(kh.beta_up * n_up + kh.beta_down * n_down - residual) <= tol):
                pairs.append((n_up, n_down))
    return pairs


@dataclass(frozen=True)
class BridgeIntensity:
    up: float
    down: float
    saturated: bool


def insider_compensator_kh(
    lambda_plus: float,
    lambda_minus: float,
    t: float,
    T: float,
    n_up_total: int,
    n_down_total: int,
    n_up_before: int = 0,
    n_down_before: int = 0,
) -> BridgeIntensity:
    """
    Insider intensities of the up and down counts: (N_T − N_{t−}) / (T − t) for each.

    Knowing the terminal counts turns each Poisson process into a binomial bridge, whose
    intensity no longer depends on λ±. Values above BRIDGE_CAP are capped and flagged.
    """
    if lambda_plus <= 0 or lambda_minus <= 0:
        raise ValueError(f"intensities must be positive, got {lambda_plus}, {lambda_minus}")
    if not 0 <= t < T:
        raise ValueError(f"t must be in [0, T) = [0, {T}), got {t}")
    if not (0 <= n_up_before <= n_up_total and 0 <= n_down_before <= n_down_total):
        raise ValueError(
            f"counts so far ({n_up_before}, {n_down_before}) exceed the totals ({n_up_total}, {n_down_total})"
        )
    saturated = False
    out = []
    for remaining in (n_up_total - n_up_before, n_down_total - n_down_before):
        value = remaining / (T - t) if remaining else 0.0
        if value > BRIDGE_CAP:
            value, saturated = BRIDGE_CAP, True
        out.append(value)
    if saturated:
        logger.warning(f"bridge intensity saturated at t={t} (T={T})")
    return BridgeIntensity(up=out[0], down=out[1], saturated=saturated)


def bridge_compensator_integral(jump_times: Sequence[float] | np.ndarray, n_total: int, T: float, t: float) -> float:
    """∫_0^t (n − N_s) / (T − s) ds, exactly, for a count with the given jump times."""
    if not 0 <= t <= T:
        raise ValueError(f"t must be in [0, {T}], got {t}")
    times = np.sort(np.asarray(jump_times, dtype=float))
    knots = np.concatenate([[0.0], times[times < t], [t]])
    total = 0.0
    for c, (a, b) in enumerate(zip(knots[:-1], knots[1:])):
        remaining = n_total - c
        if remaining == 0 or a == b:
            continue
        if b >= T:
            return math.inf
        total += remaining * (math.log(T - a) - math.log(T - b))
    return total


def simulate_bridge(n: int, T: float, rng: np.random.Generator) -> np.ndarray:
    """Jump times of a Poisson process on [0, T] conditioned on n jumps: sorted uniforms."""
    return np.sort(rng.uniform(0.0, T, size=n))
