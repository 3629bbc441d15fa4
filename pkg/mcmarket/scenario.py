"""
Scenarios h = (n; e_0, …, e_n): the order of visited states without the jump times.

Covers the scenario algebra, the probabilities Π_{e_0,t}(h), the support 𝒜_T(h) of the
terminal log price given h with its affine dimension D(h), and sampling from the law of
the holding times conditioned on the scenario.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any, Iterable, Literal, Sequence

import numpy as np
from scipy.integrate import quad
from scipy.linalg import expm

from .feasibility import affine_dim, hull_member
from .model import MarketModel

if TYPE_CHECKING:
    from .simulate import PathPrefix

logger = logging.getLogger(__name__)

N_MAX_DEFAULT = 8
QUAD_MAX_DEPTH = 4
DISTINCT_RTOL = 1e-3
LOW_ACCEPTANCE = 1e-3
MAX_PROPOSALS = 20_000_000

ProbMethod = Literal["auto", "closed", "quad", "expm"]


@dataclass(frozen=True)
class Scenario:
    states: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(int(s) for s in self.states))
        if not self.states:
            raise ValueError("a scenario visits at least its initial state")
        for a, b in zip(self.states[:-1], self.states[1:]):
            if a == b:
                raise ValueError(f"consecutive states must differ, got {self.states}")

    @property
    def n(self) -> int:
        return len(self.states) - 1

    @property
    def start(self) -> int:
        return self.states[0]

    @property
    def end(self) -> int:
        return self.states[-1]

    def prefix(self, k: int) -> "Scenario":
        """h_(k) = (k; e_0, …, e_k)."""
        self._check_index(k)
        return Scenario(self.states[: k + 1])

    def suffix(self, k: int) -> "Scenario":
        """h^(k) = (n−k; e_k, …, e_n), the remaining scenario after k jumps."""
        self._check_index(k)
        return Scenario(self.states[k:])

    def concat(self, other: "Scenario") -> "Scenario":
        """h ∨ h̃, defined when h ends where h̃ starts."""
        if self.end != other.start:
            raise ValueError(f"cannot join {self.states} and {other.states}: {self.end} != {other.start}")
        return Scenario(self.states + other.states[1:])

    __or__ = concat

    def _check_index(self, k: int) -> None:
        if not 0 <= k <= self.n:
            raise ValueError(f"k must be in [0, {self.n}], got {k}")

    def transitions(self) -> list[tuple[int, int]]:
        return list(zip(self.states[:-1], self.states[1:]))

    def is_admissible(self, model: MarketModel) -> bool:
        """h ∈ Ξ_{e_0}: every step has positive intensity."""
        return all(model.lam[e, k] > 0 for e, k in self.transitions())

    def jump_vector(self, model: MarketModel) -> np.ndarray:
        """β^{0:n}, the summed log jumps along h."""
        beta = model.beta
        total = np.zeros(model.n_assets)
        for e, k in self.transitions():
            total += beta[:, e, k]
        return total

    def labels(self, model: MarketModel) -> list[str]:
        return [model.label(s) for s in self.states]

    def format(self, model: MarketModel) -> str:
        return ">".join(self.labels(model))

    @classmethod
    def from_labels(cls, model: MarketModel, labels: Iterable[str]) -> "Scenario":
        return cls(tuple(model.index(x) for x in labels))

    @classmethod
    def parse(cls, model: MarketModel, text: str) -> "Scenario":
        """Accepts "1>2>1" or "1,2,1"."""
        sep = ">" if ">" in text else ","
        return cls.from_labels(model, [x.strip() for x in text.split(sep) if x.strip()])


def enumerate_scenarios(model: MarketModel, e0: int, n_max: int = N_MAX_DEFAULT) -> list[Scenario]:
    """All admissible scenarios from e0 with at most n_max jumps, by length then lexicographically."""
    if n_max < 0:
        raise ValueError(f"n_max must be non-negative, got {n_max}")
    level = [(int(e0),)]
    out = [Scenario(level[0])]
    for _ in range(n_max):
        level = [s + (k,) for s in level for k in model.reachable(s[-1])]
        if not level:
            break
        out.extend(Scenario(s) for s in level)
    return out


def _distinct(rates: np.ndarray) -> bool:
    if rates.size < 2:
        return True
    r = np.sort(rates)
    return bool(np.min(np.diff(r)) > DISTINCT_RTOL * max(1.0, float(r[-1])))


def _closed_form(rates: np.ndarray, t: float) -> float:
    # ∫ over {Δt ≥ 0, ΣΔt = t} of exp(−Σ rates_i Δt_i): divided differences of exp(−x t)
    total = 0.0
    for i, li in enumerate(rates):
        denom = np.prod(np.delete(rates, i) - li)
        total += math.exp(-li * t) / denom
    return total


def _quad_recursion(rates: np.ndarray, t: float) -> float:
    if rates.size == 1:
        return math.exp(-rates[0] * t)
    head, tail = float(rates[0]), rates[1:]
    value, _ = quad(lambda s: math.exp(-head * s) * _quad_recursion(tail, t - s), 0.0, t, epsabs=1e-13, epsrel=1e-11, limit=200)
    return value


def _phase_type(model: MarketModel, h: Scenario, t: float) -> float:
    n = h.n
    b = np.zeros((n + 1, n + 1))
    for i, e in enumerate(h.states):
        b[i, i] = -model.total_rates[e]
        if i < n:
            b[i, i + 1] = model.lam[e, h.states[i + 1]]
    return float(expm(b * t)[0, n])


def scenario_prob(model: MarketModel, h: Scenario, t: float | None = None, method: ProbMethod = "auto") -> float:
    """
    Π_{e_0,t}(h), the probability that the chain follows exactly h on [0, t].

    Methods:
        closed: hypoexponential closed form, requires pairwise distinct total rates along h
        quad: the jump-by-jump integral recursion with adaptive quadrature
        expm: absorption probability of the bidiagonal phase-type generator
        auto: closed when the rates are well separated; otherwise quad for short scenarios
              and expm for long ones

    Inadmissible scenarios have probability 0.
    """
    t = model.horizon if t is None else float(t)
    if t < 0:
        raise ValueError(f"t must be non-negative, got {t}")
    if not h.is_admissible(model):
        logger.debug(f"scenario {h.format(model)} is inadmissible: probability 0")
        return 0.0
    rates = model.total_rates[list(h.states)]
    if h.n == 0:
        return math.exp(-rates[0] * t)
    if t == 0:
        return 0.0

    if method == "auto":
        if _distinct(rates):
            method = "closed"
        else:
            method = "quad" if h.n <= QUAD_MAX_DEPTH else "expm"

    weight = math.prod(model.lam[e, k] for e, k in h.transitions())
    match method:
        case "closed":
            if not _distinct(rates):
                raise ValueError("closed form needs pairwise distinct total rates along the scenario")
            value = weight * _closed_form(rates, t)
        case "quad":
            value = weight * _quad_recursion(rates, t)
        case "expm":
            value = _phase_type(model, h, t)
        case _:
            raise ValueError(f"unknown method {method!r}")
    return float(min(max(value, 0.0), 1.0))


def tail_mass(model: MarketModel, e0: int, n_max: int = N_MAX_DEFAULT, t: float | None = None) -> float:
    """ℙ(N_t > n_max | Y_0 = e0) = 1 − Σ_{n ≤ n_max} Π_{e0,t}(h)."""
    total = sum(scenario_prob(model, h, t) for h in enumerate_scenarios(model, e0, n_max))
    return max(0.0, 1.0 - total)


def scenario_dim(model: MarketModel, h: Scenario) -> int:
    """D(h): affine dimension of the drift vectors visited along h."""
    return affine_dim(model.drift[:, list(h.states)].T)


def dim_chain(model: MarketModel, h: Scenario) -> list[int]:
    """D(h), D(h^(1)), …, D(h^(n))."""
    return [scenario_dim(model, h.suffix(k)) for k in range(h.n + 1)]


@dataclass(frozen=True, eq=False)
class SupportHull:
    scenario: Scenario
    vertices: np.ndarray      # (v, m), one per distinct visited state
    dimension: int
    horizon: float
    base: np.ndarray          # L_0

    @property
    def point_mass(self) -> bool:
        return self.dimension == 0

    def contains(self, ell: Sequence[float] | np.ndarray) -> bool:
        return hull_member(self.vertices, ell)

    def to_dict(self) -> dict[str, Any]:
        return {"vertices": self.vertices.tolist(), "dimension": self.dimension, "horizon": self.horizon}


def support_hull(model: MarketModel, h: Scenario, T: float | None = None, L0: Sequence[float] | np.ndarray | None = None) -> SupportHull:
    """𝒜_T(h) = hull{L_0 + β^{0:n} + a^{e_i} T : i = 0..n}."""
    T = model.horizon if T is None else float(T)
    base = model.log_s0 if L0 is None else np.asarray(L0, dtype=float)
    shift = base + h.jump_vector(model)
    distinct = list(dict.fromkeys(h.states))
    vertices = shift + model.drift[:, distinct].T * T
    return SupportHull(scenario=h, vertices=vertices, dimension=scenario_dim(model, h), horizon=T, base=base)


def residual_support(model: MarketModel, h: Scenario, prefix: "PathPrefix", T: float | None = None) -> SupportHull:
    """
    𝒜_{T−s}(h^{(N_s)}) started from the observed log price L_s.

    Its vertices lie in 𝒜_T(h) whenever the prefix follows h.
    """
    T = model.horizon if T is None else float(T)
    k = prefix.n_jumps
    if k > h.n or tuple(prefix.states) != h.states[: k + 1]:
        raise ValueError(f"prefix {prefix.states} does not follow scenario {h.states}")
    if prefix.time > T:
        raise ValueError(f"prefix time {prefix.time} is past the horizon {T}")
    return support_hull(model, h.suffix(k), T - prefix.time, prefix.log_price)


def pred_system(
    model: MarketModel,
    h: Scenario,
    ell: Sequence[float] | np.ndarray,
    L0: Sequence[float] | np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """
    The holding-time system Σ_j a^{e_j} Δt_j = ℓ − L_0 − β^{0:n} as (drift columns, target).

    Combined with Σ_j Δt_j = T and Δt ≥ 0 by feasibility.time_bounds.
    """
    base = model.log_s0 if L0 is None else np.asarray(L0, dtype=float)
    ell = np.atleast_1d(np.asarray(ell, dtype=float))
    if ell.shape != (model.n_assets,):
        raise ValueError(f"ell must have {model.n_assets} entries, got {ell.size}")
    return model.drift[:, list(h.states)], ell - base - h.jump_vector(model)


@dataclass(frozen=True, eq=False)
class ConditionalSample:
    holding: np.ndarray        # (n_samples, n+1) holding times Δt_0..Δt_n
    ell: np.ndarray            # (n_samples, m) terminal log prices
    acceptance_rate: float

    @property
    def jump_times(self) -> np.ndarray:
        return np.cumsum(self.holding[:, :-1], axis=1)


def sample_holding_times(
    rates: np.ndarray,
    T: float,
    n_samples: int,
    rng: np.random.Generator,
    batch: int = 4096,
    max_proposals: int | None = None,
) -> tuple[np.ndarray, float]:
    """
    Draws from the density ∝ exp(−Σ rates_i Δt_i) on {Δt ≥ 0, ΣΔt = T}.

    Uniform proposals on the simplex are accepted with probability exp(−Σ (rates_i − min rate) Δt_i).
    Returns the first n_samples accepted draws and the acceptance rate.

    Raises:
        ValueError: max_proposals draws did not yield n_samples accepted ones
    """
    rates = np.asarray(rates, dtype=float)
    k = rates.size
    max_proposals = MAX_PROPOSALS if max_proposals is None else max_proposals
    if k == 1:
        return np.full((n_samples, 1), float(T)), 1.0
    excess = rates - rates.min()
    accepted: list[np.ndarray] = []
    n_acc = 0
    proposals = 0
    while n_acc < n_samples:
        if proposals >= max_proposals:
            raise ValueError(
                f"holding-time sampler for rates {rates.tolist()} on T={T}: {n_acc} of {n_samples} draws "
                f"accepted after {proposals} proposals (rate {n_acc / proposals:.2e})"
            )
        d = rng.dirichlet(np.ones(k), size=batch) * T
        keep = rng.random(batch) < np.exp(-(d @ excess))
        proposals += batch
        accepted.append(d[keep])
        n_acc += int(keep.sum())
        logger.debug(f"holding-time sampler: {n_acc}/{n_samples} accepted, rate {n_acc / proposals:.2e}")
    return np.concatenate(accepted)[:n_samples], n_acc / proposals


def conditional_law_sample(
    model: MarketModel,
    h: Scenario,
    T: float | None = None,
    L0: Sequence[float] | np.ndarray | None = None,
    n_samples: int = 10_000,
    seed: int | np.random.Generator = 0,
) -> ConditionalSample:
    """Sample (Δt_0, …, Δt_n) and ℓ = L_0 + β^{0:n} + Σ a^{e_i} Δt_i given H_T = h."""
    if not h.is_admissible(model):
        raise ValueError(f"scenario {h.format(model)} is inadmissible")
    T = model.horizon if T is None else float(T)
    base = model.log_s0 if L0 is None else np.asarray(L0, dtype=float)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    states = list(h.states)
    try:
        holding, rate = sample_holding_times(model.total_rates[states], T, n_samples, rng)
    except ValueError as e:
        raise ValueError(f"scenario {h.format(model)}: {e}") from e
    ell = base + h.jump_vector(model) + holding @ model.drift[:, states].T
    if rate < LOW_ACCEPTANCE:
        logger.warning(f"conditional sampler for {h.format(model)}: acceptance rate {rate:.2e}")
    return ConditionalSample(holding=holding, ell=ell, acceptance_rate=rate)
