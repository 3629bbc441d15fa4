"""
Exact path simulation of the chain and its log discounted prices, plus the Monte Carlo harness.

Every replication owns an independent PCG64 stream derived from (seed, path index) through
numpy's SeedSequence spawn keys, so results do not depend on the number of worker threads.
"""
from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .model import IntensityOverride, MarketModel
from .scenario import Scenario

logger = logging.getLogger(__name__)

THREADS_ENV = "MCMARKET_THREADS"


class FunctionalError(RuntimeError):
    """A Monte Carlo functional raised on one of the paths."""

    def __init__(self, path_index: int, message: str):
        super().__init__(f"functional failed on path {path_index}: {message}")
        self.path_index = path_index


@dataclass(frozen=True, eq=False)
class PathPrefix:
    """What an observer of prices knows at `time`: the visited states and the jump times so far."""

    states: tuple[int, ...]
    jump_times: np.ndarray
    time: float
    log_price: np.ndarray

    @property
    def current_state(self) -> int:
        return self.states[-1]

    @property
    def n_jumps(self) -> int:
        return len(self.jump_times)

    @property
    def last_jump_time(self) -> float:
        return float(self.jump_times[-1]) if len(self.jump_times) else 0.0


@dataclass(frozen=True, eq=False)
class PathRecord:
    model: MarketModel = field(repr=False)
    states: tuple[int, ...]          # Y_0, Y_{τ_1}, …, Y_{τ_N}
    jump_times: np.ndarray           # τ_1 < … < τ_N ≤ T
    log_prices: np.ndarray           # (N+1, m), L right after each jump; row 0 is L_0
    horizon: float

    @property
    def initial_state(self) -> int:
        return self.states[0]

    @property
    def n_jumps(self) -> int:
        return len(self.jump_times)

    @property
    def terminal_log_price(self) -> np.ndarray:
        """L_T, the insider's variable."""
        return self.log_price_at(self.horizon)

    def scenario(self) -> Scenario:
        return Scenario(self.states)

    def transitions(self) -> list[tuple[int, int]]:
        return list(zip(self.states[:-1], self.states[1:]))

    def _jumps_through(self, t: float, inclusive: bool) -> int:
        side = "right" if inclusive else "left"
        return int(np.searchsorted(self.jump_times, t, side=side))

    def state_at(self, t: float) -> int:
        """Y_t (right-continuous)."""
        return self.states[self._jumps_through(t, True)]

    def state_before(self, t: float) -> int:
        """Y_{t−}."""
        return self.states[self._jumps_through(t, False)]

    def count_before(self, t: float) -> int:
        """N_{t−}."""
        return self._jumps_through(t, False)

    def _log_price(self, t: float, k: int) -> np.ndarray:
        t_k = float(self.jump_times[k - 1]) if k else 0.0
        return self.log_prices[k] + self.model.drift[:, self.states[k]] * (t - t_k)

    def log_price_at(self, t: float) -> np.ndarray:
        return self._log_price(t, self._jumps_through(t, True))

    def log_price_before(self, t: float) -> np.ndarray:
        return self._log_price(t, self._jumps_through(t, False))

    def discounted_price_at(self, t: float) -> np.ndarray:
        return np.exp(self.log_price_at(t))

    def counts(self, t: float | None = None) -> np.ndarray:
        """N^{ek}_t as an (n, n) matrix."""
        t = self.horizon if t is None else t
        k = self._jumps_through(t, True)
        n = np.zeros((self.model.n_states, self.model.n_states), dtype=np.int64)
        if k:
            np.add.at(n, (np.array(self.states[:k]), np.array(self.states[1 : k + 1])), 1)
        return n

    def occupation(self, t: float | None = None) -> np.ndarray:
        """∫_0^t 1{Y_s = e} ds for every state e."""
        t = self.horizon if t is None else t
        k = self._jumps_through(t, True)
        knots = np.concatenate([[0.0], self.jump_times[:k], [t]])
        occ = np.zeros(self.model.n_states)
        np.add.at(occ, np.array(self.states[: k + 1]), np.diff(knots))
        return occ

    def compensated(self, e: int, k: int, t: float | None = None, lam: np.ndarray | None = None) -> float:
        """M^{ek}_t = N^{ek}_t − ∫_0^t λ^{ek} 1{Y_s = e} ds."""
        lam = self.model.lam if lam is None else lam
        return float(self.counts(t)[e, k] - lam[e, k] * self.occupation(t)[e])

    def prefix(self, k: int) -> PathPrefix:
        """The information at the k-th jump time τ_k (k = 0 is time 0)."""
        if not 0 <= k <= self.n_jumps:
            raise ValueError(f"k must be in [0, {self.n_jumps}], got {k}")
        time = float(self.jump_times[k - 1]) if k else 0.0
        return PathPrefix(self.states[: k + 1], self.jump_times[:k].copy(), time, self.log_prices[k].copy())

    def observed_before(self, s: float) -> PathPrefix:
        """The jumps strictly before s, observed at time s."""
        if not 0 <= s <= self.horizon:
            raise ValueError(f"s must be in [0, {self.horizon}], got {s}")
        k = self._jumps_through(s, False)
        return PathPrefix(self.states[: k + 1], self.jump_times[:k].copy(), float(s), self.log_price_before(s))

    def to_dict(self) -> dict[str, Any]:
        labels = self.model.states
        return {
            "initial_state": labels[self.initial_state],
            "horizon": self.horizon,
            "jumps": [
                {"time": float(t), "to": labels[e]} for t, e in zip(self.jump_times, self.states[1:])
            ],
        }


def build_path(
    model: MarketModel,
    states: Sequence[int],
    jump_times: Sequence[float] | np.ndarray,
    horizon: float | None = None,
) -> PathRecord:
    """Assemble a PathRecord from visited states and jump times, checking admissibility."""
    horizon = model.horizon if horizon is None else float(horizon)
    states = tuple(int(s) for s in states)
    times = np.asarray(jump_times, dtype=float).ravel()
    if len(states) != times.size + 1:
        raise ValueError(f"{len(states)} states do not match {times.size} jump times")
    if times.size and (times[0] <= 0 or times[-1] > horizon or np.any(np.diff(times) <= 0)):
        raise ValueError(f"jump times must be strictly increasing in (0, {horizon}]")
    for e, k in zip(states[:-1], states[1:]):
        if model.lam[e, k] <= 0:
            raise ValueError(f"transition {model.label(e)}->{model.label(k)} has zero intensity")

    drift, beta = model.drift, model.beta
    log_prices = np.empty((len(states), model.n_assets))
    log_prices[0] = model.log_s0
    t_prev = 0.0
    for j, t in enumerate(times, start=1):
        e, k = states[j - 1], states[j]
        log_prices[j] = log_prices[j - 1] + drift[:, e] * (t - t_prev) + beta[:, e, k]
        t_prev = t
    log_prices.setflags(write=False)
    times.setflags(write=False)
    return PathRecord(model=model, states=states, jump_times=times, log_prices=log_prices, horizon=horizon)


def path_from_events(model: MarketModel, doc: Mapping[str, Any], horizon: float | None = None) -> PathRecord:
    """Parse the JSON path form {"initial_state": label, "jumps": [{"time": t, "to": label}, ...]}."""
    try:
        states = [model.index(doc["initial_state"])]
        times = []
        for jump in doc.get("jumps", []):
            times.append(float(jump["time"]))
            states.append(model.index(jump["to"]))
    except KeyError as e:
        raise ValueError(f"path document is missing key {e.args[0]!r}") from e
    if horizon is None:
        horizon = float(doc.get("horizon", model.horizon))
    return build_path(model, states, times, horizon)


def path_rng(seed: int, index: int) -> np.random.Generator:
    """The replication stream for path `index` under master seed `seed`."""
    if seed < 0 or index < 0:
        raise ValueError(f"seed and index must be non-negative, got seed={seed}, index={index}")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))


def _initial_index(model: MarketModel, initial: Any, rng: np.random.Generator) -> int:
    match initial:
        case None:
            return 0
        case str():
            return model.index(initial)
        case int() | np.integer():
            if not 0 <= int(initial) < model.n_states:
                raise ValueError(f"initial state index {initial} out of range")
            return int(initial)
        case _:
            law = np.asarray(initial, dtype=float)
            if law.shape != (model.n_states,) or np.any(law < 0) or not math.isclose(law.sum(), 1.0, abs_tol=1e-9):
                raise ValueError(f"initial law must be a probability vector of length {model.n_states}")
            return int(np.searchsorted(np.cumsum(law), rng.random() * law.sum(), side="right").clip(0, model.n_states - 1))


def simulate_path(
    model: MarketModel,
    initial: Any = None,
    seed: int | np.random.Generator = 0,
    horizon: float | None = None,
) -> PathRecord:
    """
    Simulate one path exactly.

    Holding times come from the inverse exponential CDF and the destination from the
    cumulative row of λ, one uniform each.

    Args:
        model: the market
        initial: state label, state index, or an initial law over the states
        seed: master seed (stream 0) or an explicit Generator
        horizon: overrides model.horizon
    """
    rng = seed if isinstance(seed, np.random.Generator) else path_rng(int(seed), 0)
    horizon = model.horizon if horizon is None else float(horizon)
    e = _initial_index(model, initial, rng)
    rates = model.total_rates
    cum = np.cumsum(model.lam, axis=1)

    states = [e]
    times: list[float] = []
    t = 0.0
    while rates[e] > 0:
        t += -math.log(1.0 - rng.random()) / rates[e]
        if t > horizon:
            break
        u = rng.random() * rates[e]
        k = int(np.searchsorted(cum[e], u, side="right"))
        if k >= model.n_states:
            # u rounded onto the row total
            k = int(np.flatnonzero(model.lam[e] > 0)[-1])
        times.append(t)
        states.append(k)
        e = k
    return build_path(model, states, times, horizon)


def simulate_under(
    model: MarketModel,
    override: IntensityOverride,
    initial: Any = None,
    seed: int | np.random.Generator = 0,
    horizon: float | None = None,
) -> PathRecord:
    """Simulate with λ̃ in place of λ, i.e. directly under the equivalent measure."""
    return simulate_path(model.with_intensities(override), initial, seed, horizon)


def simulate_paths(
    model: MarketModel,
    n_paths: int,
    seed: int,
    initial: Any = None,
    override: IntensityOverride | None = None,
    horizon: float | None = None,
) -> list[PathRecord]:
    sim_model = model if override is None else model.with_intensities(override)
    return [simulate_path(sim_model, initial, path_rng(seed, i), horizon) for i in range(n_paths)]


@dataclass(frozen=True)
class MCEstimate:
    mean: float | np.ndarray
    se: float | np.ndarray
    n_paths: int
    seed: int

    def z_score(self, target: float | np.ndarray) -> np.ndarray:
        """|mean − target| / SE, with 0/0 read as 0."""
        diff = np.abs(np.asarray(self.mean) - target)
        se = np.asarray(self.se)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(se > 0, diff / np.where(se > 0, se, 1.0), np.where(diff > 0, np.inf, 0.0))

    def within(self, target: float | np.ndarray, z: float = 3.0) -> bool:
        return bool(np.all(self.z_score(target) <= z))

    def to_dict(self) -> dict[str, Any]:
        return {
            "mean": np.asarray(self.mean).tolist(),
            "se": np.asarray(self.se).tolist(),
            "n_paths": self.n_paths,
            "seed": self.seed,
        }


def mc_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        threads = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if threads < 1:
        raise ValueError(f"{THREADS_ENV} must be at least 1, got {threads}")
    return threads


def mc_expectation(
    model: MarketModel,
    functional: Callable[[PathRecord], float | np.ndarray],
    n_paths: int,
    seed: int,
    initial: Any = None,
    override: IntensityOverride | None = None,
    horizon: float | None = None,
    threads: int | None = None,
) -> MCEstimate:
    """
    Sample mean and standard error of functional(path) over independent replications.

    Replication i always uses path_rng(seed, i); the reduction runs in path order, so the
    estimate is bit-identical for any thread count.
    """
    if n_paths < 2:
        raise ValueError(f"n_paths must be at least 2, got {n_paths}")
    sim_model = model if override is None else model.with_intensities(override)
    threads = mc_threads() if threads is None else threads

    def run(indices: range) -> list[np.ndarray]:
        out = []
        for i in indices:
            path = simulate_path(sim_model, initial, path_rng(seed, i), horizon)
            try:
                out.append(np.asarray(functional(path), dtype=float))
            except Exception as e:
                raise FunctionalError(i, f"{type(e).__name__}: {e}") from e
        return out

    if threads == 1:
        values = run(range(n_paths))
    else:
        bounds = np.linspace(0, n_paths, threads + 1).astype(int)
        chunks = [range(lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:])]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            values = [v for chunk in pool.map(run, chunks) for v in chunk]

    samples = np.stack(values)
    mean = samples.mean(axis=0)
    se = samples.std(axis=0, ddof=1) / math.sqrt(n_paths)
    if mean.ndim == 0:
        mean, se = float(mean), float(se)
    logger.info(f"Monte Carlo: {n_paths} paths, seed {seed}, threads {threads}")
    return MCEstimate(mean=mean, se=se, n_paths=n_paths, seed=seed)
