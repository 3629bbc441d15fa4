"""
Markov-chain market model: states, intensities, short rates and risky assets.

A model is validated once from its JSON-compatible description and is immutable
afterwards. All array fields are read-only numpy arrays indexed by dense state
indices; labels are only used at the edges (config in, reports out).
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

logger = logging.getLogger(__name__)

UNIFORMIZATION_TOL = 1e-12


class ModelValidationError(ValueError):
    """Raised when a model description cannot be turned into a MarketModel."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Asset:
    name: str
    s0: float
    mu: np.ndarray    # (n,) drift per state
    beta: np.ndarray  # (n, n) log jump size per transition

    @property
    def log_s0(self) -> float:
        return math.log(self.s0)


@dataclass(frozen=True)
class IntensityOverride:
    """An alternative intensity matrix, e.g. the martingale intensities under Q."""

    tilde_lambda: np.ndarray

    @classmethod
    def from_matrix(cls, matrix: Sequence[Sequence[float]] | np.ndarray) -> "IntensityOverride":
        m = np.array(matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"override must be a square matrix, got shape {m.shape}")
        if np.any(m[~np.eye(m.shape[0], dtype=bool)] < 0):
            raise ValueError("override has a negative off-diagonal intensity")
        np.fill_diagonal(m, 0.0)
        return cls(_frozen(m))


@dataclass(frozen=True)
class MarketModel:
    states: tuple[str, ...]
    lam: np.ndarray                  # (n, n), zero diagonal
    r: np.ndarray                    # (n,)
    assets: tuple[Asset, ...]
    horizon: float
    name: str = "model"
    warnings: tuple[str, ...] = field(default=(), compare=False)

    # -- sizes and lookups -------------------------------------------------

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_assets(self) -> int:
        return len(self.assets)

    def index(self, label: str | int) -> int:
        label = str(label)
        try:
            return self.states.index(label)
        except ValueError:
            raise ValueError(f"unknown state label {label!r}; states are {list(self.states)}") from None

    def label(self, index: int) -> str:
        return self.states[index]

    # -- derived quantities ------------------------------------------------

    @property
    def total_rates(self) -> np.ndarray:
        """λ^e = Σ_{k≠e} λ^{ek}."""
        return self.lam.sum(axis=1)

    @property
    def mu(self) -> np.ndarray:
        """Drifts as an (m, n) array."""
        return np.array([a.mu for a in self.assets]).reshape(self.n_assets, self.n_states)

    @property
    def drift(self) -> np.ndarray:
        """Log discounted price drifts a^{ie} = μ^{ie} − r^e, shape (m, n)."""
        return self.mu - self.r[np.newaxis, :]

    @property
    def beta(self) -> np.ndarray:
        """Jump sizes as an (m, n, n) array indexed [i, e, k]."""
        return np.array([a.beta for a in self.assets]).reshape(self.n_assets, self.n_states, self.n_states)

    @property
    def gamma(self) -> np.ndarray:
        """γ^{iek} = exp(β^{iek}) − 1, shape (m, n, n)."""
        return np.expm1(self.beta)

    @property
    def log_s0(self) -> np.ndarray:
        """L_0, the initial log discounted prices (S^0_0 = 1)."""
        return np.array([a.log_s0 for a in self.assets])

    def reachable(self, e: int) -> list[int]:
        """𝒴^e = {k : λ^{ek} > 0}."""
        return [int(k) for k in np.flatnonzero(self.lam[e] > 0)]

    def is_absorbing(self, e: int) -> bool:
        return not self.reachable(e)

    def with_horizon(self, horizon: float) -> "MarketModel":
        if not horizon > 0:
            raise ModelValidationError(f"horizon must be positive, got {horizon}")
        return replace(self, horizon=float(horizon))

    def with_intensities(self, override: IntensityOverride) -> "MarketModel":
        """The same market with λ replaced by the override (sampling under Q)."""
        if not check_equivalent(self, override):
            raise ValueError("override is not equivalent to the model intensities")
        return replace(self, lam=override.tilde_lambda)

    # -- serialization -----------------------------------------------------

    def to_config(self) -> dict[str, Any]:
        """Normalized JSON-compatible description; validate_model(to_config()) round-trips."""
        return {
            "name": self.name,
            "states": list(self.states),
            "lambda": self.lam.tolist(),
            "r": self.r.tolist(),
            "horizon": self.horizon,
            "assets": [
                {"name": a.name, "s0": a.s0, "mu": a.mu.tolist(), "beta": a.beta.tolist()}
                for a in self.assets
            ],
        }


def _matrix(raw: Any, n: int, what: str) -> np.ndarray:
    try:
        m = np.array(raw, dtype=float)
    except (TypeError, ValueError) as e:
        raise ModelValidationError(f"{what} is not numeric: {e}") from e
    if m.shape != (n, n):
        raise ModelValidationError(f"{what} must be {n}x{n}, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ModelValidationError(f"{what} has non-finite entries")
    return m


def _vector(raw: Any, n: int, what: str) -> np.ndarray:
    try:
        v = np.array(raw, dtype=float)
    except (TypeError, ValueError) as e:
        raise ModelValidationError(f"{what} is not numeric: {e}") from e
    if v.ndim == 0:
        v = np.full(n, float(v))
    if v.shape != (n,):
        raise ModelValidationError(f"{what} must have length {n}, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ModelValidationError(f"{what} has non-finite entries")
    return v


def validate_model(raw: Mapping[str, Any]) -> MarketModel:
    """
    Build a MarketModel from a parsed config document.

    The diagonal of `lambda` is ignored so generator-style input is accepted. A β given
    for a transition with λ^{ek} = 0 is kept but reported in `model.warnings`.
    """
    try:
        states = tuple(str(s) for s in raw["states"])
        lam_raw = raw["lambda"]
        horizon = float(raw["horizon"])
        assets_raw = raw["assets"]
    except KeyError as e:
        raise ModelValidationError(f"model config is missing key {e.args[0]!r}") from e
    except (TypeError, ValueError) as e:
        raise ModelValidationError(f"malformed model config: {e}") from e

    n = len(states)
    if n < 1:
        raise ModelValidationError("a model needs at least one state")
    if len(set(states)) != n:
        raise ModelValidationError(f"duplicate state labels in {list(states)}")
    if not (math.isfinite(horizon) and horizon > 0):
        raise ModelValidationError(f"horizon must be positive, got {horizon}")

    lam = _matrix(lam_raw, n, "lambda")
    np.fill_diagonal(lam, 0.0)
    if np.any(lam < 0):
        e, k = np.argwhere(lam < 0)[0]
        raise ModelValidationError(
            f"negative intensity lambda[{states[e]}][{states[k]}] = {lam[e, k]}"
        )
    r = _vector(raw.get("r", 0.0), n, "r")
    if not isinstance(assets_raw, list):
        raise ModelValidationError(f"assets must be a list, got {type(assets_raw).__name__}")

    warnings: list[str] = []
    assets: list[Asset] = []
    for i, a in enumerate(assets_raw):
        if not isinstance(a, Mapping):
            raise ModelValidationError(f"asset {i} must be an object, got {type(a).__name__}")
        name = str(a.get("name", f"S{i + 1}"))
        try:
            s0 = float(a["s0"])
        except KeyError as e:
            raise ModelValidationError(f"asset {name!r} is missing key 's0'") from e
        except (TypeError, ValueError) as e:
            raise ModelValidationError(f"asset {name!r}: s0 must be a number ({e})") from e
        if not (math.isfinite(s0) and s0 > 0):
            raise ModelValidationError(f"asset {name!r}: s0 must be positive, got {s0}")
        mu = _vector(a.get("mu", 0.0), n, f"asset {name!r} mu")
        beta = _matrix(a.get("beta", np.zeros((n, n))), n, f"asset {name!r} beta")
        np.fill_diagonal(beta, 0.0)
        unused = np.argwhere((beta != 0) & (lam == 0))
        for e, k in unused:
            msg = f"asset {name!r}: beta[{states[e]}][{states[k]}] set for a transition with zero intensity (unused)"
            warnings.append(msg)
            logger.warning(msg)
        assets.append(Asset(name=name, s0=s0, mu=_frozen(mu), beta=_frozen(beta)))

    model = MarketModel(
        states=states,
        lam=_frozen(lam),
        r=_frozen(r),
        assets=tuple(assets),
        horizon=horizon,
        name=str(raw.get("name", "model")),
        warnings=tuple(warnings),
    )
    logger.debug(f"validated model {model.name!r}: {n} states, {len(assets)} assets, T={horizon}")
    return model


def load_model(path: str | Path) -> MarketModel:
    """Read and validate a JSON model file."""
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise ModelValidationError(f"{path}: not valid JSON ({e})") from e
    return validate_model(raw)


def check_equivalent(model: MarketModel, override: IntensityOverride) -> bool:
    """λ and λ̃ are equivalent when they have the same off-diagonal support."""
    tilde = override.tilde_lambda
    if tilde.shape != model.lam.shape:
        raise ValueError(f"dimension mismatch: model is {model.lam.shape}, override is {tilde.shape}")
    off = ~np.eye(model.n_states, dtype=bool)
    return bool(np.array_equal(model.lam[off] > 0, tilde[off] > 0))


def generator(model: MarketModel) -> np.ndarray:
    q = np.array(model.lam, dtype=float)
    np.fill_diagonal(q, -model.total_rates)
    return q


def transition_matrix(model: MarketModel, t: float) -> np.ndarray:
    """
    P_t = exp(tQ) by uniformization, with squaring for long horizons.

    The series Σ_k Poisson(k; qs) K^k is summed until the Poisson tail drops below
    UNIFORMIZATION_TOL, where K = I + Q/q and qs ≤ 1; the result is squared back up to t.
    Every term is non-negative, so P_t is non-negative exactly.
    """
    if t < 0:
        raise ValueError(f"t must be non-negative, got {t}")
    n = model.n_states
    q = float(model.total_rates.max()) if n else 0.0
    if t == 0 or q == 0:
        return np.eye(n)

    squarings = max(0, math.ceil(math.log2(q * t))) if q * t > 1 else 0
    s = t / 2**squarings
    k_mat = np.eye(n) + generator(model) / q

    weight = math.exp(-q * s)
    term = np.eye(n)
    p = weight * term
    covered = weight
    k = 0
    while 1.0 - covered > UNIFORMIZATION_TOL and k < 1000:
        k += 1
        weight *= q * s / k
        term = term @ k_mat
        p += weight * term
        covered += weight

    for _ in range(squarings):
        p = p @ p
    # tail mass goes back on the rows so they sum to one
    p /= p.sum(axis=1, keepdims=True)
    return p
