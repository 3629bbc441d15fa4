"""
Built-in example markets.

kh: the Kohatsu-Higa embedding of two independent Poisson jump streams into a 3-state chain
twostate: a boom/bust chain whose drift changes sign with the state
kh_symmetric: kh with β⁻ = −β⁺, where ℓ pins only the difference of the counts
twostate_pinned: large jumps and a narrow drift spread, so ℓ identifies the scenario
"""
from __future__ import annotations

import json
import logging
import math
from pathlib import Path
from typing import Any

logger = logging.getLogger(__name__)


def kh_config(
    lambda_plus: float = 1.0,
    lambda_minus: float = 1.0,
    beta_plus: float = math.log(1.1),
    beta_minus: float = math.log(0.9),
    mu: float = 0.01,
    horizon: float = 1.0,
    name: str = "kh",
) -> dict[str, Any]:
    """Up-moves 1→2→3→1 at rate λ⁺ with log jump β⁺, down-moves the other way round."""
    lam = [[0.0] * 3 for _ in range(3)]
    beta = [[0.0] * 3 for _ in range(3)]
    for e in range(3):
        up, down = (e + 1) % 3, (e - 1) % 3
        lam[e][up], beta[e][up] = lambda_plus, beta_plus
        lam[e][down], beta[e][down] = lambda_minus, beta_minus
    return {
        "name": name,
        "states": ["1", "2", "3"],
        "lambda": lam,
        "r": [0.0, 0.0, 0.0],
        "horizon": horizon,
        "assets": [{"name": "S", "s0": 1.0, "mu": [mu] * 3, "beta": beta}],
    }


def twostate_config(
    mu_down: float = -0.5,
    mu_up: float = 0.5,
    beta_up: float = math.log(1.1),
    beta_down: float = math.log(0.9),
    lambda_up: float = 1.0,
    lambda_down: float = 1.0,
    horizon: float = 1.0,
    name: str = "twostate",
) -> dict[str, Any]:
    """State 1 drifts at mu_down and jumps up into state 2; state 2 drifts at mu_up and jumps down."""
    return {
        "name": name,
        "states": ["1", "2"],
        "lambda": [[0.0, lambda_up], [lambda_down, 0.0]],
        "r": [0.0, 0.0],
        "horizon": horizon,
        "assets": [{"name": "S", "s0": 1.0, "mu": [mu_down, mu_up], "beta": [[0.0, beta_up], [beta_down, 0.0]]}],
    }


def builtin_fixtures() -> dict[str, dict[str, Any]]:
    return {
        "kh": kh_config(),
        "twostate": twostate_config(),
        "kh_symmetric": kh_config(beta_minus=-math.log(1.1), name="kh_symmetric"),
        "twostate_pinned": twostate_config(mu_down=-0.25, mu_up=0.25, beta_up=3.0, beta_down=-1.0, name="twostate_pinned"),
    }


def write_fixtures(out_dir: str | Path, names: list[str] | None = None) -> list[Path]:
    """Write the fixtures as <name>.json into out_dir."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    fixtures = builtin_fixtures()
    unknown = set(names or []) - set(fixtures)
    if unknown:
        raise ValueError(f"unknown fixtures {sorted(unknown)}; available: {sorted(fixtures)}")
    written = []
    for name in names or list(fixtures):
        path = out_dir / f"{name}.json"
        path.write_text(json.dumps(fixtures[name], indent=2) + "\n")
        written.append(path)
        logger.info(f"wrote {path}")
    return written
