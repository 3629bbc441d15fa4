import math

import numpy as np
import pytest

from mcmarket.fixtures import builtin_fixtures, kh_config, twostate_config
from mcmarket.model import validate_model

LN11 = math.log(1.1)
LN09 = math.log(0.9)


@pytest.fixture
def kh():
    return validate_model(kh_config())


@pytest.fixture
def twostate():
    return validate_model(twostate_config())


@pytest.fixture
def pinned():
    return validate_model(builtin_fixtures()["twostate_pinned"])


@pytest.fixture
def kh_symmetric():
    return validate_model(builtin_fixtures()["kh_symmetric"])


def random_config(rng: np.random.Generator, n_states: int, n_assets: int, horizon: float = 1.0) -> dict:
    """A random irreducible-ish market: positive rates on a random subset of moves, generic drifts and jumps."""
    lam = rng.uniform(0.5, 2.0, size=(n_states, n_states)) * (rng.random((n_states, n_states)) < 0.7)
    np.fill_diagonal(lam, 0.0)
    for e in range(n_states):
        if not lam[e].any():
            lam[e, (e + 1) % n_states] = 1.0
    return {
        "name": "random",
        "states": [str(e) for e in range(n_states)],
        "lambda": lam.tolist(),
        "r": rng.uniform(0.0, 0.05, size=n_states).tolist(),
        "horizon": horizon,
        "assets": [
            {
                "name": f"S{i + 1}",
                "s0": float(rng.uniform(0.5, 2.0)),
                "mu": rng.normal(0.0, 0.5, size=n_states).tolist(),
                "beta": (rng.normal(0.0, 0.2, size=(n_states, n_states)) * (lam > 0)).tolist(),
            }
            for i in range(n_assets)
        ],
    }


@pytest.fixture
def random_model():
    def make(seed: int, n_states: int | None = None, n_assets: int | None = None):
        rng = np.random.default_rng(seed)
        n = n_states or int(rng.integers(2, 5))
        m = n_assets or int(rng.integers(1, 4))
        return validate_model(random_config(rng, n, m))

    return make
