"""Markov-chain market models with an insider who knows the terminal log prices."""

__version__ = "0.1.0"

from .feasibility import NumericalFailure, solve_strict, time_bounds
from .insider import classify_jump, insider_compensator_kh, insider_compensator_mixture, is_determined, posterior_scenario_weights
from .model import IntensityOverride, MarketModel, ModelValidationError, load_model, validate_model
from .nflvr import arbitrage_strategy, flvr_scan
from .noarb import na_solve, verify_martingale_measure
from .scenario import Scenario, enumerate_scenarios, scenario_prob
from .simulate import build_path, mc_expectation, simulate_path, simulate_paths

__all__ = [
    "IntensityOverride",
    "MarketModel",
    "ModelValidationError",
    "NumericalFailure",
    "Scenario",
    "arbitrage_strategy",
    "build_path",
    "classify_jump",
    "enumerate_scenarios",
    "flvr_scan",
    "insider_compensator_kh",
    "insider_compensator_mixture",
    "is_determined",
    "load_model",
    "mc_expectation",
    "na_solve",
    "posterior_scenario_weights",
    "scenario_prob",
    "simulate_path",
    "simulate_paths",
    "solve_strict",
    "time_bounds",
    "validate_model",
    "verify_martingale_measure",
]
