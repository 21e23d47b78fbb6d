"""Road-field Fisher-KPP models with nonlocal or local exchange.

Spreading speeds from dispersion relations, stationary profiles, time
integration and the eps -> 0 convergence experiments.
"""
from __future__ import annotations

__version__ = "0.1.0"

from .dispersion import DispersionResult, Mode, PhiProfile, Truncation, envelope_speed, find_speed
from .errors import DomainError, InvalidParameter, NumericalFailure
from .model import ExchangeKernel, ExchangeKernels, ModelParams, Reaction
from .simulate import FieldState, InitialDatum, ModelSpec, SimGrid, run, step, sup_difference
from .stationary import StationaryNumerics, StationaryState, solve_stationary

__all__ = [
    "DispersionResult", "DomainError", "ExchangeKernel", "ExchangeKernels", "FieldState",
    "InitialDatum", "InvalidParameter", "Mode", "ModelParams", "ModelSpec", "NumericalFailure",
    "PhiProfile", "Reaction", "SimGrid", "StationaryNumerics", "StationaryState", "Truncation",
    "envelope_speed", "find_speed", "run", "solve_stationary", "step", "sup_difference",
]
