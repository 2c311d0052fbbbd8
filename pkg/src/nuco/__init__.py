"""Transition matrices, Gramians and nonuniform observability/controllability certificates
for linear time-varying systems."""

__version__ = "0.1.0"

from .errors import (DegenerateGrid, DimensionMismatch, EvalError, ExprSyntaxError, HypothesisUnmet,
                     InfeasibleFit, IntegrationFailure, NonFiniteDerivative, NotControllableOnGrid,
                     NotObservableOnGrid, NucoError, UnknownIdentifier, VerificationFailure)
from .flow import IntegratorConfig, Transition, transition, transition_dual
from .gramian import GramianResult, ctrl_gramian, obs_gramian, simpson_gramian, transported_gramian
from .tvmat import System, TimeGrid, TvMatrix, load_system, parse_expr, system_from_config, to_text

__all__ = [
    "DegenerateGrid", "DimensionMismatch", "EvalError", "ExprSyntaxError", "HypothesisUnmet",
    "InfeasibleFit", "IntegrationFailure", "NonFiniteDerivative", "NotControllableOnGrid",
    "NotObservableOnGrid", "NucoError", "UnknownIdentifier", "VerificationFailure",
    "IntegratorConfig", "Transition", "transition", "transition_dual",
    "GramianResult", "ctrl_gramian", "obs_gramian", "simpson_gramian", "transported_gramian",
    "System", "TimeGrid", "TvMatrix", "load_system", "parse_expr", "system_from_config", "to_text",
]
