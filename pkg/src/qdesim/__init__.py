"""Qualitative simulation of QDE models with graph analyses and a numeric oracle."""

__version__ = "0.1.0"

from .analysis import GeneralizedStg, check_unavoidable, cluster_gstg, find_equilibria  # noqa: E402
from .constraints import check_state, propagate  # noqa: E402
from .dsl import QdeModel, load_model, parse_model, serialize_model, validate_model  # noqa: E402
from .sim import SimConfig, StateTransitionGraph, build_stg, generate_successors  # noqa: E402

__all__ = [
    "GeneralizedStg",
    "QdeModel",
    "SimConfig",
    "StateTransitionGraph",
    "build_stg",
    "check_state",
    "check_unavoidable",
    "cluster_gstg",
    "find_equilibria",
    "generate_successors",
    "load_model",
    "parse_model",
    "propagate",
    "serialize_model",
    "validate_model",
]
