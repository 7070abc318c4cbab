"""
Pydantic schemas for run configuration and validation.
"""
from .common import Violation
from .meanfield import OdeConfig
from .simulation import ExchangeRule, InitialCondition, SimConfig
from .experiments import (
    ChainParams,
    CouplingParams,
    ExperimentConfig,
    InitialLaw,
    LaplaceParams,
    MeanfieldParams,
    MetricsParams,
    ReproduceParams,
)

__all__ = [
    # Validation
    "Violation",
    # Mean field
    "OdeConfig",
    # Agent simulation
    "ExchangeRule",
    "InitialCondition",
    "SimConfig",
    # Experiments
    "ChainParams",
    "CouplingParams",
    "ExperimentConfig",
    "InitialLaw",
    "LaplaceParams",
    "MeanfieldParams",
    "MetricsParams",
    "ReproduceParams",
]
