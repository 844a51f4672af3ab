"""Model reference-based control laboratory for uncertain strict-feedback systems."""
from .analysis import StabilityReport, analyze, analyze_config
from .hacblf import EnvelopeParams, EnvelopeViolation, HacBlfConfig, saturate
from .hae import HaeConfig
from .plant import EmlaParams, NumericFailure, PlantModel, UncertaintyProfile, chain_model, emla_model
from .scenario import ConfigError, ScenarioConfig, bundled_config, load_config, parse_config
from .simulation import InadmissibleStart, Trace, Verdict, run

__all__ = [
    "ConfigError",
    "EmlaParams",
    "EnvelopeParams",
    "EnvelopeViolation",
    "HacBlfConfig",
    "HaeConfig",
    "InadmissibleStart",
    "NumericFailure",
    "PlantModel",
    "ScenarioConfig",
    "StabilityReport",
    "Trace",
    "UncertaintyProfile",
    "Verdict",
    "analyze",
    "analyze_config",
    "bundled_config",
    "chain_model",
    "emla_model",
    "load_config",
    "parse_config",
    "run",
    "saturate",
]

__version__ = "0.1.0"
