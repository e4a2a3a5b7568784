"""Active inference and model reference adaptive joint-space control, with a
planar-arm simulator and a scenario harness for comparing the two."""

from .aic import ActiveInferenceController, AicConfig
from .errors import AicsimError, ConfigError, ContractError, DivergenceError, SimulationError
from .free_energy import GeneralizedBelief, Precisions, SensoryReading, free_energy, grad_belief, grad_sensory
from .harness import Scenario, TrajectoryLog, compute_metrics, run
from .mrac import ModelReferenceAdaptiveController, MracConfig
from .plant import DecoupledArmModel, Link, PlanarArmModel, PlantState, SensorNoise

__version__ = "0.1.0"

__all__ = [
    "ActiveInferenceController",
    "AicConfig",
    "AicsimError",
    "ConfigError",
    "ContractError",
    "DecoupledArmModel",
    "DivergenceError",
    "GeneralizedBelief",
    "Link",
    "ModelReferenceAdaptiveController",
    "MracConfig",
    "PlanarArmModel",
    "PlantState",
    "Precisions",
    "Scenario",
    "SensorNoise",
    "SensoryReading",
    "SimulationError",
    "TrajectoryLog",
    "compute_metrics",
    "free_energy",
    "grad_belief",
    "grad_sensory",
    "run",
]
