"""Inverse-dynamics observer for a single-track vehicle with transport-PDE tires."""

from .config import ConfigError, ScenarioConfig, parse_config
from .freq import FrequencyResponse, check_small_gain, injection_gain_response
from .lambertw import certify_no_unstable_poles, lambert_w
from .model import (
    ParameterError,
    PlantState,
    SystemMatrices,
    VehicleParams,
    apply_K1,
    apply_K2,
    axle_forces,
    build_matrices,
    measurement,
    sideslip,
)
from .observer import ClosedLoopScenario, simulate_closed, simulate_error_dynamics
from .rational import RationalFilter, fit_rational
from .sensors import SensorSpec
from .transport import GridSpec, SimTrace, SteeringSpec, simulate_open_loop

__all__ = [
    "ClosedLoopScenario",
    "ConfigError",
    "FrequencyResponse",
    "GridSpec",
    "ParameterError",
    "PlantState",
    "RationalFilter",
    "ScenarioConfig",
    "SensorSpec",
    "SimTrace",
    "SteeringSpec",
    "SystemMatrices",
    "VehicleParams",
    "apply_K1",
    "apply_K2",
    "axle_forces",
    "build_matrices",
    "certify_no_unstable_poles",
    "check_small_gain",
    "fit_rational",
    "injection_gain_response",
    "lambert_w",
    "measurement",
    "parse_config",
    "sideslip",
    "simulate_closed",
    "simulate_error_dynamics",
    "simulate_open_loop",
]

__version__ = "0.1.0"
