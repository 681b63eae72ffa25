"""Multisine waveform and receive-combiner design for multi-tag backscatter."""

from .algorithms import (
    FeasibilityResult,
    WaveformSolution,
    algorithm1_feasibility,
    algorithm2_optimize,
    algorithm3_simplified,
)
from .channel import ChannelRealization, LinkBudget, PowerDelayProfile, draw_realization, stream
from .config import ConfigError, EHModel, RectennaParams, SystemConfig, db_to_linear, derive_taylor_coeffs, linear_to_db
from .conic import NumericalTrouble
from .harvest import time_domain_oracle, z_dc_matrix, z_dc_scalar
from .link import eigen_combiner, mmse_combiner, sinr

__version__ = "0.1.0"

__all__ = [
    "ChannelRealization",
    "ConfigError",
    "EHModel",
    "FeasibilityResult",
    "LinkBudget",
    "NumericalTrouble",
    "PowerDelayProfile",
    "RectennaParams",
    "SystemConfig",
    "WaveformSolution",
    "algorithm1_feasibility",
    "algorithm2_optimize",
    "algorithm3_simplified",
    "db_to_linear",
    "derive_taylor_coeffs",
    "draw_realization",
    "eigen_combiner",
    "linear_to_db",
    "mmse_combiner",
    "sinr",
    "stream",
    "time_domain_oracle",
    "z_dc_matrix",
    "z_dc_scalar",
]
