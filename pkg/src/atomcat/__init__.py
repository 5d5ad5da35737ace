"""Nonclassical correlations of a free atomic wave packet split by a cavity vacuum."""

from atomcat.model import (
    Branch,
    ConfigError,
    SystemConfig,
    ValidityError,
    branch_amplitude,
    initial_amplitude,
    separation_D,
    transit_time_T,
)

__version__ = "0.1.0"

__all__ = [
    "Branch",
    "ConfigError",
    "SystemConfig",
    "ValidityError",
    "branch_amplitude",
    "initial_amplitude",
    "separation_D",
    "transit_time_T",
]
