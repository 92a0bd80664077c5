"""Config-driven command-line experiment runner."""

from denoiq.expcli.config import (
    CONFIG_SCHEMA,
    ExperimentPlan,
    config_key_reference,
    linear_profile,
    nonlinear_profile,
    resolve_config,
)
from denoiq.expcli.studies import (
    run_linear_propagation,
    run_nonlinear_depth_sweep,
    run_observer_depth_sweep,
    run_signal_size_sweep,
)

__all__ = [
    "CONFIG_SCHEMA",
    "ExperimentPlan",
    "config_key_reference",
    "linear_profile",
    "nonlinear_profile",
    "resolve_config",
    "run_linear_propagation",
    "run_nonlinear_depth_sweep",
    "run_observer_depth_sweep",
    "run_signal_size_sweep",
]
