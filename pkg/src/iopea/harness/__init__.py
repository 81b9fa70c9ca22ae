from .config import ConfigError, ExperimentConfig, build_env, config_from_dict, load_config
from .experiment import regret_slope, run_experiment
from .oracle import grid_optimum, oracle_gain

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "build_env",
    "config_from_dict",
    "grid_optimum",
    "load_config",
    "oracle_gain",
    "regret_slope",
    "run_experiment",
]
