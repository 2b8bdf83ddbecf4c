from .config import ConfigError, ExperimentConfig, MleBlock, load_config, parse_config
from .runner import RunSummary, derive_seed, run_experiment, summarize, summarize_directory

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "MleBlock",
    "load_config",
    "parse_config",
    "RunSummary",
    "derive_seed",
    "run_experiment",
    "summarize",
    "summarize_directory",
]
