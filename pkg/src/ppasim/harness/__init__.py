"""Configuration, scenario runs, experiments and artifact emission."""
from .config import ScenarioConfig, config_from_mapping, load_config
from .experiments import (EXPERIMENTS, experiment_evaluation, experiment_key_metric,
                          experiment_model_opt, experiment_update_policy)
from .scenario import ScenarioResult, collect, run_scenario

__all__ = [
    "EXPERIMENTS", "ScenarioConfig", "ScenarioResult", "collect", "config_from_mapping",
    "experiment_evaluation", "experiment_key_metric", "experiment_model_opt",
    "experiment_update_policy", "load_config", "run_scenario",
]
