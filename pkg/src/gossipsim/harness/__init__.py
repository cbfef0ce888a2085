"""Configuration, ensemble execution and the command line."""
from .config import ExperimentConfig, cd_preset, load_config
from .experiments import run_coverage, run_distance, run_intersections, run_path_lln

__all__ = ["ExperimentConfig", "cd_preset", "load_config", "run_path_lln", "run_distance",
           "run_coverage", "run_intersections"]
