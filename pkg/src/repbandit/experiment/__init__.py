from .config import ConfigError, ExperimentConfig, PolicySpec, load_config, parse_seeds
from .presets import PRESETS, get_preset
from .runner import (
    CHECK_FUNCTIONS,
    ExperimentError,
    GroundTruth,
    RunSummary,
    build_problem,
    distance_trace,
    run_cell,
    run_experiment,
    summarize,
)
