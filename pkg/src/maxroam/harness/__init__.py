from maxroam.harness.config import ExperimentConfig, load_config
from maxroam.harness.experiment import (
    ExperimentResult,
    MetricsRecord,
    SweepResult,
    run_experiment,
    run_seed,
    sweep,
)
