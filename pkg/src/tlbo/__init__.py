"""Transfer-learning Bayesian optimisation with weighted GP ensembles."""

from tlbo.dataset import ObservationDataset, read_dataset, write_dataset
from tlbo.pipeline import MethodSpec, RunRecord, generate_historic, leave_one_task_out, run_bo
from tlbo.space import Configuration, SearchSpace, VariableSpec
from tlbo.weighting import WeightingConfig

__version__ = "0.1.0"

__all__ = [
    "Configuration",
    "MethodSpec",
    "ObservationDataset",
    "RunRecord",
    "SearchSpace",
    "VariableSpec",
    "WeightingConfig",
    "generate_historic",
    "leave_one_task_out",
    "read_dataset",
    "run_bo",
    "write_dataset",
]
