"""Training, evaluation and ablation drivers."""

from .ablate import ablate, aggregate_trials, best_configuration, write_ablation_csv  # noqa: F401
from .checkpoint import load_checkpoint, save_checkpoint  # noqa: F401
from .evaluate import evaluate  # noqa: F401
from .iterations import IterationRow, iteration_table, iterations_for  # noqa: F401
from .optim import AdamW  # noqa: F401
from .train import TrainResult, evaluate_records, train  # noqa: F401
