"""Reference training worker for the evoarch wire protocol."""

from .arch import build_network, learnable_parameter_count
from .data import load, parse_dataset_tag, synthetic
from .training import TrainingPlan, TrainOutcome, train_and_score
from .worker import WorkerSettings, handle_request, serve

__version__ = "0.1.0"
