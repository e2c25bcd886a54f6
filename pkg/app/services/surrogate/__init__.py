"""Gaussian-process surrogate and its training data."""

from app.services.surrogate.dataset import TrainingDataset, generate_training_data
from app.services.surrogate.gp import GPFitError, GPModel, Kernel
from app.services.surrogate.surrogate import (
    ElasticSurrogate,
    HighFidelityAdapter,
    Surrogate,
    SurrogateSet,
    surrogate_response,
    train_surrogate,
)

__all__ = [
    "ElasticSurrogate",
    "GPFitError",
    "GPModel",
    "HighFidelityAdapter",
    "Kernel",
    "Surrogate",
    "SurrogateSet",
    "TrainingDataset",
    "generate_training_data",
    "surrogate_response",
    "train_surrogate",
]
