"""Models, training, evaluation and the facade the CLI reads data through."""

from app.services.classifier import ReviewClassifier, TrainableModel
from app.services.milnet import HierarchicalModel, ReviewPrediction
from app.services.model_store import build_model, load_model, save_model
from app.services.protocols import evaluate
from app.services.training import train_model

__all__ = [
    "ReviewClassifier",
    "TrainableModel",
    "HierarchicalModel",
    "ReviewPrediction",
    "build_model",
    "load_model",
    "save_model",
    "evaluate",
    "train_model",
]
