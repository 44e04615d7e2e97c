from softpinn.training.asha import (
    AshaReport,
    AshaScheduler,
    SearchSpace,
    asha_optimize,
    load_search_space,
)
from softpinn.training.collocation import CollocationSet, sample_collocation
from softpinn.training.gru_trainer import GRUTrainResult, train_gru
from softpinn.training.losses import (
    calibrate_weights,
    data_loss,
    ic_loss,
    physics_loss,
)
from softpinn.training.pinn import PinnTrainer, TrainResult, save_history, train_pinn

__all__ = [
    "AshaReport",
    "AshaScheduler",
    "CollocationSet",
    "GRUTrainResult",
    "PinnTrainer",
    "SearchSpace",
    "TrainResult",
    "asha_optimize",
    "calibrate_weights",
    "data_loss",
    "ic_loss",
    "load_search_space",
    "physics_loss",
    "sample_collocation",
    "save_history",
    "train_gru",
    "train_pinn",
]
