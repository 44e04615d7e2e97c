"""Physics-informed training of the PINC and DD-PINN surrogates.

Every epoch shuffles the collocation points (resampled every n_s epochs)
into batches; the leading share of the batches updates the weights with
Adam, the trailing share is only evaluated. After the first epoch the loss
weights are calibrated from its mean training losses, and from then on the
learning rate follows a plateau schedule on the validation loss.
"""

import dataclasses
import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from softpinn.config.config import TrainConfig
from softpinn.dynamics.model import BatchedDynamics
from softpinn.errors import NonFiniteLossError
from softpinn.identification.dataset import Dataset
from softpinn.networks.mlp import MLPWeights
from softpinn.networks.surrogate import SurrogateModel, init_surrogate
from softpinn.training.collocation import (
    CollocationSet,
    TransitionSet,
    data_transitions,
    sample_collocation,
)
from softpinn.training.losses import (
    LossValue,
    calibrate_weights,
    data_loss,
    ic_loss,
    physics_loss,
)
from softpinn.training.optim import Adam, PlateauSchedule
from softpinn.util.csv_io import CsvTable, read_table, write_table

HISTORY_COLUMNS = [
    "epoch",
    "L_d",
    "L_p",
    "L_0",
    "L_t",
    "L_v",
    "L_vp",
    "lr",
    "excluded",
    "eta_d",
    "eta_p",
    "eta_0",
]


@dataclass
class EpochRecord:
    epoch: int
    L_d: float
    """Mean data loss over the training batches"""
    L_p: float
    """Mean physics loss over the training batches"""
    L_0: float
    """Mean initial-condition loss over the training batches"""
    L_t: float
    """Mean weighted total over the training batches"""
    L_v: float
    """Mean weighted total over the validation batches"""
    L_vp: float
    """Mean physics loss over the validation batches"""
    lr: float
    """Learning rate the epoch trained with"""
    excluded: int
    """Collocation rows the dynamics could not be evaluated at"""
    eta: np.ndarray
    """Loss weights [eta_d, eta_p, eta_0] the epoch trained with"""

    def row(self) -> List[float]:
        return [
            float(self.epoch),
            self.L_d,
            self.L_p,
            self.L_0,
            self.L_t,
            self.L_v,
            self.L_vp,
            self.lr,
            float(self.excluded),
        ] + [float(v) for v in self.eta]


@dataclass
class TrainResult:
    model: SurrogateModel
    """The surrogate with the weights of the best validation epoch"""
    history: List[EpochRecord]
    best_epoch: int
    best_validation: float


class PinnTrainer:
    """Single-writer training loop; `run` can be called repeatedly with a
    growing epoch budget to continue where the previous call stopped
    """

    def __init__(
        self,
        config: TrainConfig,
        fp: BatchedDynamics,
        /,
        *,
        datasets: Optional[Sequence[Dataset]] = None,
    ) -> None:
        self.config = config
        self.fp = fp
        self.n_batches = config.n_p // config.n_b
        if self.n_batches < 2:
            raise ValueError(
                f"{config.n_p} points in batches of {config.n_b} leave no validation batch"
            )
        self.n_validation = min(
            self.n_batches - 1, max(1, round(config.validation_fraction * self.n_batches))
        )
        self.rng = np.random.default_rng(config.seed)
        self.model = init_surrogate(
            fp.n,
            head="ddpinn" if config.n_a > 0 else "pinc",
            n_a=config.n_a,
            n_n=config.n_n,
            n_h=config.n_h,
            T_s=config.T_s,
            boundaries=config.boundaries,
            rng=self.rng,
        )
        self.data: Optional[TransitionSet] = (
            data_transitions(list(datasets), config.T_s, self.model.scaler)
            if datasets
            else None
        )
        self.optimizer = Adam(self.model.core.parameters(), lr=config.lr_0)
        self.schedule = PlateauSchedule(
            lr=config.lr_0, lr_min=config.lr_min, patience=config.n_lambda
        )
        self.eta = np.ones(3)
        self.epoch = 0
        self.points: Optional[CollocationSet] = None
        self.history: List[EpochRecord] = []
        self.best_core: Optional[MLPWeights] = None
        self.best_validation = math.inf
        self.best_epoch = -1

    def _losses(
        self,
        points: CollocationSet,
        ic: Optional[CollocationSet],
        data: Optional[TransitionSet],
        /,
        *,
        grad: bool,
    ) -> List[LossValue]:
        """[data, physics, initial condition]; losses with zero weight are
        still reported but never differentiated
        """
        return [
            data_loss(self.model, data, grad=grad and self.eta[0] > 0),
            physics_loss(self.model, self.fp, points, grad=grad and self.eta[1] > 0),
            ic_loss(self.model, ic, grad=grad and self.eta[2] > 0),
        ]

    def run_epoch(self) -> EpochRecord:
        config = self.config
        epoch = self.epoch
        if epoch % config.n_s == 0 or self.points is None:
            self.points = sample_collocation(config, self.fp.n, self.model.scaler, self.rng)
            logging.info(f"epoch {epoch}: sampled {len(self.points)} collocation points")
        points = self.points

        batches = np.array_split(self.rng.permutation(len(points)), self.n_batches)
        ic_batches = (
            np.array_split(self.rng.permutation(len(points.ic)), self.n_batches)
            if points.ic is not None
            else None
        )
        data_batches = (
            np.array_split(self.rng.permutation(len(self.data)), self.n_batches)
            if self.data is not None
            else None
        )
        n_train = self.n_batches - self.n_validation

        train_sums = np.zeros(4)
        val_sums = np.zeros(2)
        excluded = 0
        lr = self.optimizer.lr
        eta = self.eta.copy()
        for j in range(self.n_batches):
            training = j < n_train
            batch = points.take(batches[j])
            ic = points.ic.take(ic_batches[j]) if points.ic is not None and ic_batches is not None else None
            data = self.data.take(data_batches[j]) if self.data is not None and data_batches is not None else None
            values = self._losses(batch, ic, data, grad=training)
            losses = np.array([v.loss for v in values])
            total = float(eta @ losses)
            if not math.isfinite(total):
                raise NonFiniteLossError(
                    f"epoch {epoch} batch {j} has loss {total}", epoch=epoch, batch=j
                )
            excluded += values[1].excluded
            if training:
                grads = [np.zeros_like(p) for p in self.model.core.parameters()]
                for weight, value in zip(eta, values):
                    if weight > 0 and value.grads is not None:
                        for acc, g in zip(grads, value.grads):
                            acc += weight * g
                self.optimizer.step(grads)
                self.model.core.touch()
                train_sums += np.append(losses, total)
            else:
                val_sums += np.array([total, losses[1]])

        train_means = train_sums / n_train
        val_means = val_sums / self.n_validation
        record = EpochRecord(
            epoch=epoch,
            L_d=float(train_means[0]),
            L_p=float(train_means[1]),
            L_0=float(train_means[2]),
            L_t=float(train_means[3]),
            L_v=float(val_means[0]),
            L_vp=float(val_means[1]),
            lr=lr,
            excluded=excluded,
            eta=eta,
        )
        self.history.append(record)
        logging.debug(
            f"epoch {epoch}: L_t={record.L_t:.4e} L_v={record.L_v:.4e} L_vp={record.L_vp:.4e} lr={lr:.3g}"
        )

        if epoch == 0:
            self.eta = calibrate_weights(train_means[:3], head=self.model.head)
            self.best_core = self.model.core.copy()
            self.best_epoch = 0
            logging.info(f"calibrated loss weights to {self.eta.tolist()}")
        else:
            self.optimizer.lr = self.schedule.update(epoch, record.L_v)
            if record.L_v < self.best_validation:
                self.best_validation = record.L_v
                self.best_core = self.model.core.copy()
                self.best_epoch = epoch
        self.epoch += 1
        return record

    def run(self, until_epoch: int) -> TrainResult:
        """Trains until `until_epoch` epochs have completed in total"""
        while self.epoch < until_epoch:
            self.run_epoch()
        return self.result()

    def result(self) -> TrainResult:
        if self.best_core is None:
            raise ValueError("no epoch has been trained yet")
        best_validation = self.best_validation
        if self.best_epoch == 0:
            best_validation = self.history[0].L_v
        return TrainResult(
            model=dataclasses.replace(self.model, core=self.best_core.copy()),
            history=list(self.history),
            best_epoch=self.best_epoch,
            best_validation=best_validation,
        )


def train_pinn(
    config: TrainConfig,
    fp: BatchedDynamics,
    /,
    *,
    datasets: Optional[Sequence[Dataset]] = None,
) -> TrainResult:
    return PinnTrainer(config, fp, datasets=datasets).run(config.n_e)


def save_history(path: str, history: Sequence[EpochRecord]) -> None:
    write_table(
        path,
        CsvTable(
            kind="loss_history",
            columns=HISTORY_COLUMNS,
            data=np.array([r.row() for r in history], dtype=np.float64).reshape(
                len(history), len(HISTORY_COLUMNS)
            ),
        ),
    )


def load_history(path: str) -> List[EpochRecord]:
    table = read_table(path, kind="loss_history")
    if table.columns != HISTORY_COLUMNS:
        raise ValueError(f"{path} has unexpected columns {table.columns}")
    return [
        EpochRecord(
            epoch=int(row[0]),
            L_d=float(row[1]),
            L_p=float(row[2]),
            L_0=float(row[3]),
            L_t=float(row[4]),
            L_v=float(row[5]),
            L_vp=float(row[6]),
            lr=float(row[7]),
            excluded=int(row[8]),
            eta=row[9:12].copy(),
        )
        for row in table.data
    ]
