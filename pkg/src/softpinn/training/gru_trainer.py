"""Truncated backpropagation through time for the recurrent baseline.

Each sequence starts from a zero hidden state and its first measured state.
The network runs free, feeding its own predictions back, and is updated
after every window of n_b steps; hidden state and prediction carry over
into the next window as plain values, so no gradient crosses a window
boundary. The trailing share of every sequence is held out and scored by a
free run from its first measured state.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from softpinn.config.config import Boundaries, GRUTrainConfig
from softpinn.errors import DatasetTooShortError, NonFiniteLossError
from softpinn.identification.dataset import Dataset
from softpinn.networks.gru import (
    GRUStepCache,
    GRUWeights,
    dropout_masks,
    gru_step_backward,
    gru_step_forward,
    init_gru,
)
from softpinn.networks.scaler import inflated_scaler
from softpinn.training.collocation import horizon_stride
from softpinn.training.optim import Adam, PlateauSchedule
from softpinn.util.csv_io import CsvTable, write_table


class ScaledSequence(NamedTuple):
    states: np.ndarray
    """(K + 1, 2n) scaled measured states"""
    inputs: np.ndarray
    """(K, 2n) scaled held inputs"""


class WindowResult(NamedTuple):
    loss: float
    grads: List[np.ndarray]
    h: np.ndarray
    """Hidden state after the window"""
    x: np.ndarray
    """Prediction after the window"""


def window_loss(
    w: GRUWeights,
    h0: np.ndarray,
    x0_s: np.ndarray,
    targets: np.ndarray,
    inputs: np.ndarray,
    /,
    *,
    dropout: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> WindowResult:
    """Free run over one window of steps with backpropagation through the
    whole window. h0 (B, n_h, H), x0_s (B, 2n), targets and inputs
    (T, B, 2n); the loss is the mean squared scaled error over steps, rows
    and channels.
    """
    T = inputs.shape[0]
    h = h0
    x = x0_s
    caches: List[GRUStepCache] = []
    predictions = []
    for k in range(T):
        masks = None
        if dropout > 0:
            assert rng is not None
            masks = dropout_masks(w, h.shape[0], dropout, rng)
        h, x, cache = gru_step_forward(w, h, x, inputs[k], masks)
        caches.append(cache)
        predictions.append(x)
    error = np.stack(predictions) - targets
    count = error.size
    loss = float(np.sum(error**2) / count)

    grads = [np.zeros_like(p) for p in w.parameters()]
    g_h = np.zeros_like(h0)
    g_x_in = np.zeros_like(x0_s)
    for k in range(T - 1, -1, -1):
        g_x = 2.0 * error[k] / count + g_x_in
        step_grads, g_h, g_x_in, _ = gru_step_backward(w, caches[k], g_h, g_x)
        for acc, g in zip(grads, step_grads):
            acc += g
    return WindowResult(loss=loss, grads=grads, h=h, x=x)


def free_run_error(w: GRUWeights, sequence: ScaledSequence) -> float:
    """Mean squared scaled error of a free run from a zero hidden state"""
    h = w.zero_state()
    x = sequence.states[:1]
    total = 0.0
    for k in range(sequence.inputs.shape[0]):
        h, x, _ = gru_step_forward(w, h, x, sequence.inputs[k : k + 1])
        total += float(np.sum((x[0] - sequence.states[k + 1]) ** 2))
    return total / (sequence.inputs.shape[0] * sequence.states.shape[1])


@dataclass
class GRUEpochRecord:
    epoch: int
    L_t: float
    """Mean window loss while training"""
    L_v: float
    """Free-run error on the held-out slices"""
    lr: float


@dataclass
class GRUTrainResult:
    weights: GRUWeights
    """Weights of the best validation epoch"""
    history: List[GRUEpochRecord]
    best_epoch: int
    best_validation: float


def sequences_from_datasets(
    datasets: Sequence[Dataset], T_s: float, w: GRUWeights
) -> List[ScaledSequence]:
    result = []
    for dataset in datasets:
        stride = horizon_stride(dataset, T_s)
        states = dataset.states()[::stride]
        inputs = dataset.p_d[::stride][:-1]
        result.append(
            ScaledSequence(states=w.scaler.x.scale(states), inputs=w.scaler.u.scale(inputs))
        )
    return result


def split_sequence(sequence: ScaledSequence, validation_fraction: float) -> Tuple[ScaledSequence, ScaledSequence]:
    """Leading and trailing parts; they share the state at the cut"""
    K = sequence.inputs.shape[0]
    cut = K - int(round(validation_fraction * K))
    if cut < 1 or cut >= K:
        raise DatasetTooShortError(f"{K} steps cannot be split {1 - validation_fraction:.0%}/{validation_fraction:.0%}")
    return (
        ScaledSequence(states=sequence.states[: cut + 1], inputs=sequence.inputs[:cut]),
        ScaledSequence(states=sequence.states[cut:], inputs=sequence.inputs[cut:]),
    )


class GRUTrainer:
    def __init__(
        self,
        config: GRUTrainConfig,
        datasets: Sequence[Dataset],
        /,
        *,
        T_s: float,
        boundaries: Boundaries,
    ) -> None:
        if not datasets:
            raise ValueError("need at least one dataset")
        self.config = config
        self.rng = np.random.default_rng(config.seed)
        scaler = inflated_scaler(datasets[0].n, T_s, boundaries)
        self.weights = init_gru(scaler, T_s, hidden=config.n_n, n_h=config.n_h, rng=self.rng)
        splits = [
            split_sequence(s, config.validation_fraction)
            for s in sequences_from_datasets(datasets, T_s, self.weights)
        ]
        self.train_sequences = [s[0] for s in splits]
        self.validation_sequences = [s[1] for s in splits]
        self.optimizer = Adam(self.weights.parameters(), lr=config.lr_0)
        self.schedule = PlateauSchedule(lr=config.lr_0, lr_min=config.lr_min, patience=config.n_lambda)
        self.epoch = 0
        self.history: List[GRUEpochRecord] = []
        self.best_weights: Optional[GRUWeights] = None
        self.best_validation = math.inf
        self.best_epoch = -1

    def run_epoch(self) -> GRUEpochRecord:
        epoch = self.epoch
        lr = self.optimizer.lr
        losses = []
        n_b = self.config.n_b
        for sequence in self.train_sequences:
            h = self.weights.zero_state()
            x = sequence.states[:1]
            K = sequence.inputs.shape[0]
            for batch, start in enumerate(range(0, K, n_b)):
                stop = min(start + n_b, K)
                result = window_loss(
                    self.weights,
                    h,
                    x,
                    sequence.states[start + 1 : stop + 1, None, :],
                    sequence.inputs[start:stop, None, :],
                    dropout=self.config.dropout,
                    rng=self.rng,
                )
                if not math.isfinite(result.loss):
                    raise NonFiniteLossError(
                        f"epoch {epoch} window {batch} has loss {result.loss}",
                        epoch=epoch,
                        batch=batch,
                    )
                self.optimizer.step(result.grads)
                self.weights.touch()
                losses.append(result.loss)
                h, x = result.h, result.x

        validation = float(
            np.mean([free_run_error(self.weights, s) for s in self.validation_sequences])
        )
        if not math.isfinite(validation):
            validation = math.inf
        record = GRUEpochRecord(epoch=epoch, L_t=float(np.mean(losses)), L_v=validation, lr=lr)
        self.history.append(record)
        logging.debug(f"gru epoch {epoch}: L_t={record.L_t:.4e} L_v={record.L_v:.4e} lr={lr:.3g}")
        if validation < self.best_validation or self.best_weights is None:
            self.best_validation = validation
            self.best_weights = self.weights.copy()
            self.best_epoch = epoch
        self.optimizer.lr = self.schedule.update(epoch, validation)
        self.epoch += 1
        return record

    def run(self, until_epoch: int) -> GRUTrainResult:
        while self.epoch < until_epoch:
            self.run_epoch()
        assert self.best_weights is not None
        return GRUTrainResult(
            weights=self.best_weights.copy(),
            history=list(self.history),
            best_epoch=self.best_epoch,
            best_validation=self.best_validation,
        )


def train_gru(
    config: GRUTrainConfig,
    datasets: Sequence[Dataset],
    /,
    *,
    T_s: float,
    boundaries: Boundaries,
) -> GRUTrainResult:
    return GRUTrainer(config, datasets, T_s=T_s, boundaries=boundaries).run(config.n_e)


def save_gru_history(path: str, history: Sequence[GRUEpochRecord]) -> None:
    write_table(
        path,
        CsvTable(
            kind="gru_history",
            columns=["epoch", "L_t", "L_v", "lr"],
            data=np.array(
                [[r.epoch, r.L_t, r.L_v, r.lr] for r in history], dtype=np.float64
            ).reshape(len(history), 4),
        ),
    )
