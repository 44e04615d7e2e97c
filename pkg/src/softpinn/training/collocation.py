"""Collocation points and measured transitions in scaled units."""

import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from scipy.stats import qmc

from softpinn.config.config import TrainConfig
from softpinn.errors import DatasetTooShortError
from softpinn.identification.dataset import Dataset
from softpinn.networks.scaler import Scaler


@dataclass
class CollocationSet:
    t_s: np.ndarray
    """(n_p,) scaled times in [-1, 1]"""
    x0: np.ndarray
    """(n_p, 2n) scaled initial states"""
    u0: np.ndarray
    """(n_p, 2n) scaled held inputs"""
    delta: np.ndarray
    """(n_p, 2) scaled domains"""
    ic: Optional["CollocationSet"]
    """PINC only: copies of the first n_0 rows with t = 0"""

    def __len__(self) -> int:
        return self.t_s.shape[0]

    def tau(self, kappa: float) -> np.ndarray:
        """Times in horizons, [0, kappa]"""
        return kappa * (self.t_s + 1.0) / 2.0

    def take(self, rows: np.ndarray) -> "CollocationSet":
        return CollocationSet(
            t_s=self.t_s[rows],
            x0=self.x0[rows],
            u0=self.u0[rows],
            delta=self.delta[rows],
            ic=None,
        )


def sample_collocation(
    config: TrainConfig, n: int, scaler: Scaler, rng: np.random.Generator
) -> CollocationSet:
    """Latin hypercube over time, inputs and (unless the domain is fixed to
    the nominal one) the domain, scaled to [-1, 1]; initial states normal
    with standard deviation x0_std, clipped to [-1, 1]
    """
    dim = 2 * n
    n_p = config.n_p
    sampled_domain = config.domain_mode == "sampled"
    channels = 1 + dim + (2 if sampled_domain else 0)
    lhs = 2.0 * qmc.LatinHypercube(d=channels, seed=rng).random(n_p) - 1.0
    x0 = np.clip(rng.normal(0.0, config.x0_std, (n_p, dim)), -1.0, 1.0)
    if sampled_domain:
        delta = lhs[:, 1 + dim :]
    else:
        delta = np.tile(scaler.delta.scale(np.zeros(2)), (n_p, 1))
    points = CollocationSet(
        t_s=lhs[:, 0],
        x0=x0,
        u0=lhs[:, 1 : 1 + dim],
        delta=delta,
        ic=None,
    )
    if config.n_a == 0 and config.n_0 > 0:
        ic = points.take(np.arange(config.n_0))
        ic.t_s = np.full(config.n_0, -1.0)
        points.ic = ic
    return points


@dataclass
class TransitionSet:
    """Measured one-horizon transitions (x0, u0, delta) -> x1, scaled"""

    x0: np.ndarray
    u0: np.ndarray
    delta: np.ndarray
    x1: np.ndarray

    def __len__(self) -> int:
        return self.x0.shape[0]

    def take(self, rows: np.ndarray) -> "TransitionSet":
        return TransitionSet(
            x0=self.x0[rows], u0=self.u0[rows], delta=self.delta[rows], x1=self.x1[rows]
        )


def horizon_stride(dataset: Dataset, T_s: float) -> int:
    """Samples per horizon; the dataset rate must be a multiple of 1/T_s"""
    stride = dataset.rate * T_s
    if stride < 1 or not math.isclose(stride, round(stride), rel_tol=0, abs_tol=1e-9):
        raise ValueError(
            f"a {dataset.rate} Hz dataset cannot be sampled every {T_s} s"
        )
    return int(round(stride))


def data_transitions(
    datasets: List[Dataset], T_s: float, scaler: Scaler
) -> TransitionSet:
    """Every pair of samples T_s apart, with the desired pressures of the
    earlier sample as the held input
    """
    parts = []
    for dataset in datasets:
        stride = horizon_stride(dataset, T_s)
        if len(dataset) <= stride:
            raise DatasetTooShortError(
                f"{len(dataset)} samples do not span one {T_s} s horizon"
            )
        X = dataset.states()
        D = np.tile(dataset.domain.as_array(), (len(dataset) - stride, 1))
        parts.append((X[:-stride], dataset.p_d[:-stride], D, X[stride:]))
    return TransitionSet(
        x0=scaler.x.scale(np.concatenate([p[0] for p in parts])),
        u0=scaler.u.scale(np.concatenate([p[1] for p in parts])),
        delta=scaler.delta.scale(np.concatenate([p[2] for p in parts])),
        x1=scaler.x.scale(np.concatenate([p[3] for p in parts])),
    )
