"""Offline signal processing of logged joint angles: zero-phase low-pass
filtering followed by central differences.
"""

import math
from typing import NamedTuple

import numpy as np
from scipy import signal as sps

from softpinn.errors import DatasetTooShortError
from softpinn.identification.dataset import Dataset

DEFAULT_CUTOFF = 5.0
"""Cutoff of the offline filter, Hz"""
FILTER_ORDER = 2
"""Order of the Butterworth section; applied forward and backward"""


class MotionEstimate(NamedTuple):
    rows: slice
    """The dataset rows the estimate covers; edge rows are trimmed"""
    q: np.ndarray
    """(N', n) filtered joint angles"""
    qd: np.ndarray
    """(N', n) joint velocities"""
    qdd: np.ndarray
    """(N', n) joint accelerations"""


def edge_rows(rate: float, cutoff: float) -> int:
    """Rows dropped at each end of the record to skip the filter transients"""
    return max(5 * FILTER_ORDER, int(math.ceil(2.0 * rate / cutoff)))


def lowpass(values: np.ndarray, rate: float, cutoff: float) -> np.ndarray:
    """Zero-phase Butterworth low-pass along the first axis"""
    if not 0 < cutoff < rate / 2:
        raise ValueError(f"cutoff {cutoff} Hz must lie below the Nyquist rate of {rate} Hz")
    b, a = sps.butter(FILTER_ORDER, cutoff, btype="low", fs=rate)
    padlen = 3 * (max(len(a), len(b)) - 1)
    if values.shape[0] <= padlen:
        raise DatasetTooShortError(
            f"need more than {padlen} samples to filter, got {values.shape[0]}"
        )
    return sps.filtfilt(b, a, values, axis=0, padtype="odd", padlen=padlen)


def estimate_acceleration(
    dataset: Dataset, /, *, cutoff: float = DEFAULT_CUTOFF
) -> MotionEstimate:
    """Filters the logged joint angles and differentiates them twice by
    central differences

    Raises:
        DatasetTooShortError: if nothing is left after trimming the edges
    """
    edge = edge_rows(dataset.rate, cutoff)
    if len(dataset) < 2 * edge + 1:
        raise DatasetTooShortError(
            f"need at least {2 * edge + 1} samples at {dataset.rate} Hz, got {len(dataset)}"
        )
    dt = 1.0 / dataset.rate
    q = lowpass(dataset.q, dataset.rate, cutoff)
    qd = (q[2:] - q[:-2]) / (2.0 * dt)
    qdd = (q[2:] - 2.0 * q[1:-1] + q[:-2]) / dt**2
    inner = slice(edge - 1, len(dataset) - edge - 1)
    return MotionEstimate(
        rows=slice(edge, len(dataset) - edge),
        q=q[edge : len(dataset) - edge],
        qd=qd[inner],
        qdd=qdd[inner],
    )


def recorded_motion(dataset: Dataset) -> MotionEstimate:
    """Takes the logged angles and velocities as exact and differentiates the
    velocities once by central differences; for noiseless recordings

    Raises:
        DatasetTooShortError: fewer than three samples
    """
    if len(dataset) < 3:
        raise DatasetTooShortError(f"need at least 3 samples, got {len(dataset)}")
    dt = 1.0 / dataset.rate
    qdd = (dataset.qd[2:] - dataset.qd[:-2]) / (2.0 * dt)
    return MotionEstimate(
        rows=slice(1, len(dataset) - 1),
        q=dataset.q[1:-1],
        qd=dataset.qd[1:-1],
        qdd=qdd,
    )
