"""Random hold-and-ramp pressure excitation of the bellows."""

from typing import Tuple

import numpy as np

from softpinn.config.config import ExcitationProtocol, ExcitationProtocolFromValues

BAR = 1e5
"""Pa"""

EXCITATION_P_MAX = 0.7 * BAR
"""Pressure cap of the recorded excitations, Pa"""


def training_protocol(duration: float) -> ExcitationProtocolFromValues:
    """Combinations held for 3 s, recorded at 1 kHz and kept at 50 Hz"""
    return ExcitationProtocolFromValues(
        hold=3.0,
        transition=1.0,
        p_max=EXCITATION_P_MAX,
        log_rate=1000,
        output_rate=50,
        duration=duration,
    )


def evaluation_protocol(duration: float) -> ExcitationProtocolFromValues:
    """As training_protocol but each combination is held for only 1 s"""
    return ExcitationProtocolFromValues(
        hold=1.0,
        transition=1.0,
        p_max=EXCITATION_P_MAX,
        log_rate=1000,
        output_rate=50,
        duration=duration,
    )


def log_samples(protocol: ExcitationProtocol) -> int:
    """Rows of the excitation on the log grid"""
    return int(round(protocol.duration * protocol.log_rate))


def excitation_knots(
    protocol: ExcitationProtocol, n: int, rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray]:
    """Knot times (J,) and pressures (J, 2n) of the piecewise-linear profile.
    Combination j is reached `transition` seconds after j * hold and held
    until the next ramp starts.
    """
    count = int(np.ceil(protocol.duration / protocol.hold)) + 1
    combos = rng.uniform(0.0, protocol.p_max, (count, 2 * n))
    times = [0.0]
    values = [combos[0]]
    for j in range(1, count):
        start = j * protocol.hold
        times.extend([start, start + protocol.transition])
        values.extend([combos[j - 1], combos[j]])
    return np.array(times), np.array(values)


def generate_excitation(
    protocol: ExcitationProtocol, n: int, rng: np.random.Generator
) -> np.ndarray:
    """(K, 2n) desired pressures on the log grid, within [0, p_max]"""
    times, values = excitation_knots(protocol, n, rng)
    t = np.arange(log_samples(protocol)) / protocol.log_rate
    return np.column_stack(
        [np.interp(t, times, values[:, j]) for j in range(2 * n)]
    )
