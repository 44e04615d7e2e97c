import math
from dataclasses import dataclass
from typing import List

import numpy as np

from softpinn.dynamics.types import Domain
from softpinn.util.csv_io import CsvTable, read_table, write_table


@dataclass
class Dataset:
    """Logged joint angles, velocities, measured and desired bellows
    pressures on a uniform time grid. Angles in rad, pressures in Pa.
    """

    rate: float
    """Sample rate, Hz"""
    t: np.ndarray
    """(N,) sample times, s"""
    q: np.ndarray
    """(N, n) joint angles"""
    qd: np.ndarray
    """(N, n) joint velocities"""
    p: np.ndarray
    """(N, 2n) measured pressures ordered [p_11, p_12, ..., p_n1, p_n2]"""
    p_d: np.ndarray
    """(N, 2n) desired pressures, same order"""
    domain: Domain
    """The operating condition the data was recorded in"""

    def __post_init__(self) -> None:
        if not self.rate > 0:
            raise ValueError(f"rate must be positive, got {self.rate}")
        self.t = np.ascontiguousarray(self.t, dtype=np.float64)
        rows = self.t.shape[0]
        self.q = np.ascontiguousarray(self.q, dtype=np.float64)
        if self.q.ndim != 2 or self.q.shape[0] != rows:
            raise ValueError(f"q must have shape ({rows}, n), got {self.q.shape}")
        n = self.q.shape[1]
        for name, width in (("qd", n), ("p", 2 * n), ("p_d", 2 * n)):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            if arr.shape != (rows, width):
                raise ValueError(
                    f"{name} must have shape ({rows}, {width}), got {arr.shape}"
                )
            setattr(self, name, arr)
        if rows > 1:
            spacing = np.diff(self.t)
            if np.any(spacing <= 0):
                raise ValueError("sample times must be strictly increasing")
            if not np.allclose(spacing, 1.0 / self.rate, rtol=1e-6, atol=0.0):
                raise ValueError(f"samples are not spaced at 1/{self.rate} s")

    @property
    def n(self) -> int:
        return self.q.shape[1]

    def __len__(self) -> int:
        return self.t.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.rate

    def states(self) -> np.ndarray:
        """(N, 2n) rows of [q, qd]"""
        return np.concatenate([self.q, self.qd], axis=1)

    def select(self, start: int, stop: int) -> "Dataset":
        return Dataset(
            rate=self.rate,
            t=self.t[start:stop],
            q=self.q[start:stop],
            qd=self.qd[start:stop],
            p=self.p[start:stop],
            p_d=self.p_d[start:stop],
            domain=self.domain,
        )


def dataset_columns(n: int) -> List[str]:
    columns = ["t"]
    columns += [f"q{i + 1}" for i in range(n)]
    columns += [f"qd{i + 1}" for i in range(n)]
    columns += [f"p{i + 1}{side}" for i in range(n) for side in (1, 2)]
    columns += [f"pd{i + 1}{side}" for i in range(n) for side in (1, 2)]
    return columns


def save_dataset(path: str, dataset: Dataset) -> None:
    """Writes the dataset as CSV with angles in degrees and pressures in Pa"""
    write_table(
        path,
        CsvTable(
            kind="dataset",
            columns=dataset_columns(dataset.n),
            data=np.column_stack(
                [
                    dataset.t,
                    np.degrees(dataset.q),
                    np.degrees(dataset.qd),
                    dataset.p,
                    dataset.p_d,
                ]
            ),
            meta={
                "rate": repr(float(dataset.rate)),
                "me": repr(float(dataset.domain.m_e)),
                "beta_deg": repr(math.degrees(dataset.domain.beta_g)),
                "angles": "deg",
                "pressures": "Pa",
            },
        ),
    )


def load_dataset(path: str) -> Dataset:
    table = read_table(path, kind="dataset")
    width = table.data.shape[1] - 1
    if width % 6 != 0:
        raise ValueError(f"{path} has {width + 1} columns, not a dataset layout")
    n = width // 6
    if table.columns != dataset_columns(n):
        raise ValueError(f"{path} has unexpected columns {table.columns}")
    try:
        rate = float(table.meta["rate"])
        domain = Domain(
            m_e=float(table.meta["me"]),
            beta_g=math.radians(float(table.meta["beta_deg"])),
        )
    except KeyError as e:
        raise ValueError(f"{path} is missing the {e.args[0]} tag") from e
    data = table.data
    return Dataset(
        rate=rate,
        t=data[:, 0],
        q=np.radians(data[:, 1 : 1 + n]),
        qd=np.radians(data[:, 1 + n : 1 + 2 * n]),
        p=data[:, 1 + 2 * n : 1 + 4 * n],
        p_d=data[:, 1 + 4 * n : 1 + 6 * n],
        domain=domain,
    )
