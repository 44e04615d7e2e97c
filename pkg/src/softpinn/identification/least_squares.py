from typing import List, NamedTuple

import numpy as np
import scipy.linalg

RANK_TOLERANCE = 1e-10
"""Relative to the Frobenius norm of the regressor"""


class LeastSquaresSolution(NamedTuple):
    values: np.ndarray
    """The minimizer; columns that could not be identified are 0"""
    deficient: List[int]
    """Regressor columns outside the numerical rank, ascending"""
    residual_rms: float


def solve_least_squares(Q: np.ndarray, y: np.ndarray) -> LeastSquaresSolution:
    """Least-squares solution of Q k ≈ y through a column-pivoted QR
    factorization. Columns whose pivot falls below the rank tolerance are
    reported instead of solved for.
    """
    Q = np.asarray(Q, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if Q.ndim != 2 or y.shape != (Q.shape[0],):
        raise ValueError(f"regressor {Q.shape} does not match target {y.shape}")
    cols = Q.shape[1]
    values = np.zeros(cols)
    scale = float(np.linalg.norm(Q)) if Q.size else 0.0
    if scale == 0.0:
        rms = float(np.sqrt(np.mean(y**2))) if y.size else 0.0
        return LeastSquaresSolution(values, list(range(cols)), rms)

    basis, R, pivots = scipy.linalg.qr(Q, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.count_nonzero(diag > RANK_TOLERANCE * scale))
    if rank > 0:
        values[pivots[:rank]] = scipy.linalg.solve_triangular(
            R[:rank, :rank], basis[:, :rank].T @ y
        )
    residual = Q @ values - y
    return LeastSquaresSolution(
        values=values,
        deficient=sorted(int(c) for c in pivots[rank:]),
        residual_rms=float(np.sqrt(np.mean(residual**2))),
    )
