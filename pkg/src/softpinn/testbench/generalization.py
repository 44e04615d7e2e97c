"""Prediction accuracy of trained models across operating domains.

Every model rolls out the same held test inputs from rest in every domain of
the grid; the ground truth is the oracle under the same held inputs, so the
first-principles model integrated at the oracle step reproduces it exactly.
"""

import asyncio
import logging
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, List, Optional, Protocol, Sequence, Type

import numpy as np

from softpinn.config.config import RolloutConfig
from softpinn.dynamics.model import FirstPrinciplesDynamics
from softpinn.dynamics.robot_model import DEG
from softpinn.dynamics.types import NOMINAL_DOMAIN, Domain
from softpinn.errors import (
    DimensionMismatchError,
    IntegrationDivergedError,
    NonFinitePredictionError,
    PlantDivergedError,
)
from softpinn.integrators import oracle_rollout, rollout
from softpinn.networks.gru import GRUWeights, gru_rollout
from softpinn.networks.surrogate import SurrogateModel, self_loop_rollout
from softpinn.testbench.excitation import evaluation_protocol, generate_excitation
from softpinn.util.csv_io import CsvTable, write_table

PAYLOADS = (0.0, 0.05, 0.1, 0.2)
"""kg"""

TILTS = (0.0, 45 * DEG, 90 * DEG)
"""rad"""

DOMAIN_GRID = [Domain(m_e=m_e, beta_g=beta_g) for m_e in PAYLOADS for beta_g in TILTS]
"""The twelve evaluation domains; the first is the training domain"""


class Predictor(Protocol):
    @property
    def name(self) -> str:
        """Label in logs and tables; no whitespace"""

    def rollout(self, x0: np.ndarray, u_traj: np.ndarray, delta: Domain) -> np.ndarray:
        """(K + 1, 2n) states on the T_s grid for K held inputs"""


class SurrogatePredictor:
    def __init__(self, name: str, model: SurrogateModel) -> None:
        self.name = name
        self.model = model

    def rollout(self, x0: np.ndarray, u_traj: np.ndarray, delta: Domain) -> np.ndarray:
        return self_loop_rollout(self.model, x0, u_traj, delta)


class RecurrentPredictor:
    """The GRU baseline; it has no domain input"""

    def __init__(self, name: str, weights: GRUWeights) -> None:
        self.name = name
        self.weights = weights

    def rollout(self, x0: np.ndarray, u_traj: np.ndarray, delta: Domain) -> np.ndarray:
        return gru_rollout(self.weights, x0, u_traj, delta)


class IntegratorPredictor:
    def __init__(self, name: str, fp: FirstPrinciplesDynamics, config: RolloutConfig) -> None:
        self.name = name
        self.fp = fp
        self.config = config

    def rollout(self, x0: np.ndarray, u_traj: np.ndarray, delta: Domain) -> np.ndarray:
        return rollout(self.config, self.fp, x0, u_traj, delta)


if TYPE_CHECKING:
    _: Type[Predictor] = SurrogatePredictor
    __: Type[Predictor] = RecurrentPredictor
    ___: Type[Predictor] = IntegratorPredictor


@dataclass
class GeneralizationCell:
    model: str
    domain: Domain
    mae_q: float
    """Position error averaged over time and joints, rad; NaN on failure"""
    mae_qd: float
    """Velocity error averaged over time and joints, rad/s; NaN on failure"""
    ratio: float = math.nan
    """mae_q relative to the same model's mae_q in the training domain"""


def evaluation_inputs(
    n: int,
    rng: np.random.Generator,
    /,
    *,
    duration: float,
    T_s: float = 0.02,
) -> np.ndarray:
    """(K, 2n) desired pressures of the fast evaluation excitation, one row
    per T_s
    """
    protocol = evaluation_protocol(duration)
    stride = int(round(T_s * protocol.log_rate))
    return generate_excitation(protocol, n, rng)[::stride]


def _evaluate_cell(
    fp: FirstPrinciplesDynamics,
    predictors: Sequence[Predictor],
    inputs: np.ndarray,
    delta: Domain,
    T_s: float,
) -> List[GeneralizationCell]:
    n = fp.n
    x0 = np.zeros(2 * n)
    try:
        truth = oracle_rollout(fp, x0, inputs, delta, T_s=T_s)
    except IntegrationDivergedError as e:
        raise PlantDivergedError(f"test excitation diverged in {delta.describe()}") from e
    cells = []
    for predictor in predictors:
        try:
            predicted = predictor.rollout(x0, inputs, delta)
            error = np.abs(predicted - truth)
            mae_q = float(np.mean(error[:, :n]))
            mae_qd = float(np.mean(error[:, n:]))
        except (NonFinitePredictionError, IntegrationDivergedError, DimensionMismatchError) as e:
            logging.warning(f"{predictor.name} failed in {delta.describe()}: {e}")
            mae_q = mae_qd = math.nan
        cells.append(
            GeneralizationCell(model=predictor.name, domain=delta, mae_q=mae_q, mae_qd=mae_qd)
        )
    return cells


async def _evaluate_grid(
    fp: FirstPrinciplesDynamics,
    predictors: Sequence[Predictor],
    inputs: np.ndarray,
    domains: Sequence[Domain],
    T_s: float,
) -> List[List[GeneralizationCell]]:
    return await asyncio.gather(
        *[
            asyncio.to_thread(_evaluate_cell, fp, predictors, inputs, delta, T_s)
            for delta in domains
        ]
    )


def evaluate_generalization(
    predictors: Sequence[Predictor],
    fp: FirstPrinciplesDynamics,
    domains: Sequence[Domain] = DOMAIN_GRID,
    /,
    *,
    duration: float = 10.0,
    rng: Optional[np.random.Generator] = None,
    inputs: Optional[np.ndarray] = None,
    T_s: float = 0.02,
) -> List[GeneralizationCell]:
    """Position and velocity errors of every predictor in every domain, in
    domain-major order. The cells run concurrently; a model that fails in a
    cell is recorded with NaN errors. Ratios are relative to the training
    domain, which is evaluated even when it is not part of `domains`.
    """
    if inputs is None:
        if rng is None:
            raise ValueError("need either the test inputs or a random generator")
        inputs = evaluation_inputs(fp.n, rng, duration=duration, T_s=T_s)
    names = [p.name for p in predictors]
    if len(set(names)) != len(names) or any(not name or any(c.isspace() for c in name) for name in names):
        raise ValueError(f"predictor names must be unique single words, got {names}")

    evaluated = list(domains)
    if NOMINAL_DOMAIN not in evaluated:
        evaluated.append(NOMINAL_DOMAIN)
    grid = asyncio.run(_evaluate_grid(fp, predictors, inputs, evaluated, T_s))

    nominal = grid[evaluated.index(NOMINAL_DOMAIN)]
    baseline = {cell.model: cell.mae_q for cell in nominal}
    result = []
    for delta, cells in zip(evaluated, grid):
        if delta not in domains:
            continue
        for cell in cells:
            reference = baseline[cell.model]
            if reference > 0:
                cell.ratio = cell.mae_q / reference
            result.append(cell)
    for name in names:
        worst = max((c.ratio for c in result if c.model == name), default=math.nan)
        logging.info(
            f"{name}: training-domain error {math.degrees(baseline[name]):.3f} deg, worst ratio {worst:.2f}"
        )
    return result


def cross_domain_ratio(cells: Sequence[GeneralizationCell], model: str) -> float:
    """Largest error ratio of the model over the grid"""
    return max(c.ratio for c in cells if c.model == model)


def save_generalization(path: str, cells: Sequence[GeneralizationCell]) -> None:
    """One row per model and domain with the errors in degrees; the model
    column indexes the `models` tag
    """
    models: List[str] = []
    for cell in cells:
        if cell.model not in models:
            models.append(cell.model)
    rows = [
        [
            cell.domain.m_e,
            math.degrees(cell.domain.beta_g),
            float(models.index(cell.model)),
            math.degrees(cell.mae_q),
            math.degrees(cell.mae_qd),
            cell.ratio,
        ]
        for cell in cells
    ]
    columns = ["me", "beta_deg", "model", "e_q_deg", "e_qd_deg", "ratio"]
    write_table(
        path,
        CsvTable(
            kind="generalization",
            columns=columns,
            data=np.array(rows, dtype=np.float64).reshape(len(rows), len(columns)),
            meta={"models": ",".join(f"{name}={i}" for i, name in enumerate(models))},
        ),
    )
