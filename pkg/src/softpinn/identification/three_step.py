"""Sequential least-squares identification of the joint parameters: stiffness
from slow rows inside the soft boundaries, friction from moving rows inside
them, and the shared contact coefficients from rows beyond them.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, NamedTuple, Tuple

import numpy as np

from softpinn.dynamics.model import dynamics_terms
from softpinn.dynamics.robot_model import RobotModel
from softpinn.errors import (
    DatasetTooShortError,
    IdentificationError,
    RankDeficiencyError,
    combine_multiple_exceptions,
)
from softpinn.identification.dataset import Dataset
from softpinn.identification.least_squares import solve_least_squares
from softpinn.identification.partition import partition
from softpinn.identification.signal import (
    DEFAULT_CUTOFF,
    estimate_acceleration,
    recorded_motion,
)


@dataclass(frozen=True)
class TorqueSamples:
    """Processed rows the regressors are built from; every field is (N, n)"""

    q: np.ndarray
    qd: np.ndarray
    qdd: np.ndarray
    tau: np.ndarray
    """Actuation torque from the measured pressures"""
    gravity: np.ndarray
    inertial: np.ndarray
    """M q̈"""
    coriolis: np.ndarray

    def __len__(self) -> int:
        return self.q.shape[0]


def torque_samples(
    dataset: Dataset,
    model: RobotModel,
    /,
    *,
    cutoff: float = DEFAULT_CUTOFF,
    recorded_velocity: bool = False,
) -> TorqueSamples:
    """Estimates velocities and accelerations and evaluates the rigid-body
    torque terms at every retained row. With `recorded_velocity` the logged
    angles and velocities are used unfiltered.
    """
    if dataset.n != model.n:
        raise ValueError(f"dataset has {dataset.n} joints, model has {model.n}")
    if recorded_velocity:
        motion = recorded_motion(dataset)
    else:
        motion = estimate_acceleration(dataset, cutoff=cutoff)
    p = dataset.p[motion.rows]
    domains = np.tile(dataset.domain.as_array(), (p.shape[0], 1))
    terms = dynamics_terms(motion.q, motion.qd, motion.qdd, domains, model)
    return TorqueSamples(
        q=motion.q,
        qd=motion.qd,
        qdd=motion.qdd,
        tau=model.A_p * model.r_p * (p[:, 0::2] - p[:, 1::2]),
        gravity=terms.gravity,
        inertial=terms.inertial,
        coriolis=terms.coriolis,
    )


class StepFit(NamedTuple):
    values: np.ndarray
    residual_rms: float


class FrictionFit(NamedTuple):
    k_v: np.ndarray
    k_C: np.ndarray
    residual_rms: float


class ContactFit(NamedTuple):
    k_bs: float
    k_bd: float
    residual_rms: float
    unidentified: List[str]
    """`k_bd` when the data never moves beyond the soft boundary"""


def _friction_features(qd: np.ndarray, model: RobotModel) -> np.ndarray:
    return np.tanh(qd * math.pi / model.qdot_C)


def _stack(
    mask: np.ndarray, columns: List[np.ndarray], target: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """Block-diagonal regressor: every joint contributes its masked rows and
    its own group of len(columns) parameter columns
    """
    n = mask.shape[1]
    width = len(columns)
    blocks = []
    targets = []
    for i in range(n):
        rows = mask[:, i]
        block = np.zeros((int(rows.sum()), n * width))
        for c, column in enumerate(columns):
            block[:, i * width + c] = column[rows, i]
        blocks.append(block)
        targets.append(target[rows, i])
    return np.concatenate(blocks, axis=0), np.concatenate(targets)


def identify_stiffness(
    samples: TorqueSamples,
    mask: np.ndarray,
    model: RobotModel,
) -> StepFit:
    """Fits tau - g = k_s q per joint on the masked rows

    Raises:
        DatasetTooShortError: fewer than 3n usable rows
        RankDeficiencyError: a joint is never deflected in the masked rows
    """
    if int(mask.sum()) < 3 * model.n:
        raise DatasetTooShortError(
            f"stiffness needs at least {3 * model.n} rows, got {int(mask.sum())}"
        )
    target = samples.tau - samples.gravity
    Q, y = _stack(mask, [samples.q], target)
    solution = solve_least_squares(Q, y)
    if solution.deficient:
        raise RankDeficiencyError(
            f"stiffness is not identifiable for joints {solution.deficient}",
            step="stiffness",
            joints=solution.deficient,
        )
    return StepFit(values=solution.values, residual_rms=solution.residual_rms)


def identify_friction(
    samples: TorqueSamples, mask: np.ndarray, model: RobotModel, k_s: np.ndarray
) -> FrictionFit:
    """Fits tau - g - s - M q̈ - c = k_v q̇ + k_C tanh(π q̇ / q̇_C) per joint

    Raises:
        RankDeficiencyError: the two friction columns of a joint are
            collinear or empty
    """
    target = (
        samples.tau
        - samples.gravity
        - k_s * samples.q
        - samples.inertial
        - samples.coriolis
    )
    Q, y = _stack(
        mask, [samples.qd, _friction_features(samples.qd, model)], target
    )
    solution = solve_least_squares(Q, y)
    if solution.deficient:
        joints = sorted({c // 2 for c in solution.deficient})
        raise RankDeficiencyError(
            f"friction is not identifiable for joints {joints}",
            step="friction",
            joints=joints,
        )
    return FrictionFit(
        k_v=solution.values[0::2],
        k_C=solution.values[1::2],
        residual_rms=solution.residual_rms,
    )


def identify_contact(
    samples: TorqueSamples,
    mask: np.ndarray,
    model: RobotModel,
    k_s: np.ndarray,
    k_v: np.ndarray,
    k_C: np.ndarray,
) -> ContactFit:
    """Fits the contact stiffness and damping shared by all joints on the
    rows beyond the soft boundary. When the data holds no motion there the
    damping keeps the model's value and is reported as unidentified.

    Raises:
        RankDeficiencyError: no usable contact rows
    """
    target = (
        samples.tau
        - samples.gravity
        - k_s * samples.q
        - samples.inertial
        - samples.coriolis
        - k_v * samples.qd
        - k_C * _friction_features(samples.qd, model)
    )
    penetration = np.maximum(np.abs(samples.q) - model.q_bt, 0.0)
    spring = np.sign(samples.q) * penetration**1.5
    damper = np.sqrt(penetration) * samples.qd
    Q = np.column_stack([spring[mask], damper[mask]])
    solution = solve_least_squares(Q, target[mask])
    if 0 in solution.deficient:
        raise RankDeficiencyError(
            "contact stiffness is not identifiable: no rows beyond the soft boundary",
            step="contact",
            joints=solution.deficient,
        )
    if solution.deficient:
        logging.warning("contact damping is not identifiable, keeping the model value")
        return ContactFit(
            k_bs=float(solution.values[0]),
            k_bd=model.k_bd,
            residual_rms=solution.residual_rms,
            unidentified=["k_bd"],
        )
    return ContactFit(
        k_bs=float(solution.values[0]),
        k_bd=float(solution.values[1]),
        residual_rms=solution.residual_rms,
        unidentified=[],
    )


@dataclass
class IdentResult:
    k_s: np.ndarray
    """Stiffness per joint, N·m/rad"""
    k_v: np.ndarray
    """Viscous friction per joint, N·m·s/rad"""
    k_C: np.ndarray
    """Coulomb friction per joint, N·m"""
    k_bs: float
    """Contact stiffness, N·m/rad^1.5"""
    k_bd: float
    """Contact damping, N·m·s/rad^1.5"""
    subset_fractions: np.ndarray
    """(n, 3) share of the retained rows per joint in the static, dynamic and
    contact subsets
    """
    residual_rms: Dict[str, float]
    """Torque residual per step, N·m"""
    unidentified: List[str]
    """Parameters kept from the prior model"""
    refined: bool
    """Whether stiffness and friction were refit jointly after the first pass"""

    def apply(self, model: RobotModel) -> RobotModel:
        """The model with its joint parameters replaced by these"""
        return model.with_parameters(
            k_s=self.k_s, k_v=self.k_v, k_C=self.k_C, k_bs=self.k_bs, k_bd=self.k_bd
        )


def refit_stiffness_friction(
    samples: TorqueSamples, mask: np.ndarray, model: RobotModel
) -> Tuple[StepFit, FrictionFit]:
    """Fits stiffness and friction together on the masked rows. Slow rows
    still carry Coulomb torque up to k_C, which biases the stiffness step
    when it is fit alone.

    Raises:
        RankDeficiencyError: a joint's columns are collinear or empty
    """
    target = samples.tau - samples.gravity - samples.inertial - samples.coriolis
    Q, y = _stack(
        mask,
        [samples.q, samples.qd, _friction_features(samples.qd, model)],
        target,
    )
    solution = solve_least_squares(Q, y)
    if solution.deficient:
        joints = sorted({c // 3 for c in solution.deficient})
        raise RankDeficiencyError(
            f"stiffness and friction are not jointly identifiable for joints {joints}",
            step="refit",
            joints=joints,
        )
    return (
        StepFit(values=solution.values[0::3], residual_rms=solution.residual_rms),
        FrictionFit(
            k_v=solution.values[1::3],
            k_C=solution.values[2::3],
            residual_rms=solution.residual_rms,
        ),
    )


def identify_all(
    dataset: Dataset,
    model: RobotModel,
    /,
    *,
    cutoff: float = DEFAULT_CUTOFF,
    refine: bool = False,
    recorded_velocity: bool = False,
) -> IdentResult:
    """Runs stiffness, friction and contact identification in order. A step
    that fails leaves the model's values in place for the later steps so
    every failure is reported together. With `refine`, a successful first
    pass is followed by a joint stiffness and friction fit on the static
    and dynamic rows before contact is identified; the static rows of a
    hold-and-ramp recording still creep and carry Coulomb torque, which the
    stiffness step alone absorbs into k_s. `recorded_velocity` is passed on
    to torque_samples.

    Raises:
        DatasetTooShortError: the dataset is empty or too short to filter
        RankDeficiencyError: a single step failed
        ExceptionGroup: several steps failed (a cause chain before 3.11)
        IdentificationError: an estimate is negative or not finite
    """
    if len(dataset) == 0:
        raise DatasetTooShortError("dataset is empty")
    samples = torque_samples(
        dataset, model, cutoff=cutoff, recorded_velocity=recorded_velocity
    )
    parts = partition(samples, model)
    errors: List[Exception] = []
    residuals: Dict[str, float] = {}

    k_s = model.k_s
    try:
        stiffness = identify_stiffness(samples, parts.static, model)
        k_s = stiffness.values
        residuals["stiffness"] = stiffness.residual_rms
    except (RankDeficiencyError, DatasetTooShortError) as e:
        errors.append(e)

    k_v, k_C = model.k_v, model.k_C
    try:
        friction = identify_friction(samples, parts.dynamic, model, k_s)
        k_v, k_C = friction.k_v, friction.k_C
        residuals["friction"] = friction.residual_rms
    except RankDeficiencyError as e:
        errors.append(e)

    refined = False
    if refine and not errors:
        try:
            joint_stiffness, joint_friction = refit_stiffness_friction(
                samples, parts.static | parts.dynamic, model
            )
            k_s = joint_stiffness.values
            k_v, k_C = joint_friction.k_v, joint_friction.k_C
            residuals["refit"] = joint_stiffness.residual_rms
            refined = True
        except RankDeficiencyError as e:
            logging.warning(f"keeping the sequential estimates: {e}")

    k_bs, k_bd = model.k_bs, model.k_bd
    unidentified: List[str] = []
    try:
        contact = identify_contact(samples, parts.contact, model, k_s, k_v, k_C)
        k_bs, k_bd = contact.k_bs, contact.k_bd
        unidentified = contact.unidentified
        residuals["contact"] = contact.residual_rms
    except RankDeficiencyError as e:
        errors.append(e)

    if errors:
        raise combine_multiple_exceptions("identification failed", errors)

    values = np.concatenate([k_s, k_v, k_C, [k_bs, k_bd]])
    if not np.all(np.isfinite(values)) or np.any(values < 0):
        raise IdentificationError(
            f"identified parameters are not physical: k_s={k_s}, k_v={k_v}, "
            f"k_C={k_C}, k_bs={k_bs}, k_bd={k_bd}"
        )
    logging.info(
        f"identified {model.n} joints from {len(samples)} rows"
        + (" with a joint stiffness and friction refit" if refined else "")
    )
    return IdentResult(
        k_s=k_s,
        k_v=k_v,
        k_C=k_C,
        k_bs=k_bs,
        k_bd=k_bd,
        subset_fractions=parts.fractions(),
        residual_rms=residuals,
        unidentified=unidentified,
        refined=refined,
    )
