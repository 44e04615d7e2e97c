import math
from typing import Dict, List, Optional

import numpy as np

from softpinn.dynamics.robot_model import (
    DEG,
    RobotModel,
    contact_from_deg,
    contact_to_deg,
    stiffness_from_deg,
    stiffness_to_deg,
)
from softpinn.util.schema import VersionedDocument, dump_document, load_document

ROBOT_FILE_UNITS: Dict[str, str] = {
    "h": "m",
    "dh": "[a m, alpha deg, d m, theta_offset deg]",
    "masses": "kg",
    "com": "m",
    "inertia": "kg*m^2",
    "A_p": "m^2",
    "r_p": "m",
    "k_s": "N*m/deg",
    "k_v": "N*m*s/deg",
    "k_C": "N*m",
    "k_bs": "N*m/deg^1.5",
    "k_bd": "N*m*s/deg^1.5",
    "qdot_C_deg": "deg/s",
    "q_bt_deg": "deg",
    "g0": "m/s^2",
}


class RobotModelFile(VersionedDocument):
    """On-disk robot model. Identified parameters use degree-based units as
    declared in `units`; loading converts everything to SI radians.
    """

    units: Dict[str, str] = ROBOT_FILE_UNITS
    n: int
    h: float
    dh: List[List[float]]
    masses: List[float]
    com: List[List[float]]
    inertia: List[List[List[float]]]
    A_p: float
    r_p: float
    k_s: List[float]
    k_v: List[float]
    k_C: List[float]
    k_bs: float
    k_bd: float
    qdot_C_deg: float
    q_bt_deg: float
    g0: float = 9.81
    payload_offset: Optional[List[float]] = None


def robot_model_to_file(model: RobotModel) -> RobotModelFile:
    dh = model.dh_table.copy()
    dh[:, 1] /= DEG
    dh[:, 3] /= DEG
    return RobotModelFile(
        n=model.n,
        h=model.h,
        dh=dh.tolist(),
        masses=model.masses.tolist(),
        com=model.com.tolist(),
        inertia=model.inertia.tolist(),
        A_p=model.A_p,
        r_p=model.r_p,
        k_s=[stiffness_to_deg(v) for v in model.k_s],
        k_v=[stiffness_to_deg(v) for v in model.k_v],
        k_C=model.k_C.tolist(),
        k_bs=contact_to_deg(model.k_bs),
        k_bd=contact_to_deg(model.k_bd),
        qdot_C_deg=math.degrees(model.qdot_C),
        q_bt_deg=math.degrees(model.q_bt),
        g0=model.g0,
        payload_offset=None
        if model.payload_offset is None
        else model.payload_offset.tolist(),
    )


def robot_model_from_file(doc: RobotModelFile) -> RobotModel:
    dh = np.array(doc.dh, dtype=np.float64)
    if dh.ndim != 2 or dh.shape[1] != 4:
        raise ValueError(f"dh must have 4 columns per row, got shape {dh.shape}")
    dh[:, 1] *= DEG
    dh[:, 3] *= DEG
    return RobotModel(
        n=doc.n,
        h=doc.h,
        dh_table=dh,
        masses=np.array(doc.masses),
        com=np.array(doc.com),
        inertia=np.array(doc.inertia),
        A_p=doc.A_p,
        r_p=doc.r_p,
        k_s=np.array([stiffness_from_deg(v) for v in doc.k_s]),
        k_v=np.array([stiffness_from_deg(v) for v in doc.k_v]),
        k_C=np.array(doc.k_C),
        k_bs=contact_from_deg(doc.k_bs),
        k_bd=contact_from_deg(doc.k_bd),
        qdot_C=doc.qdot_C_deg * DEG,
        q_bt=doc.q_bt_deg * DEG,
        g0=doc.g0,
        payload_offset=None
        if doc.payload_offset is None
        else np.array(doc.payload_offset),
    )


def load_robot_model(path: str) -> RobotModel:
    return robot_model_from_file(load_document(path, RobotModelFile))


def save_robot_model(model: RobotModel, path: str) -> None:
    dump_document(robot_model_to_file(model), path)
