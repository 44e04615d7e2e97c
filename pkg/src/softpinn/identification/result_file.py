from typing import Dict, List

import numpy as np

from softpinn.dynamics.robot_model import (
    contact_from_deg,
    contact_to_deg,
    stiffness_from_deg,
    stiffness_to_deg,
)
from softpinn.identification.three_step import IdentResult
from softpinn.util.schema import VersionedDocument, dump_document, load_document

IDENT_FILE_UNITS: Dict[str, str] = {
    "k_s": "N*m/deg",
    "k_v": "N*m*s/deg",
    "k_C": "N*m",
    "k_bs": "N*m/deg^1.5",
    "k_bd": "N*m*s/deg^1.5",
    "residual_rms": "N*m",
}


class IdentResultFile(VersionedDocument):
    units: Dict[str, str] = IDENT_FILE_UNITS
    k_s: List[float]
    k_v: List[float]
    k_C: List[float]
    k_bs: float
    k_bd: float
    subset_fractions: List[List[float]]
    """Per joint: static, dynamic, contact"""
    residual_rms: Dict[str, float]
    unidentified: List[str]
    refined: bool


def save_ident_result(result: IdentResult, path: str) -> None:
    dump_document(
        IdentResultFile(
            k_s=[stiffness_to_deg(v) for v in result.k_s],
            k_v=[stiffness_to_deg(v) for v in result.k_v],
            k_C=[float(v) for v in result.k_C],
            k_bs=contact_to_deg(result.k_bs),
            k_bd=contact_to_deg(result.k_bd),
            subset_fractions=result.subset_fractions.tolist(),
            residual_rms=result.residual_rms,
            unidentified=result.unidentified,
            refined=result.refined,
        ),
        path,
    )


def load_ident_result(path: str) -> IdentResult:
    doc = load_document(path, IdentResultFile)
    return IdentResult(
        k_s=np.array([stiffness_from_deg(v) for v in doc.k_s]),
        k_v=np.array([stiffness_from_deg(v) for v in doc.k_v]),
        k_C=np.array(doc.k_C),
        k_bs=contact_from_deg(doc.k_bs),
        k_bd=contact_from_deg(doc.k_bd),
        subset_fractions=np.array(doc.subset_fractions),
        residual_rms=dict(doc.residual_rms),
        unidentified=list(doc.unidentified),
        refined=doc.refined,
    )
