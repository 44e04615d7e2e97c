"""On-disk form of the configuration protocols. Angles carry a `_deg` suffix
and are converted to radians when the documents are turned into configs.
"""

import math
from typing import Any, Dict, List, Literal, Optional

from pydantic import Field

from softpinn.config.config import (
    AshaConfigFromValues,
    Boundaries,
    BoundariesFromValues,
    DomainMode,
    ExcitationProtocolFromValues,
    GRUTrainConfigFromValues,
    TrainConfigFromValues,
)
from softpinn.dynamics.types import Domain
from softpinn.util.schema import DocumentSection, VersionedDocument, load_document

SensorKind = Literal["none", "quantizing", "bench"]
ControllerTiming = Literal["measured", "fixed"]


class BoundariesFile(DocumentSection):
    q_max_deg: float = 25.0
    qd_max_deg: float = 30.0
    p_max: float = 70000.0
    """Pa"""
    m_e_max: float = 0.2
    """kg"""
    beta_max_deg: float = 90.0
    kappa: float = 1.25


def boundaries_to_file(boundaries: Boundaries) -> BoundariesFile:
    return BoundariesFile(
        q_max_deg=math.degrees(boundaries.q_max),
        qd_max_deg=math.degrees(boundaries.qd_max),
        p_max=boundaries.p_max,
        m_e_max=boundaries.m_e_max,
        beta_max_deg=math.degrees(boundaries.beta_max),
        kappa=boundaries.kappa,
    )


def boundaries_from_file(doc: BoundariesFile) -> BoundariesFromValues:
    return BoundariesFromValues(
        q_max=math.radians(doc.q_max_deg),
        qd_max=math.radians(doc.qd_max_deg),
        p_max=doc.p_max,
        m_e_max=doc.m_e_max,
        beta_max=math.radians(doc.beta_max_deg),
        kappa=doc.kappa,
    )


class DataSettings(DocumentSection):
    n_joints: int
    """Joints of the default robot when no robot file is given"""
    train_duration: float
    """Length of the recorded training excitation, s"""
    hold: float = 3.0
    transition: float = 1.0
    p_max: float = 70000.0
    """Pressure cap of the excitation and the controllers, Pa"""
    log_rate: int = 1000
    output_rate: int = 50
    sensors: SensorKind = "quantizing"
    refine_identification: bool = False
    """Refit stiffness and friction jointly after the three sequential steps"""


class SurrogateSettings(DocumentSection):
    n_e: int
    n_s: int
    n_p: int
    n_0: int
    n_b: int
    n_a: int
    n_n: int
    n_h: int
    n_lambda: int
    lr_0: float
    lr_min: float
    T_s: float = 0.02
    domain_mode: DomainMode = "sampled"
    x0_std: float = 0.4
    validation_fraction: float = 0.3
    use_data: bool = False
    """Add the data loss on the recorded training transitions"""
    train_pinc: bool = True
    """Also train a PINC with the same budget"""


class RecurrentSettings(DocumentSection):
    n_e: int
    n_b: int
    n_n: int
    n_h: int
    dropout: float
    n_lambda: int
    lr_0: float
    lr_min: float
    validation_fraction: float = 0.3


class AshaSettings(DocumentSection):
    n_trials: int
    grace_period: int
    reduction_factor: int = 2
    max_epochs: int
    max_concurrency: int = 1


class EvaluationSettings(DocumentSection):
    duration: float = 10.0
    """Length of each generalization rollout, s"""


class BenchSettings(DocumentSection):
    duration: float = 100.0
    """Length of the benchmark trajectory, s; one horizon per T_s"""
    warmup: int = 100


class ControlSettings(DocumentSection):
    duration: float = 40.0
    """Length of each tracking experiment, s"""
    domains: List[str] = Field(
        default_factory=lambda: [
            "me=0,beta=0",
            "me=0,beta=45",
            "me=0,beta=90",
            "me=0.2,beta=0",
            "me=0.2,beta=45",
            "me=0.2,beta=90",
        ]
    )
    m: int = 3
    Q_sq: float = 0.7
    Q_sqd: float = 0.01
    Q_tq: float = 0.7
    Q_tqd: float = 0.01
    R_s: float = 0.01
    max_iterations: int = 30
    tolerance: float = 1e-6
    timing: ControllerTiming = "measured"


class SettingsFile(VersionedDocument):
    """Every stage's settings for one pipeline run"""

    data: DataSettings
    boundaries: BoundariesFile = Field(default_factory=BoundariesFile)
    surrogate: SurrogateSettings
    recurrent: RecurrentSettings
    asha: AshaSettings
    evaluation: EvaluationSettings = Field(default_factory=EvaluationSettings)
    bench: BenchSettings = Field(default_factory=BenchSettings)
    control: ControlSettings = Field(default_factory=ControlSettings)


def load_settings(path: str) -> SettingsFile:
    return load_document(path, SettingsFile)


def train_config_from_settings(
    doc: SettingsFile, seed: int, overrides: Optional[Dict[str, Any]] = None
) -> TrainConfigFromValues:
    values = doc.surrogate.model_dump(exclude={"use_data", "train_pinc"})
    values.update(overrides or {})
    return TrainConfigFromValues(
        boundaries=boundaries_from_file(doc.boundaries), seed=seed, **values
    )


def gru_config_from_settings(
    doc: SettingsFile, seed: int, overrides: Optional[Dict[str, Any]] = None
) -> GRUTrainConfigFromValues:
    values = doc.recurrent.model_dump()
    values.update(overrides or {})
    return GRUTrainConfigFromValues(seed=seed, **values)


def asha_config_from_settings(doc: SettingsFile, seed: int) -> AshaConfigFromValues:
    return AshaConfigFromValues(seed=seed, **doc.asha.model_dump())


def training_excitation(doc: SettingsFile) -> ExcitationProtocolFromValues:
    return ExcitationProtocolFromValues(
        hold=doc.data.hold,
        transition=doc.data.transition,
        p_max=doc.data.p_max,
        log_rate=doc.data.log_rate,
        output_rate=doc.data.output_rate,
        duration=doc.data.train_duration,
    )


DOMAIN_KEYS = ("me", "beta")


def parse_domain(text: str) -> Domain:
    """`me=<kg>,beta=<deg>` to a Domain in kg and rad

    Raises:
        ValueError: a key is unknown, missing or repeated, a value is not a
            number, or the payload is negative
    """
    values: Dict[str, float] = {}
    for item in text.split(","):
        key, sep, value = item.strip().partition("=")
        key = key.strip()
        if not sep:
            raise ValueError(f"expected key=value in {text!r}, got {item!r}")
        if key not in DOMAIN_KEYS:
            raise ValueError(f"unknown domain key {key!r} in {text!r}; use me and beta")
        if key in values:
            raise ValueError(f"domain key {key!r} given twice in {text!r}")
        try:
            values[key] = float(value)
        except ValueError:
            raise ValueError(f"{key} must be a number, got {value!r}") from None
    missing = [k for k in DOMAIN_KEYS if k not in values]
    if missing:
        raise ValueError(f"domain {text!r} is missing {missing}")
    if values["me"] < 0:
        raise ValueError(f"payload must be nonnegative, got {values['me']}")
    return Domain(m_e=values["me"], beta_g=math.radians(values["beta"]))

