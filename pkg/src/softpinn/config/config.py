from typing import TYPE_CHECKING, List, Literal, Optional, Protocol, Tuple, Type

import numpy as np

from softpinn.dynamics.types import Domain

IntegrationScheme = Literal["euler", "rk4"]
DomainMode = Literal["sampled", "nominal"]


class RolloutConfig(Protocol):
    @property
    def T_s(self) -> float:
        """Macro sample time in seconds; inputs are held constant over it"""

    @property
    def substeps(self) -> int:
        """Number of integration steps per macro sample time"""

    @property
    def scheme(self) -> IntegrationScheme:
        """Which explicit fixed-step scheme integrates each substep"""


class RolloutConfigFromValues:
    """Convenience class that allows you to create a RolloutConfig protocol
    satisfying object from values"""

    def __init__(self, T_s: float, substeps: int, scheme: IntegrationScheme):
        if T_s <= 0:
            raise ValueError(f"T_s must be positive, got {T_s}")
        if substeps < 1:
            raise ValueError(f"substeps must be at least 1, got {substeps}")
        if scheme not in ("euler", "rk4"):
            raise ValueError(f"unknown integration scheme {scheme!r}")
        self.T_s = T_s
        self.substeps = substeps
        self.scheme: IntegrationScheme = scheme


class Boundaries(Protocol):
    """The box the surrogate is trained on before inflation by kappa. All
    values in SI radians.
    """

    @property
    def q_max(self) -> float:
        """Largest joint angle magnitude, rad"""

    @property
    def qd_max(self) -> float:
        """Largest joint velocity magnitude, rad/s"""

    @property
    def p_max(self) -> float:
        """Largest bellows pressure, Pa; the smallest is 0"""

    @property
    def m_e_max(self) -> float:
        """Largest payload, kg"""

    @property
    def beta_max(self) -> float:
        """Largest base tilt, rad"""

    @property
    def kappa(self) -> float:
        """Inflation factor applied to every range (and to the time range
        [0, T_s]) so the surrogate is trained slightly beyond where it is used
        """


class BoundariesFromValues:
    """Convenience class that allows you to create a Boundaries protocol
    satisfying object from values"""

    def __init__(
        self,
        q_max: float,
        qd_max: float,
        p_max: float,
        m_e_max: float,
        beta_max: float,
        kappa: float,
    ):
        if kappa < 1:
            raise ValueError(f"kappa must be at least 1, got {kappa}")
        for name, value in (
            ("q_max", q_max),
            ("qd_max", qd_max),
            ("p_max", p_max),
            ("m_e_max", m_e_max),
            ("beta_max", beta_max),
        ):
            if not value > 0:
                raise ValueError(f"{name} must be positive, got {value}")
        self.q_max = q_max
        self.qd_max = qd_max
        self.p_max = p_max
        self.m_e_max = m_e_max
        self.beta_max = beta_max
        self.kappa = kappa


class TrainConfig(Protocol):
    """Settings of one physics-informed training run"""

    @property
    def n_e(self) -> int:
        """Number of epochs"""

    @property
    def n_s(self) -> int:
        """Collocation points are resampled at every epoch divisible by this"""

    @property
    def n_p(self) -> int:
        """Number of collocation points"""

    @property
    def n_0(self) -> int:
        """Number of initial-condition points (PINC only); copies of the
        first n_0 collocation points with t = 0
        """

    @property
    def n_b(self) -> int:
        """Batch size"""

    @property
    def n_a(self) -> int:
        """Number of ansatz terms; 0 trains a PINC instead of a DD-PINN"""

    @property
    def n_n(self) -> int:
        """Neurons per hidden layer"""

    @property
    def n_h(self) -> int:
        """Number of hidden layers"""

    @property
    def n_lambda(self) -> int:
        """Plateau patience in epochs; also the first epoch after which the
        learning rate may be reduced
        """

    @property
    def lr_0(self) -> float:
        """Initial learning rate"""

    @property
    def lr_min(self) -> float:
        """The learning rate is never reduced below this"""

    @property
    def T_s(self) -> float:
        """Prediction horizon of the surrogate in seconds"""

    @property
    def boundaries(self) -> Boundaries:
        """The sampled box"""

    @property
    def domain_mode(self) -> DomainMode:
        """`sampled` draws the domain of every collocation point from the
        inflated box; `nominal` trains on the nominal domain only
        """

    @property
    def x0_std(self) -> float:
        """Standard deviation of the scaled initial states (before clipping)"""

    @property
    def validation_fraction(self) -> float:
        """Share of the batches of an epoch used for validation"""

    @property
    def seed(self) -> int:
        """Seed for initialization, sampling and shuffling"""


class TrainConfigFromValues:
    """Convenience class that allows you to create a TrainConfig protocol
    satisfying object from values"""

    def __init__(
        self,
        n_e: int,
        n_s: int,
        n_p: int,
        n_0: int,
        n_b: int,
        n_a: int,
        n_n: int,
        n_h: int,
        n_lambda: int,
        lr_0: float,
        lr_min: float,
        T_s: float,
        boundaries: Boundaries,
        domain_mode: DomainMode,
        x0_std: float,
        validation_fraction: float,
        seed: int,
    ):
        if n_b > n_p:
            raise ValueError(f"batch size {n_b} exceeds collocation count {n_p}")
        if lr_min > lr_0:
            raise ValueError(f"lr_min {lr_min} exceeds lr_0 {lr_0}")
        if n_e < 1 or n_s < 1 or n_b < 1 or n_h < 0 or n_n < 1 or n_a < 0:
            raise ValueError("epoch, batch and layer counts must be positive")
        if not 0 <= n_0 <= n_p:
            raise ValueError(f"n_0 must lie in [0, n_p], got {n_0}")
        if not 0 < validation_fraction < 1:
            raise ValueError("validation_fraction must lie in (0, 1)")
        self.n_e = n_e
        self.n_s = n_s
        self.n_p = n_p
        self.n_0 = n_0
        self.n_b = n_b
        self.n_a = n_a
        self.n_n = n_n
        self.n_h = n_h
        self.n_lambda = n_lambda
        self.lr_0 = lr_0
        self.lr_min = lr_min
        self.T_s = T_s
        self.boundaries = boundaries
        self.domain_mode: DomainMode = domain_mode
        self.x0_std = x0_std
        self.validation_fraction = validation_fraction
        self.seed = seed


class GRUTrainConfig(Protocol):
    """Settings of one recurrent baseline training run"""

    @property
    def n_e(self) -> int:
        """Number of epochs"""

    @property
    def n_b(self) -> int:
        """Window length of truncated backpropagation through time, in steps"""

    @property
    def n_n(self) -> int:
        """Hidden width of every recurrent layer"""

    @property
    def n_h(self) -> int:
        """Number of stacked recurrent layers"""

    @property
    def dropout(self) -> float:
        """Dropout rate between stacked layers while training"""

    @property
    def n_lambda(self) -> int:
        """Plateau patience in epochs"""

    @property
    def lr_0(self) -> float:
        """Initial learning rate"""

    @property
    def lr_min(self) -> float:
        """The learning rate is never reduced below this"""

    @property
    def validation_fraction(self) -> float:
        """Trailing share of the sequence held out for validation"""

    @property
    def seed(self) -> int:
        """Seed for initialization and dropout masks"""


class GRUTrainConfigFromValues:
    """Convenience class that allows you to create a GRUTrainConfig protocol
    satisfying object from values"""

    def __init__(
        self,
        n_e: int,
        n_b: int,
        n_n: int,
        n_h: int,
        dropout: float,
        n_lambda: int,
        lr_0: float,
        lr_min: float,
        validation_fraction: float,
        seed: int,
    ):
        if not 0 <= dropout < 1:
            raise ValueError(f"dropout must lie in [0, 1), got {dropout}")
        if n_h < 1 or n_n < 1 or n_b < 1 or n_e < 1:
            raise ValueError("epoch, window and layer counts must be positive")
        if lr_min > lr_0:
            raise ValueError(f"lr_min {lr_min} exceeds lr_0 {lr_0}")
        self.n_e = n_e
        self.n_b = n_b
        self.n_n = n_n
        self.n_h = n_h
        self.dropout = dropout
        self.n_lambda = n_lambda
        self.lr_0 = lr_0
        self.lr_min = lr_min
        self.validation_fraction = validation_fraction
        self.seed = seed


class MPCConfig(Protocol):
    """Weights and box of the receding-horizon controller; all costs are
    evaluated in scaled units
    """

    @property
    def m(self) -> int:
        """Prediction steps of T_s each"""

    @property
    def Q_sq(self) -> float:
        """Stage weight on the position error"""

    @property
    def Q_sqd(self) -> float:
        """Stage weight on the velocity error"""

    @property
    def Q_tq(self) -> float:
        """Terminal weight on the position error"""

    @property
    def Q_tqd(self) -> float:
        """Terminal weight on the velocity error"""

    @property
    def R_s(self) -> float:
        """Weight on the scaled input at every prediction step"""

    @property
    def u_min(self) -> np.ndarray:
        """Lower bound of the scaled input, one entry per bellows"""

    @property
    def u_max(self) -> np.ndarray:
        """Upper bound of the scaled input, one entry per bellows"""

    @property
    def max_iterations(self) -> int:
        """Iteration limit of the box-constrained quasi-Newton solver"""

    @property
    def tolerance(self) -> float:
        """Projected-gradient tolerance of the solver"""


class MPCConfigFromValues:
    """Convenience class that allows you to create a MPCConfig protocol
    satisfying object from values"""

    def __init__(
        self,
        m: int,
        Q_sq: float,
        Q_sqd: float,
        Q_tq: float,
        Q_tqd: float,
        R_s: float,
        u_min: np.ndarray,
        u_max: np.ndarray,
        max_iterations: int,
        tolerance: float,
    ):
        if m < 1:
            raise ValueError(f"m must be at least 1, got {m}")
        if min(Q_sq, Q_sqd, Q_tq, Q_tqd, R_s) < 0:
            raise ValueError("MPC weights must be nonnegative")
        u_min = np.asarray(u_min, dtype=np.float64)
        u_max = np.asarray(u_max, dtype=np.float64)
        if u_min.shape != u_max.shape or np.any(u_min >= u_max):
            raise ValueError("u_min must be below u_max elementwise")
        self.m = m
        self.Q_sq = Q_sq
        self.Q_sqd = Q_sqd
        self.Q_tq = Q_tq
        self.Q_tqd = Q_tqd
        self.R_s = R_s
        self.u_min = u_min
        self.u_max = u_max
        self.max_iterations = max_iterations
        self.tolerance = tolerance


class PIConfig(Protocol):
    """Decentralized PI joint controller with antagonistic pressure mapping.
    Gains in SI: Pa/rad and Pa/(rad·s).
    """

    @property
    def Q_P(self) -> np.ndarray:
        """Proportional gain per joint, Pa/rad"""

    @property
    def Q_I(self) -> np.ndarray:
        """Integral gain per joint, Pa/(rad·s)"""

    @property
    def integrator_clamp(self) -> np.ndarray:
        """Largest magnitude of the integrated error per joint, rad·s"""

    @property
    def p_max(self) -> float:
        """Output saturation upper bound, Pa; the lower bound is 0"""

    @property
    def period(self) -> float:
        """Controller period in seconds"""


class PIConfigFromValues:
    """Convenience class that allows you to create a PIConfig protocol
    satisfying object from values"""

    def __init__(
        self,
        Q_P: np.ndarray,
        Q_I: np.ndarray,
        integrator_clamp: np.ndarray,
        p_max: float,
        period: float,
    ):
        Q_P = np.asarray(Q_P, dtype=np.float64)
        Q_I = np.asarray(Q_I, dtype=np.float64)
        integrator_clamp = np.asarray(integrator_clamp, dtype=np.float64)
        if np.any(Q_P < 0) or np.any(Q_I < 0):
            raise ValueError("PI gains must be nonnegative")
        if Q_P.shape != Q_I.shape or Q_P.shape != integrator_clamp.shape:
            raise ValueError("PI gain vectors must have one entry per joint")
        self.Q_P = Q_P
        self.Q_I = Q_I
        self.integrator_clamp = integrator_clamp
        self.p_max = p_max
        self.period = period


class ExcitationProtocol(Protocol):
    """Random hold-and-ramp pressure excitation"""

    @property
    def hold(self) -> float:
        """Spacing of consecutive random pressure combinations, s"""

    @property
    def transition(self) -> float:
        """Duration of the linear ramp into each new combination, s"""

    @property
    def p_max(self) -> float:
        """Largest commanded pressure, Pa"""

    @property
    def log_rate(self) -> int:
        """Rate the plant is logged at, Hz"""

    @property
    def output_rate(self) -> int:
        """Rate of the returned dataset, Hz; divides log_rate"""

    @property
    def duration(self) -> float:
        """Length of the excitation, s"""


class ExcitationProtocolFromValues:
    """Convenience class that allows you to create a ExcitationProtocol
    protocol satisfying object from values"""

    def __init__(
        self,
        hold: float,
        transition: float,
        p_max: float,
        log_rate: int,
        output_rate: int,
        duration: float,
    ):
        if transition > hold:
            raise ValueError("transition must not exceed the hold spacing")
        if log_rate % output_rate != 0:
            raise ValueError("output_rate must divide log_rate")
        if duration <= 0:
            raise ValueError("duration must be positive")
        self.hold = hold
        self.transition = transition
        self.p_max = p_max
        self.log_rate = log_rate
        self.output_rate = output_rate
        self.duration = duration


class SensorModel(Protocol):
    """Imperfections applied to logged plant signals"""

    @property
    def encoder_quantum(self) -> float:
        """Joint angle resolution, rad"""

    @property
    def pressure_quantum(self) -> float:
        """Pressure resolution, Pa"""

    @property
    def position_filter_hz(self) -> Optional[float]:
        """Cutoff of the first-order online filter on the logged joint
        angles, or None for no filtering
        """

    @property
    def noise_std(self) -> float:
        """Standard deviation of zero-mean Gaussian angle noise, rad"""

    @property
    def pressure_lag(self) -> Optional[Tuple[float, float]]:
        """Range the time constant of the first-order pressure lag is drawn
        from, s; None for ideal pressure control
        """


class SensorModelFromValues:
    """Convenience class that allows you to create a SensorModel protocol
    satisfying object from values"""

    def __init__(
        self,
        encoder_quantum: float,
        pressure_quantum: float,
        position_filter_hz: Optional[float],
        noise_std: float,
        pressure_lag: Optional[Tuple[float, float]],
    ):
        if encoder_quantum <= 0 or pressure_quantum <= 0:
            raise ValueError("sensor quanta must be positive")
        if pressure_lag is not None and not 0 < pressure_lag[0] <= pressure_lag[1]:
            raise ValueError("pressure lag range must be positive and ordered")
        self.encoder_quantum = encoder_quantum
        self.pressure_quantum = pressure_quantum
        self.position_filter_hz = position_filter_hz
        self.noise_std = noise_std
        self.pressure_lag = pressure_lag


class AshaConfig(Protocol):
    @property
    def n_trials(self) -> int:
        """Number of sampled configurations"""

    @property
    def grace_period(self) -> int:
        """Epochs every trial trains before its first comparison"""

    @property
    def reduction_factor(self) -> int:
        """Only the best 1/reduction_factor of a rung is promoted"""

    @property
    def max_epochs(self) -> int:
        """Budget of the top rung"""

    @property
    def max_concurrency(self) -> int:
        """Trials trained at the same time"""

    @property
    def seed(self) -> int:
        """Seed for sampling the configurations"""


class AshaConfigFromValues:
    """Convenience class that allows you to create a AshaConfig protocol
    satisfying object from values"""

    def __init__(
        self,
        n_trials: int,
        grace_period: int,
        reduction_factor: int,
        max_epochs: int,
        max_concurrency: int,
        seed: int,
    ):
        if reduction_factor < 2:
            raise ValueError("reduction_factor must be at least 2")
        if grace_period < 1 or max_epochs < grace_period:
            raise ValueError("need 1 <= grace_period <= max_epochs")
        if n_trials < 1 or max_concurrency < 1:
            raise ValueError("n_trials and max_concurrency must be positive")
        self.n_trials = n_trials
        self.grace_period = grace_period
        self.reduction_factor = reduction_factor
        self.max_epochs = max_epochs
        self.max_concurrency = max_concurrency
        self.seed = seed


class ExperimentConfig(Protocol):
    """Everything an end-to-end pipeline run needs"""

    @property
    def robot_model_path(self) -> str:
        """JSON robot model the plant is simulated with"""

    @property
    def train_config_path(self) -> str:
        """JSON settings document for every stage"""

    @property
    def hpo_space_path(self) -> Optional[str]:
        """JSON search space; None skips hyperparameter optimization"""

    @property
    def domain_grid(self) -> List[Domain]:
        """Domains of the generalization evaluation"""

    @property
    def output_dir(self) -> str:
        """Directory all artifacts and the manifest are written to"""

    @property
    def seed(self) -> int:
        """Root seed; every stage derives its own seed from it"""


class ExperimentConfigFromValues:
    """Convenience class that allows you to create a ExperimentConfig protocol
    satisfying object from values"""

    def __init__(
        self,
        robot_model_path: str,
        train_config_path: str,
        hpo_space_path: Optional[str],
        domain_grid: List[Domain],
        output_dir: str,
        seed: int,
    ):
        self.robot_model_path = robot_model_path
        self.train_config_path = train_config_path
        self.hpo_space_path = hpo_space_path
        self.domain_grid = domain_grid
        self.output_dir = output_dir
        self.seed = seed


if TYPE_CHECKING:
    _: Type[RolloutConfig] = RolloutConfigFromValues
    __: Type[Boundaries] = BoundariesFromValues
    ___: Type[TrainConfig] = TrainConfigFromValues
    ____: Type[GRUTrainConfig] = GRUTrainConfigFromValues
    _____: Type[MPCConfig] = MPCConfigFromValues
    ______: Type[PIConfig] = PIConfigFromValues
    _______: Type[ExcitationProtocol] = ExcitationProtocolFromValues
    ________: Type[SensorModel] = SensorModelFromValues
    _________: Type[AshaConfig] = AshaConfigFromValues
    __________: Type[ExperimentConfig] = ExperimentConfigFromValues
