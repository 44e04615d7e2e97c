"""End-to-end experiment: record the training excitation on the simulated
bench, identify the robot, train the surrogates and the recurrent baseline,
then evaluate generalization, speed and closed-loop tracking. Every stage
writes into one output directory and the manifest is rewritten after each
stage, so a failed run keeps what the earlier stages produced.
"""

import hashlib
import importlib.metadata
import logging
import os
import platform
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np

from softpinn.config.config import ExperimentConfig, SensorModel
from softpinn.config.settings import (
    SettingsFile,
    asha_config_from_settings,
    boundaries_from_file,
    gru_config_from_settings,
    load_settings,
    parse_domain,
    train_config_from_settings,
    training_excitation,
)
from softpinn.control.closed_loop import (
    ClosedLoopMetrics,
    Controller,
    save_campaign,
    tracking_campaign,
)
from softpinn.control.mpc import MPCController, default_mpc_config
from softpinn.control.pi import PIController, published_pi_config
from softpinn.control.reference import generate_reference
from softpinn.dynamics.model import FirstPrinciplesDynamics
from softpinn.dynamics.robot_file import load_robot_model, save_robot_model
from softpinn.dynamics.robot_model import RobotModel
from softpinn.dynamics.types import NOMINAL_DOMAIN, Domain
from softpinn.errors import PipelineStageError
from softpinn.identification.dataset import Dataset, save_dataset
from softpinn.identification.result_file import save_ident_result
from softpinn.identification.three_step import identify_all
from softpinn.integrators import oracle_config
from softpinn.networks.gru import GRUWeights
from softpinn.networks.surrogate import SurrogateModel
from softpinn.networks.weights_file import save_gru, save_surrogate
from softpinn.testbench.generalization import (
    IntegratorPredictor,
    Predictor,
    RecurrentPredictor,
    SurrogatePredictor,
    evaluate_generalization,
    save_generalization,
)
from softpinn.testbench.plant import bench_sensors, quantizing_sensors, record_excitation
from softpinn.testbench.speed import (
    bench_speed,
    benchmark_trajectory,
    save_timing,
    standard_methods,
)
from softpinn.training.asha import (
    AshaReport,
    ParamValue,
    RecurrentTrialFactory,
    SurrogateTrialFactory,
    TrialFactory,
    asha_optimize,
    load_search_space,
    save_asha_report,
)
from softpinn.training.gru_trainer import save_gru_history, train_gru
from softpinn.training.pinn import save_history, train_pinn
from softpinn.util.schema import DocumentSection, VersionedDocument, dump_document

StageName = Literal["setup", "gen-data", "identify", "hpo", "train", "eval-gen", "bench", "mpc-sim"]

STAGES: Tuple[StageName, ...] = (
    "setup",
    "gen-data",
    "identify",
    "hpo",
    "train",
    "eval-gen",
    "bench",
    "mpc-sim",
)

STAGE_SEED_OFFSETS: Dict[StageName, int] = {
    "gen-data": 1,
    "hpo": 2,
    "train": 3,
    "eval-gen": 4,
    "bench": 5,
    "mpc-sim": 6,
}
"""Every seeded stage uses the root seed plus its offset"""

MANIFEST_NAME = "manifest.json"

VERSIONED_PACKAGES = ("softpinn", "numpy", "scipy", "numba", "pydantic")


def stage_seed(seed: int, stage: StageName) -> int:
    return seed + STAGE_SEED_OFFSETS[stage]


def sensors_from_settings(settings: SettingsFile) -> Optional[SensorModel]:
    kind = settings.data.sensors
    if kind == "none":
        return None
    if kind == "quantizing":
        return quantizing_sensors()
    return bench_sensors()


def file_sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        while True:
            chunk = f.read(1 << 16)
            if not chunk:
                break
            digest.update(chunk)
    return digest.hexdigest()


def package_versions() -> Dict[str, str]:
    versions = {"python": platform.python_version()}
    for name in VERSIONED_PACKAGES:
        try:
            versions[name] = importlib.metadata.version(name)
        except importlib.metadata.PackageNotFoundError:
            versions[name] = "unknown"
    return versions


class ArtifactRecord(DocumentSection):
    path: str
    """Relative to the output directory"""
    sha256: str
    deterministic: bool
    """False for artifacts that depend on wall-clock time or thread scheduling"""


class StageRecord(DocumentSection):
    name: StageName
    seconds: float
    seed: Optional[int]
    artifacts: List[ArtifactRecord]


class ManifestFile(VersionedDocument):
    seed: int
    robot_model_path: str
    train_config_path: str
    hpo_space_path: Optional[str]
    domain_grid: List[str]
    versions: Dict[str, str]
    stages: List[StageRecord]
    failed_stage: Optional[StageName] = None
    completed: bool = False


@dataclass
class PipelineState:
    """What the stages hand to each other"""

    robot: Optional[RobotModel] = None
    settings: Optional[SettingsFile] = None
    dataset: Optional[Dataset] = None
    identified: Optional[RobotModel] = None
    surrogate_overrides: Dict[str, ParamValue] = field(default_factory=dict)
    recurrent_overrides: Dict[str, ParamValue] = field(default_factory=dict)
    ddpinn: Optional[SurrogateModel] = None
    pinc: Optional[SurrogateModel] = None
    gru: Optional[GRUWeights] = None


Artifact = Tuple[str, bool]
"""Relative path and whether its content is reproducible from the seed"""


def generalization_predictors(
    identified: FirstPrinciplesDynamics,
    /,
    *,
    ddpinn: Optional[SurrogateModel] = None,
    pinc: Optional[SurrogateModel] = None,
    gru: Optional[GRUWeights] = None,
    T_s: float = 0.02,
) -> List[Predictor]:
    """The trained models plus the identified first-principles model
    integrated with RK4 at 100 µs
    """
    predictors: List[Predictor] = []
    if ddpinn is not None:
        predictors.append(SurrogatePredictor("ddpinn", ddpinn))
    if pinc is not None:
        predictors.append(SurrogatePredictor("pinc", pinc))
    if gru is not None:
        predictors.append(RecurrentPredictor("gru", gru))
    predictors.append(
        IntegratorPredictor("fp", identified, oracle_config(T_s, step_size=100e-6))
    )
    return predictors


def control_campaign(
    fp: FirstPrinciplesDynamics,
    model: SurrogateModel,
    settings: SettingsFile,
    domains: Sequence[Domain],
    rng: np.random.Generator,
    /,
    *,
    duration: Optional[float] = None,
) -> List[ClosedLoopMetrics]:
    """PI and MPC on the same random reference in every domain; the MPC
    predicts with `model` and is told the domain
    """
    control = settings.control
    p_max = settings.data.p_max
    duration = control.duration if duration is None else duration
    reference = generate_reference(fp.n, duration, rng, T_s=model.T_s)

    def controllers(delta: Domain) -> Sequence[Controller]:
        mpc_config = default_mpc_config(
            model,
            p_max,
            m=control.m,
            Q_sq=control.Q_sq,
            Q_sqd=control.Q_sqd,
            Q_tq=control.Q_tq,
            Q_tqd=control.Q_tqd,
            R_s=control.R_s,
            max_iterations=control.max_iterations,
            tolerance=control.tolerance,
        )
        return [
            PIController(published_pi_config(fp.n, p_max)),
            MPCController(model, mpc_config, delta, timing=control.timing),
        ]

    return tracking_campaign(fp, controllers, reference, domains, duration=duration)


class Pipeline:
    """One run of every stage against one output directory"""

    def __init__(self, config: ExperimentConfig, /, *, settings: Optional[SettingsFile] = None) -> None:
        self.config = config
        self.out = config.output_dir
        self.state = PipelineState(settings=settings)
        self.manifest = ManifestFile(
            seed=config.seed,
            robot_model_path=config.robot_model_path,
            train_config_path=config.train_config_path,
            hpo_space_path=config.hpo_space_path,
            domain_grid=[d.describe() for d in config.domain_grid],
            versions=package_versions(),
            stages=[],
        )

    def path(self, name: str) -> str:
        return os.path.join(self.out, name)

    def write_manifest(self) -> None:
        dump_document(self.manifest, self.path(MANIFEST_NAME))

    def run(self) -> str:
        os.makedirs(self.out, exist_ok=True)
        steps: List[Tuple[StageName, Callable[[], List[Artifact]]]] = [
            ("setup", self.setup),
            ("gen-data", self.gen_data),
            ("identify", self.identify),
            ("hpo", self.hpo),
            ("train", self.train),
            ("eval-gen", self.eval_gen),
            ("bench", self.bench),
            ("mpc-sim", self.mpc_sim),
        ]
        for name, step in steps:
            if name == "hpo" and self.config.hpo_space_path is None:
                logging.info("no search space given, skipping hpo")
                continue
            self.run_stage(name, step)
        self.manifest.completed = True
        self.write_manifest()
        logging.info(f"pipeline finished, artifacts in {self.out}")
        return self.out

    def run_stage(self, name: StageName, step: Callable[[], List[Artifact]]) -> None:
        logging.info(f"stage {name} starting")
        started = time.perf_counter()
        try:
            artifacts = step()
        except Exception as e:
            self.manifest.failed_stage = name
            self.write_manifest()
            if isinstance(e, PipelineStageError):
                raise
            logging.error(f"stage {name} failed", exc_info=True)
            raise PipelineStageError(
                f"stage {name} failed: {e}", stage=name, path=getattr(e, "filename", None)
            ) from e
        seconds = time.perf_counter() - started
        self.manifest.stages.append(
            StageRecord(
                name=name,
                seconds=seconds,
                seed=stage_seed(self.config.seed, name) if name in STAGE_SEED_OFFSETS else None,
                artifacts=[
                    ArtifactRecord(
                        path=rel, sha256=file_sha256(self.path(rel)), deterministic=deterministic
                    )
                    for rel, deterministic in artifacts
                ],
            )
        )
        self.write_manifest()
        logging.info(f"stage {name} finished in {seconds:.1f} s")

    def rng(self, stage: StageName) -> np.random.Generator:
        return np.random.default_rng(stage_seed(self.config.seed, stage))

    def require_settings(self) -> SettingsFile:
        assert self.state.settings is not None, "setup has not run"
        return self.state.settings

    def setup(self) -> List[Artifact]:
        for path in (self.config.robot_model_path, self.config.train_config_path):
            if not os.path.exists(path):
                raise PipelineStageError(f"{path} does not exist", stage="setup", path=path)
        if self.config.hpo_space_path is not None and not os.path.exists(self.config.hpo_space_path):
            raise PipelineStageError(
                f"{self.config.hpo_space_path} does not exist",
                stage="setup",
                path=self.config.hpo_space_path,
            )
        self.state.robot = load_robot_model(self.config.robot_model_path)
        if self.state.settings is None:
            self.state.settings = load_settings(self.config.train_config_path)
        if self.config.hpo_space_path is not None:
            load_search_space(self.config.hpo_space_path)
        return []

    def gen_data(self) -> List[Artifact]:
        settings = self.require_settings()
        assert self.state.robot is not None
        self.state.dataset = record_excitation(
            FirstPrinciplesDynamics(self.state.robot),
            training_excitation(settings),
            NOMINAL_DOMAIN,
            self.rng("gen-data"),
            n=self.state.robot.n,
            sensors=sensors_from_settings(settings),
        )
        save_dataset(self.path("train_data.csv"), self.state.dataset)
        return [("train_data.csv", True)]

    def identify(self) -> List[Artifact]:
        settings = self.require_settings()
        assert self.state.dataset is not None and self.state.robot is not None
        result = identify_all(
            self.state.dataset,
            self.state.robot,
            refine=settings.data.refine_identification,
            recorded_velocity=settings.data.sensors == "none",
        )
        self.state.identified = result.apply(self.state.robot)
        save_ident_result(result, self.path("ident.json"))
        save_robot_model(self.state.identified, self.path("robot_identified.json"))
        return [("ident.json", True), ("robot_identified.json", True)]

    def hpo(self) -> List[Artifact]:
        settings = self.require_settings()
        assert self.config.hpo_space_path is not None
        assert self.state.identified is not None and self.state.dataset is not None
        space, target = load_search_space(self.config.hpo_space_path)
        asha = asha_config_from_settings(settings, stage_seed(self.config.seed, "hpo"))
        factory: TrialFactory
        if target == "surrogate":
            factory = SurrogateTrialFactory(
                train_config_from_settings(settings, asha.seed),
                FirstPrinciplesDynamics(self.state.identified),
                datasets=[self.state.dataset] if settings.surrogate.use_data else None,
            )
        else:
            factory = RecurrentTrialFactory(
                gru_config_from_settings(settings, asha.seed),
                [self.state.dataset],
                T_s=settings.surrogate.T_s,
                boundaries=boundaries_from_file(settings.boundaries),
            )
        report: AshaReport = asha_optimize(space, asha, factory)
        if target == "surrogate":
            self.state.surrogate_overrides = dict(report.best_params)
        else:
            self.state.recurrent_overrides = dict(report.best_params)
        save_asha_report(report, self.path("hpo_report.json"))
        return [("hpo_report.json", asha.max_concurrency == 1)]

    def train(self) -> List[Artifact]:
        settings = self.require_settings()
        assert self.state.identified is not None and self.state.dataset is not None
        seed = stage_seed(self.config.seed, "train")
        fp = FirstPrinciplesDynamics(self.state.identified)
        datasets = [self.state.dataset] if settings.surrogate.use_data else None
        artifacts: List[Artifact] = []

        overrides = dict(self.state.surrogate_overrides)
        if overrides.get("n_a", settings.surrogate.n_a) == 0:
            overrides["n_a"] = settings.surrogate.n_a or 1
            logging.warning(f"tuned n_a is 0, training the DD-PINN with n_a={overrides['n_a']}")
        ddpinn = train_pinn(train_config_from_settings(settings, seed, overrides), fp, datasets=datasets)
        self.state.ddpinn = ddpinn.model
        save_surrogate(ddpinn.model, self.path("ddpinn.json"))
        save_history(self.path("ddpinn_history.csv"), ddpinn.history)
        artifacts += [("ddpinn.json", True), ("ddpinn_history.csv", True)]
        print(f"  ddpinn: best validation {ddpinn.best_validation:.4e} at epoch {ddpinn.best_epoch}")

        if settings.surrogate.train_pinc:
            pinc_overrides = dict(self.state.surrogate_overrides)
            pinc_overrides["n_a"] = 0
            pinc = train_pinn(
                train_config_from_settings(settings, seed, pinc_overrides), fp, datasets=datasets
            )
            self.state.pinc = pinc.model
            save_surrogate(pinc.model, self.path("pinc.json"))
            save_history(self.path("pinc_history.csv"), pinc.history)
            artifacts += [("pinc.json", True), ("pinc_history.csv", True)]
            print(f"  pinc: best validation {pinc.best_validation:.4e} at epoch {pinc.best_epoch}")

        gru = train_gru(
            gru_config_from_settings(settings, seed, dict(self.state.recurrent_overrides)),
            [self.state.dataset],
            T_s=settings.surrogate.T_s,
            boundaries=boundaries_from_file(settings.boundaries),
        )
        self.state.gru = gru.weights
        save_gru(gru.weights, self.path("gru.json"))
        save_gru_history(self.path("gru_history.csv"), gru.history)
        artifacts += [("gru.json", True), ("gru_history.csv", True)]
        print(f"  gru: best validation {gru.best_validation:.4e} at epoch {gru.best_epoch}")
        return artifacts

    def eval_gen(self) -> List[Artifact]:
        settings = self.require_settings()
        assert self.state.robot is not None and self.state.identified is not None
        predictors = generalization_predictors(
            FirstPrinciplesDynamics(self.state.identified),
            ddpinn=self.state.ddpinn,
            pinc=self.state.pinc,
            gru=self.state.gru,
            T_s=settings.surrogate.T_s,
        )
        cells = evaluate_generalization(
            predictors,
            FirstPrinciplesDynamics(self.state.robot),
            self.config.domain_grid,
            duration=settings.evaluation.duration,
            rng=self.rng("eval-gen"),
            T_s=settings.surrogate.T_s,
        )
        save_generalization(self.path("generalization.csv"), cells)
        return [("generalization.csv", True)]

    def bench(self) -> List[Artifact]:
        settings = self.require_settings()
        assert self.state.robot is not None
        fp = FirstPrinciplesDynamics(self.state.robot)
        T_s = settings.surrogate.T_s
        trajectory = benchmark_trajectory(
            fp, self.rng("bench"), duration=settings.bench.duration, T_s=T_s
        )
        methods = standard_methods(
            fp, ddpinn=self.state.ddpinn, pinc=self.state.pinc, T_s=T_s
        )
        rows = bench_speed(methods, trajectory, warmup=settings.bench.warmup)
        save_timing(self.path("timing.csv"), rows)
        for row in rows:
            print(f"  {row.method}: {row.mean_ms:.3f} ms per horizon, speedup {row.speedup:.1f}")
        return [("timing.csv", False)]

    def mpc_sim(self) -> List[Artifact]:
        settings = self.require_settings()
        assert self.state.robot is not None and self.state.ddpinn is not None
        metrics = control_campaign(
            FirstPrinciplesDynamics(self.state.robot),
            self.state.ddpinn,
            settings,
            [parse_domain(text) for text in settings.control.domains],
            self.rng("mpc-sim"),
        )
        save_campaign(self.path("tracking.csv"), metrics)
        return [("tracking.csv", False)]


def run_pipeline(config: ExperimentConfig, settings: Optional[SettingsFile] = None) -> str:
    """Runs every stage in order and returns the output directory

    Raises:
        PipelineStageError: a stage failed; its name is on the error and the
            artifacts of the earlier stages are left in place
    """
    return Pipeline(config, settings=settings).run()
