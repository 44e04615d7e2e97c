"""Asynchronous successive halving over a small hyperparameter space.

Trials train to the grace period first. Rung k has the budget
grace * reduction^k epochs (up to max_epochs); whenever a worker frees up,
the best 1/reduction of the trials recorded at a rung that have not left it
yet is promoted one rung up, checking the highest rungs first, and only
when nothing can be promoted is a new trial started.
"""

import asyncio
import logging
import math
from dataclasses import dataclass, field
from typing import (
    TYPE_CHECKING,
    Any,
    Dict,
    List,
    Literal,
    NamedTuple,
    Optional,
    Protocol,
    Sequence,
    Set,
    Tuple,
    Type,
    Union,
)

import numpy as np

from softpinn.config.config import (
    AshaConfig,
    Boundaries,
    GRUTrainConfig,
    GRUTrainConfigFromValues,
    TrainConfig,
    TrainConfigFromValues,
)
from softpinn.dynamics.model import BatchedDynamics
from softpinn.errors import EmptySearchSpaceError
from softpinn.identification.dataset import Dataset
from softpinn.training.gru_trainer import GRUTrainer
from softpinn.training.pinn import PinnTrainer
from softpinn.util.schema import (
    DocumentSection,
    VersionedDocument,
    dump_document,
    load_document,
)

ParamValue = Union[int, float, str]


@dataclass(frozen=True)
class Choice:
    name: str
    values: Tuple[ParamValue, ...]

    def sample(self, rng: np.random.Generator) -> ParamValue:
        return self.values[int(rng.integers(0, len(self.values)))]


@dataclass(frozen=True)
class Range:
    name: str
    low: float
    high: float
    log: bool = False
    """Sample uniformly in the logarithm"""
    integer: bool = False
    """Round to the nearest integer; both ends inclusive"""

    def sample(self, rng: np.random.Generator) -> ParamValue:
        if self.integer:
            return int(rng.integers(int(round(self.low)), int(round(self.high)) + 1))
        if self.log:
            return float(math.exp(rng.uniform(math.log(self.low), math.log(self.high))))
        return float(rng.uniform(self.low, self.high))


Dimension = Union[Choice, Range]


class SearchSpace:
    def __init__(self, dimensions: Sequence[Dimension]) -> None:
        if not dimensions:
            raise EmptySearchSpaceError("the search space has no dimensions")
        names = [d.name for d in dimensions]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate dimension names in {names}")
        for d in dimensions:
            if isinstance(d, Choice) and not d.values:
                raise EmptySearchSpaceError(f"{d.name} has no values to choose from")
            if isinstance(d, Range):
                if d.low > d.high:
                    raise EmptySearchSpaceError(f"{d.name} has low {d.low} above high {d.high}")
                if d.log and d.low <= 0:
                    raise ValueError(f"{d.name} is logarithmic but not positive")
        self.dimensions = list(dimensions)

    @property
    def names(self) -> List[str]:
        return [d.name for d in self.dimensions]

    def sample(self, rng: np.random.Generator) -> Dict[str, ParamValue]:
        return {d.name: d.sample(rng) for d in self.dimensions}


class DimensionFile(DocumentSection):
    name: str
    kind: Literal["choice", "range"]
    values: Optional[List[ParamValue]] = None
    low: Optional[float] = None
    high: Optional[float] = None
    log: bool = False
    integer: bool = False


class SearchSpaceFile(VersionedDocument):
    target: Literal["surrogate", "recurrent"]
    """Which trainer the parameters are meant for"""
    dimensions: List[DimensionFile]


def search_space_from_file(doc: SearchSpaceFile) -> SearchSpace:
    dimensions: List[Dimension] = []
    for d in doc.dimensions:
        if d.kind == "choice":
            dimensions.append(Choice(name=d.name, values=tuple(d.values or ())))
        else:
            if d.low is None or d.high is None:
                raise ValueError(f"range {d.name} needs low and high")
            dimensions.append(Range(name=d.name, low=d.low, high=d.high, log=d.log, integer=d.integer))
    return SearchSpace(dimensions)


def load_search_space(path: str) -> Tuple[SearchSpace, str]:
    """The space and its target trainer"""
    doc = load_document(path, SearchSpaceFile)
    return search_space_from_file(doc), doc.target


class Job(NamedTuple):
    trial_id: int
    rung: int
    epochs: int
    """Total epochs the trial has trained once the job is done"""


@dataclass
class AshaScheduler:
    """Rung bookkeeping of successive halving; not thread-safe"""

    n_trials: int
    grace_period: int
    reduction_factor: int
    max_epochs: int
    budgets: List[int] = field(init=False)
    rungs: List[Dict[int, float]] = field(init=False)
    """Per rung: the loss each trial reported there"""
    promoted: List[Set[int]] = field(init=False)
    """Per rung: the trials that already left it"""
    rung_sizes: List[List[int]] = field(init=False)
    """Per rung: how many trials had reported there at each promotion out of it"""
    failed: Set[int] = field(init=False)
    started: int = field(init=False)

    def __post_init__(self) -> None:
        self.budgets = []
        budget = self.grace_period
        while budget <= self.max_epochs:
            self.budgets.append(budget)
            budget *= self.reduction_factor
        self.rungs = [{} for _ in self.budgets]
        self.promoted = [set() for _ in self.budgets]
        self.rung_sizes = [[] for _ in self.budgets]
        self.failed = set()
        self.started = 0

    @classmethod
    def from_config(cls, config: AshaConfig) -> "AshaScheduler":
        return cls(
            n_trials=config.n_trials,
            grace_period=config.grace_period,
            reduction_factor=config.reduction_factor,
            max_epochs=config.max_epochs,
        )

    def ranked(self, rung: int) -> List[Tuple[int, float]]:
        """Trials recorded at the rung, best first; ties go to the lower id"""
        return sorted(self.rungs[rung].items(), key=lambda item: (item[1], item[0]))

    def _promotable(self, rung: int) -> Optional[int]:
        ranked = self.ranked(rung)
        for trial_id, _ in ranked[: len(ranked) // self.reduction_factor]:
            if trial_id not in self.promoted[rung] and trial_id not in self.failed:
                return trial_id
        return None

    def next_job(self) -> Optional[Job]:
        for rung in range(len(self.budgets) - 2, -1, -1):
            trial_id = self._promotable(rung)
            if trial_id is not None:
                self.promoted[rung].add(trial_id)
                self.rung_sizes[rung].append(len(self.rungs[rung]))
                logging.info(
                    f"promoting trial {trial_id} from rung {rung} ({len(self.rungs[rung])} reported) to {self.budgets[rung + 1]} epochs"
                )
                return Job(trial_id=trial_id, rung=rung + 1, epochs=self.budgets[rung + 1])
        if self.started < self.n_trials:
            trial_id = self.started
            self.started += 1
            return Job(trial_id=trial_id, rung=0, epochs=self.budgets[0])
        return None

    def report(self, trial_id: int, rung: int, loss: float) -> None:
        self.rungs[rung][trial_id] = loss if math.isfinite(loss) else math.inf

    def fail(self, trial_id: int) -> None:
        self.failed.add(trial_id)

    def highest_rung(self, trial_id: int) -> int:
        """-1 when the trial never reported"""
        reached = [k for k, rung in enumerate(self.rungs) if trial_id in rung]
        return max(reached) if reached else -1

    def best(self) -> Optional[Tuple[int, int, float]]:
        """(trial, rung, loss) of the best trial on the highest rung reached
        by any trial
        """
        for rung in range(len(self.budgets) - 1, -1, -1):
            ranked = [item for item in self.ranked(rung) if item[0] not in self.failed]
            if ranked:
                return ranked[0][0], rung, ranked[0][1]
        return None


class Trial(Protocol):
    def train_until(self, epochs: int) -> float:
        """Continues training until `epochs` epochs are done in total and
        returns the validation loss
        """


class TrialFactory(Protocol):
    def __call__(self, trial_id: int, params: Dict[str, ParamValue]) -> Trial: ...


class TrialRecord(DocumentSection):
    trial_id: int
    params: Dict[str, ParamValue]
    status: Literal["completed", "stopped", "failed"]
    """completed trials reached the top rung; stopped trials were not promoted"""
    losses: List[float]
    """Validation loss at every rung the trial reported on"""


class AshaReport(VersionedDocument):
    budgets: List[int]
    best_trial: int
    best_params: Dict[str, ParamValue]
    best_loss: float
    rung_sizes: List[List[int]]
    trials: List[TrialRecord]


async def run_asha(space: SearchSpace, config: AshaConfig, factory: TrialFactory) -> AshaReport:
    """Trains trials in worker threads, at most max_concurrency at a time.
    A trial that raises is logged and marked failed; the search goes on.
    """
    rng = np.random.default_rng(config.seed)
    scheduler = AshaScheduler.from_config(config)
    params: Dict[int, Dict[str, ParamValue]] = {}
    trials: Dict[int, Trial] = {}
    lock = asyncio.Lock()
    running: Dict["asyncio.Task[float]", Job] = {}

    def train(job: Job) -> float:
        trial = trials.get(job.trial_id)
        if trial is None:
            trial = factory(job.trial_id, params[job.trial_id])
            trials[job.trial_id] = trial
        return float(trial.train_until(job.epochs))

    while True:
        async with lock:
            while len(running) < config.max_concurrency:
                job = scheduler.next_job()
                if job is None:
                    break
                if job.trial_id not in params:
                    params[job.trial_id] = space.sample(rng)
                    logging.info(f"starting trial {job.trial_id} with {params[job.trial_id]}")
                running[asyncio.create_task(asyncio.to_thread(train, job))] = job
        if not running:
            break
        done, _ = await asyncio.wait(running.keys(), return_when=asyncio.FIRST_COMPLETED)
        async with lock:
            for task in done:
                job = running.pop(task)
                exc = task.exception()
                if exc is not None:
                    logging.error(f"trial {job.trial_id} failed at rung {job.rung}", exc_info=exc)
                    scheduler.fail(job.trial_id)
                    continue
                loss = task.result()
                logging.info(f"trial {job.trial_id} reached {job.epochs} epochs with loss {loss:.4e}")
                scheduler.report(job.trial_id, job.rung, loss)

    best = scheduler.best()
    if best is None:
        raise RuntimeError("every trial failed")
    top = len(scheduler.budgets) - 1
    records = []
    for trial_id in sorted(params):
        reached = scheduler.highest_rung(trial_id)
        status: Literal["completed", "stopped", "failed"]
        if trial_id in scheduler.failed:
            status = "failed"
        elif reached == top:
            status = "completed"
        else:
            status = "stopped"
        records.append(
            TrialRecord(
                trial_id=trial_id,
                params=params[trial_id],
                status=status,
                losses=[scheduler.rungs[k][trial_id] for k in range(reached + 1)],
            )
        )
    return AshaReport(
        budgets=scheduler.budgets,
        best_trial=best[0],
        best_params=params[best[0]],
        best_loss=best[2],
        rung_sizes=scheduler.rung_sizes,
        trials=records,
    )


def asha_optimize(space: SearchSpace, config: AshaConfig, factory: TrialFactory) -> AshaReport:
    return asyncio.run(run_asha(space, config, factory))


def save_asha_report(report: AshaReport, path: str) -> None:
    dump_document(report, path)


TRAIN_CONFIG_FIELDS = (
    "n_e",
    "n_s",
    "n_p",
    "n_0",
    "n_b",
    "n_a",
    "n_n",
    "n_h",
    "n_lambda",
    "lr_0",
    "lr_min",
    "T_s",
    "boundaries",
    "domain_mode",
    "x0_std",
    "validation_fraction",
    "seed",
)
GRU_TRAIN_CONFIG_FIELDS = (
    "n_e",
    "n_b",
    "n_n",
    "n_h",
    "dropout",
    "n_lambda",
    "lr_0",
    "lr_min",
    "validation_fraction",
    "seed",
)
SURROGATE_PARAMS = ("n_n", "n_h", "lr_0", "n_a")
RECURRENT_PARAMS = ("n_n", "n_h", "lr_0", "dropout")


def _overrides(
    base: object, fields: Sequence[str], allowed: Sequence[str], params: Dict[str, ParamValue]
) -> Dict[str, Any]:
    unknown = set(params) - set(allowed)
    if unknown:
        raise ValueError(f"cannot tune {sorted(unknown)}; tunable are {list(allowed)}")
    values = {name: getattr(base, name) for name in fields}
    values.update(params)
    return values


class SurrogateTrial:
    def __init__(
        self,
        base: TrainConfig,
        fp: BatchedDynamics,
        params: Dict[str, ParamValue],
        /,
        *,
        seed: int,
        datasets: Optional[Sequence[Dataset]] = None,
        metric: Literal["total", "physics"] = "total",
    ) -> None:
        values = _overrides(base, TRAIN_CONFIG_FIELDS, SURROGATE_PARAMS, params)
        values["seed"] = seed
        config = TrainConfigFromValues(**values)
        self.trainer = PinnTrainer(config, fp, datasets=datasets)
        self.metric = metric

    def train_until(self, epochs: int) -> float:
        self.trainer.run(epochs)
        last = self.trainer.history[-1]
        return last.L_v if self.metric == "total" else last.L_vp


class SurrogateTrialFactory:
    """Trials of the physics-informed surrogate; tunable are n_n, n_h, lr_0
    and n_a (0 trains a PINC)
    """

    def __init__(
        self,
        base: TrainConfig,
        fp: BatchedDynamics,
        /,
        *,
        datasets: Optional[Sequence[Dataset]] = None,
        metric: Literal["total", "physics"] = "total",
    ) -> None:
        self.base = base
        self.fp = fp
        self.datasets = datasets
        self.metric: Literal["total", "physics"] = metric

    def __call__(self, trial_id: int, params: Dict[str, ParamValue]) -> Trial:
        return SurrogateTrial(
            self.base,
            self.fp,
            params,
            seed=self.base.seed + trial_id,
            datasets=self.datasets,
            metric=self.metric,
        )


class RecurrentTrial:
    def __init__(
        self,
        base: GRUTrainConfig,
        datasets: Sequence[Dataset],
        params: Dict[str, ParamValue],
        /,
        *,
        seed: int,
        T_s: float,
        boundaries: Boundaries,
    ) -> None:
        values = _overrides(base, GRU_TRAIN_CONFIG_FIELDS, RECURRENT_PARAMS, params)
        values["seed"] = seed
        self.trainer = GRUTrainer(
            GRUTrainConfigFromValues(**values), datasets, T_s=T_s, boundaries=boundaries
        )

    def train_until(self, epochs: int) -> float:
        self.trainer.run(epochs)
        return self.trainer.history[-1].L_v


class RecurrentTrialFactory:
    """Trials of the recurrent baseline; tunable are n_n, n_h, lr_0 and
    dropout
    """

    def __init__(
        self,
        base: GRUTrainConfig,
        datasets: Sequence[Dataset],
        /,
        *,
        T_s: float,
        boundaries: Boundaries,
    ) -> None:
        self.base = base
        self.datasets = datasets
        self.T_s = T_s
        self.boundaries = boundaries

    def __call__(self, trial_id: int, params: Dict[str, ParamValue]) -> Trial:
        return RecurrentTrial(
            self.base,
            self.datasets,
            params,
            seed=self.base.seed + trial_id,
            T_s=self.T_s,
            boundaries=self.boundaries,
        )


if TYPE_CHECKING:
    _: Type[Trial] = SurrogateTrial
    __: Type[Trial] = RecurrentTrial
    ___: Type[TrialFactory] = SurrogateTrialFactory
    ____: Type[TrialFactory] = RecurrentTrialFactory
