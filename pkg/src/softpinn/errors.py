import sys
from typing import List, Optional, Sequence, Union, cast


class DimensionMismatchError(ValueError): ...


class SingularMassMatrixError(Exception): ...


class IntegrationDivergedError(Exception):
    """Raised when a rollout produces a non-finite state, a state component
    with magnitude above the divergence threshold, or a mass matrix that
    cannot be factorized.
    """

    def __init__(self, msg: str, /, *, step_index: int) -> None:
        super().__init__(msg)
        self.step_index = step_index
        """The index of the macro step (0-based) during which the rollout failed"""


class DatasetTooShortError(ValueError): ...


class RankDeficiencyError(Exception):
    """Raised by an identification step when its regressor does not have full
    column rank.
    """

    def __init__(self, msg: str, /, *, step: str, joints: Sequence[int]) -> None:
        super().__init__(msg)
        self.step = step
        """Which identification step failed: `stiffness`, `friction`, `refit` or `contact`"""
        self.joints = list(joints)
        """The 0-based joints (or, for the shared contact parameters, the
        parameter columns) that could not be identified
        """


class IdentificationError(Exception): ...


class NonFiniteLossError(Exception):
    def __init__(self, msg: str, /, *, epoch: int, batch: int) -> None:
        super().__init__(msg)
        self.epoch = epoch
        self.batch = batch


class StaleCacheError(ValueError):
    """Raised when a backward pass is given activations cached before the
    weights last changed
    """


class NonFinitePredictionError(Exception):
    def __init__(self, msg: str, /, *, step_index: int) -> None:
        super().__init__(msg)
        self.step_index = step_index


class PlantDivergedError(Exception): ...


class ControllerError(Exception): ...


class UnsupportedFileVersionError(ValueError): ...


class EmptySearchSpaceError(ValueError): ...


class PipelineStageError(Exception):
    """Raised by the pipeline when a stage fails; artifacts written by the
    earlier stages are left in place.
    """

    def __init__(self, msg: str, /, *, stage: str, path: Optional[str] = None) -> None:
        super().__init__(msg)
        self.stage = stage
        self.path = path


if sys.version_info < (3, 11):

    def combine_multiple_normal_exceptions(
        msg: str, excs: List[Exception]
    ) -> Exception:
        """Returns a single Exception whose __cause__ chain includes all
        the indicated exceptions and their causes.
        """
        if not excs:
            raise ValueError("no exceptions to combine")

        if len(excs) == 1:
            return excs[0]

        exc = Exception(msg)
        last_exc: Union[Exception, BaseException] = exc

        for nexc in excs:
            while last_exc.__cause__ is not None:
                last_exc = last_exc.__cause__
            last_exc.__cause__ = nexc

        return exc

else:

    def combine_multiple_normal_exceptions(
        msg: str, excs: List[Exception]
    ) -> Exception:
        """Light wrapper around ExceptionGroup"""
        if not excs:
            raise ValueError("no exceptions to combine")

        if len(excs) == 1:
            return excs[0]

        flat: List[Exception] = []
        for e in excs:
            if isinstance(e, ExceptionGroup):
                flat.extend(e.exceptions)
            else:
                flat.append(e)

        return ExceptionGroup(msg, flat)


def combine_multiple_exceptions(msg: str, excs: Sequence[Exception]) -> Exception:
    """Returns a single exception reporting all the indicated failures. A lone
    failure is returned unchanged so callers can still catch its concrete
    type.
    """
    return combine_multiple_normal_exceptions(msg, cast(List[Exception], list(excs)))
