"""Exception hierarchy shared by every gclbench module."""

from typing import Optional


class BenchmarkError(ValueError):
    """Base class for all errors raised by gclbench."""


class ShapeError(BenchmarkError):
    """Operand shapes do not conform."""


class NonFiniteError(BenchmarkError):
    """A forward operation produced NaN or Inf."""


class UnknownOpError(BenchmarkError):
    """The requested op-kind is not registered."""


class TapeError(BenchmarkError):
    """Backward was requested for a tensor the tape does not own."""


class DatasetFormatError(BenchmarkError):
    """Input files or graphs violate the expected layout or invariants."""


class ConfigError(BenchmarkError):
    """Configuration file or object is invalid."""


class ProbeError(BenchmarkError):
    """An embedding probe cannot be fitted on the given inputs."""


class GridMismatchError(BenchmarkError):
    """Two methods were not run on comparable grids."""


class TrainingDivergedError(BenchmarkError):
    """Training produced a non-finite loss."""

    def __init__(self, message: str, epoch: Optional[int] = None, batch: Optional[int] = None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
