"""
Exception hierarchy for the Consensus Networks package.

Shape, label and configuration problems are also ValueErrors so callers that
only know the builtin types still catch them; state and optimizer failures
are RuntimeErrors.
"""
from typing import Optional


class ConsensusError(Exception):
    """Root of every error raised by this package."""


class ConfigError(ConsensusError, ValueError):
    """Invalid configuration, flag combination or partition map."""


class PartitionConfigError(ConfigError):
    pass


class DimensionError(ConsensusError, ValueError):
    pass


class LabelError(ConsensusError, ValueError):
    pass


class StateError(ConsensusError, RuntimeError):
    """A layer or trainer was used out of order (e.g. backward before forward)."""


class BatchTooSmallError(ConsensusError, ValueError):
    pass


class OptimizerError(ConsensusError, RuntimeError):
    pass


class ContractError(ConsensusError, RuntimeError):
    """An operation was called while its precondition does not hold."""


class DegenerateInputError(ConsensusError, ValueError):
    pass


class ImputationError(ConsensusError, ValueError):
    pass


class EvaluationError(ConsensusError, ValueError):
    pass


class DataParseError(ConsensusError, ValueError):
    """CSV ingestion failure. `row` is the 1-based line number in the file."""

    def __init__(self, message: str, row: Optional[int] = None, path: Optional[str] = None):
        self.row = row
        self.path = path
        where = ""
        if path:
            where += f"{path}"
        if row is not None:
            where += f"{':' if where else 'row '}{row}"
        super().__init__(f"{where}: {message}" if where else message)


class TrainingAbortedError(ConsensusError, RuntimeError):
    """Non-finite loss or gradient during training; carries the step/batch where it happened."""

    def __init__(self, message: str, step: Optional[int] = None, batch: Optional[int] = None):
        self.step = step
        self.batch = batch
        super().__init__(f"{message} (step={step}, batch={batch})")
