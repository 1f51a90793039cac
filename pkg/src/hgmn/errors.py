"""Exception types raised by the pipeline.

Each class also derives from the closest builtin so callers that only know
about ``ValueError`` or ``RuntimeError`` keep working.
"""


class HgmnError(Exception):
    """Base class for every error raised on purpose by this package."""


class GraphFormatError(HgmnError, ValueError):
    pass


class NodeIndexError(HgmnError, IndexError):
    pass


class DatasetError(HgmnError, ValueError):
    pass


class SplitError(HgmnError, ValueError):
    pass


class HypergraphError(HgmnError, ValueError):
    pass


class EmbeddingFormatError(HgmnError, ValueError):
    pass


class ConvergenceError(HgmnError, RuntimeError):
    pass


class DimensionError(HgmnError, ValueError):
    pass


class TapeError(HgmnError, RuntimeError):
    pass


class NonFiniteError(HgmnError, ValueError):
    pass


class DivergenceError(HgmnError, RuntimeError):
    def __init__(self, epoch: int, message: str):
        super().__init__(message)
        self.epoch = epoch


class ConfigError(HgmnError, ValueError):
    pass


class CheckpointError(HgmnError, ValueError):
    pass
