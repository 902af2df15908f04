"""Exception types.

Every error raised on purpose by the library derives from ``HierReconError``.
The CLI maps the three families below onto distinct exit codes.
"""


class HierReconError(Exception):
    """Base class for all library errors."""


class ConfigError(HierReconError):
    """Invalid run configuration or arguments."""


class DataError(HierReconError):
    """Input data violates a structural or numeric contract."""


class ComputationError(HierReconError):
    """A numerical routine could not produce a result."""


# hierarchy
class CycleDetected(DataError):
    pass


class MultipleRoots(DataError):
    pass


class DisconnectedNode(DataError):
    pass


class MultipleParents(DataError):
    pass


class UnbalancedHierarchy(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class IncoherentPanel(DataError):
    pass


class UnknownNode(DataError):
    pass


class MissingNode(DataError):
    pass


class RaggedHorizon(DataError):
    pass


class NonNumericValue(DataError):
    pass


# base forecasts
class InsufficientHistory(DataError):
    pass


class SingularDesign(ComputationError):
    pass


# linear reconciliation
class ZeroTotal(DataError):
    pass


class InvalidLevel(ConfigError):
    pass


class MissingResiduals(ConfigError):
    pass


class SingularGram(ComputationError):
    pass


# ml reconciliation
class EmptyRecords(DataError):
    pass


class TooFewRows(DataError):
    pass


class ModelCountMismatch(DataError):
    pass


class ModelFormatError(DataError):
    pass


# evaluation
class ZeroDenominator(ComputationError):
    pass


class ConfigInfeasible(ConfigError):
    pass


class IoFailure(HierReconError):
    pass
