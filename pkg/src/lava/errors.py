"""Exception hierarchy shared across the pipeline."""


class LavaError(Exception):
    """Base class for all errors raised by this package."""


class DataError(LavaError, ValueError):
    """Input data violates a contract (maps to CLI exit code 1)."""


class ConfigError(LavaError, ValueError):
    """Invalid parameters or usage (maps to CLI exit code 2)."""


# activation store
class MalformedHeader(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class NonFiniteValue(DataError):
    pass


class UnknownLabel(DataError):
    pass


class SampleOrderMismatch(DataError):
    pass


class UnknownNeuron(DataError):
    pass


# probing
class DegenerateInput(DataError):
    pass


class SelectionTooLarge(ConfigError):
    pass


class LayerMismatch(DataError):
    pass


class LayerSetMismatch(DataError):
    pass


class TooFewSamples(DataError):
    pass


class SingleClass(DataError):
    pass


class DegenerateBandwidth(DataError):
    pass


class NotConvergedWarning(UserWarning):
    """Solver hit max_iter before meeting its tolerance."""


# granularity
class KOutOfRange(ConfigError):
    pass


class ROutOfRange(ConfigError):
    pass


class SingleCluster(DataError):
    pass


class MissingReference(ConfigError):
    pass


# morphometrics
class MalformedFile(DataError):
    pass


class UnsupportedFormat(DataError):
    pass


class EmptyMask(DataError):
    pass


class ImageTooSmall(DataError):
    pass


# continuum
class AllMissingInClass(DataError):
    pass


class MissingColumn(DataError):
    pass


class DegenerateVariance(DataError):
    pass


class SparseCell(DataError):
    pass


# oracles
class InstanceTooLarge(ConfigError):
    pass
