"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
NumericFailure -> 4.
"""


class FSSError(Exception):
    pass


class ConfigError(FSSError):
    pass


class NonDivisible(ConfigError):
    pass


class FoldMismatch(ConfigError):
    pass


class StageError(ConfigError):
    pass


class DataError(FSSError):
    pass


class InsufficientSamples(DataError):
    pass


class DegenerateCrop(DataError):
    pass


class IoFailure(DataError):
    pass


class ShapeMismatch(FSSError, ValueError):
    pass


class OrderingViolation(FSSError, ValueError):
    pass


class EmptySupportForeground(FSSError):
    pass


class EmptySupportMask(FSSError):
    pass


class EmptyList(FSSError, ValueError):
    pass


class AllIgnored(FSSError):
    pass


class MissingClass(FSSError, KeyError):
    pass


class VersionMismatch(FSSError):
    pass


class CorruptFile(FSSError):
    pass


class NumericFailure(FSSError):
    pass
