"""Exception hierarchy shared by every fusegate module."""


class FusegateError(Exception):
    """Base class for all library errors."""


class DimensionError(FusegateError, ValueError):
    """Operand shapes do not agree."""


class WindowError(FusegateError, ValueError):
    """A kernel or pooling window does not fit the input length."""


class ConfigError(FusegateError, ValueError):
    """An architecture, layer or experiment configuration is invalid."""


class LabelError(FusegateError, ValueError):
    """A class label is unknown or out of range."""


class DataError(FusegateError, ValueError):
    """Input data is malformed or too short."""


class ContractError(FusegateError, RuntimeError):
    """An operation was called outside its documented contract."""


class DivergenceError(FusegateError, RuntimeError):
    """Training produced a non-finite loss."""
