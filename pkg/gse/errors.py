class GseError(Exception):
    pass


class ModelError(GseError, ValueError):
    pass


class DomainError(GseError, ValueError):
    pass


class OrderParamError(GseError, ValueError):
    pass


class GridTooSmallError(GseError, ValueError):
    pass


class UnknownSlabTimeError(GseError, KeyError):
    pass


class StepCountTooSmallError(GseError, ValueError):
    pass


class BudgetExceededError(GseError, ValueError):
    pass


class ConfigError(GseError, ValueError):
    pass


class EnumerationError(GseError, ValueError):
    pass
