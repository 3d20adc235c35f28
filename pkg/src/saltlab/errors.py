"""Exception hierarchy shared across the package."""


class SaltLabError(Exception):
    """Base class for all package errors."""


class ParameterError(SaltLabError, ValueError):
    pass


class ContractError(SaltLabError, ValueError):
    """An argument violates an operation's precondition (shape, range, finiteness)."""


class TokenizationError(SaltLabError, ValueError):
    pass


class TrainingError(SaltLabError, RuntimeError):
    def __init__(self, message, step=None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step


class GuidanceError(SaltLabError, RuntimeError):
    pass


class DegenerateBoxError(SaltLabError, ValueError):
    pass


class SpecError(SaltLabError, ValueError):
    """A scene or layout description breaks its invariants."""


class ConfigError(SaltLabError, ValueError):
    pass


class AssetError(SaltLabError, ValueError):
    pass
