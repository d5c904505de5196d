"""Exception types raised across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain where an operation is defined."""


class ConvergenceError(RuntimeError):
    """An iterative routine failed to reach its tolerance."""


class UnsupportedConfiguration(NotImplementedError):
    """No analytic path exists for the requested model/objective combination."""


class InsufficientSamples(ValueError):
    """Too few Monte-Carlo samples for the requested estimator."""


class ConfigError(ValueError):
    """An experiment configuration file is malformed; ``key`` names the culprit."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"config key {key!r}: {message}")
