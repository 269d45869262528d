"""Exception taxonomy shared across the package.

The CLI maps these onto process exit codes: ConfigError -> 2,
NumericalError -> 3, IOFormatError -> 4.
"""


class SMCFError(Exception):
    """Base class for all package errors."""


class ConfigError(SMCFError):
    """Invalid configuration, dimensions or resolutions."""


class InvalidDimension(ConfigError):
    pass


class InvalidResolution(ConfigError):
    pass


class NumericalError(SMCFError):
    """Solver failures: divergence, degenerate metric, instability."""


class NoConvergence(NumericalError):
    pass


class MetricDegenerate(NumericalError):
    pass


class StabilityViolation(NumericalError):
    pass


class InversionDivergence(NumericalError):
    pass


class IOFormatError(SMCFError):
    """Snapshot/CSV format violations."""
