"""Shared exception types."""


class NumericalError(RuntimeError):
    """A numerical routine failed its accuracy or stability contract.

    Raised with a message that includes the achieved estimate whenever one
    is available, so callers can decide whether to retry with different
    settings.
    """


class ConfigError(ValueError):
    """Invalid run configuration.

    Carries every violation found, not just the first one.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        lines = "\n".join(f"  - {v}" for v in self.violations)
        super().__init__(f"invalid configuration:\n{lines}")
