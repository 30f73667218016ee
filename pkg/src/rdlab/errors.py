"""Exception types raised across the package."""


class RDLabError(Exception):
    """Base class for all package errors."""


class InvalidParameter(RDLabError, ValueError):
    pass


class EllipticityViolation(RDLabError, ValueError):
    pass


class InvalidModulus(RDLabError, ValueError):
    pass


class OsgoodFailure(RDLabError):
    """The modulus does not satisfy the divergence condition at zero."""


class LevelConstructionFailure(RDLabError):
    pass


class InsufficientSample(RDLabError):
    pass


class ConfigError(RDLabError):
    """Raised with the full list of violations found in a config file."""

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))
