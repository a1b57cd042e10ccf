"""Exception hierarchy shared by all modules."""


class HEPError(Exception):
    """Base class for every error raised by the package."""


class InvalidConfigurationError(HEPError, ValueError):
    pass


class HeadwaysUndefinedError(HEPError, ValueError):
    """Headways do not exist for a configuration without particles."""


class InvalidMoveError(HEPError, ValueError):
    pass


class InfinitePotentialError(HEPError, ValueError):
    """A Boltzmann factor vanishes at finite distance, so rates are undefined."""


class DivergenceError(HEPError, ArithmeticError):
    """A series was evaluated at or beyond its radius of convergence."""

    def __init__(self, message: str, z_c: float | None = None):
        super().__init__(message)
        self.z_c = z_c


class DegenerateSpaceError(HEPError, ValueError):
    pass


class ReducibleChainError(HEPError, ValueError):
    pass


class CapExceededError(HEPError, ValueError):
    pass


class RangeError(HEPError, ValueError):
    pass
