"""Exception hierarchy shared by the library and the command line front end."""


class DephasingError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ValidationError(DephasingError, ValueError):
    """Invalid input: unknown preset, bad parameters, malformed config."""

    exit_code = 1


class NumericalError(DephasingError, ArithmeticError):
    """A numerical check failed (weight conservation, integrator drift)."""

    exit_code = 2


class WeightCheckError(NumericalError):
    pass


class IntegratorError(NumericalError):
    pass


class CacheCorruptionError(DephasingError, OSError):
    """An eigensystem cache file failed magic, version, size or checksum checks."""

    exit_code = 3


class CacheVersionError(CacheCorruptionError):
    pass
