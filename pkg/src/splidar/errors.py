"""Exception types shared across the package."""


class SplidarError(Exception):
    """Base class for operational failures raised by this package."""


class FormatError(SplidarError):
    """A binary cube/image file is malformed; message names the byte offset."""


class FitError(SplidarError):
    """Impulse-response calibration could not produce a valid Gaussian fit."""


class SolverError(SplidarError):
    """An iterative solver broke down (non-finite state, linear-solve failure)."""


class ConfigError(SplidarError):
    """Invalid command-line / config-file input."""
