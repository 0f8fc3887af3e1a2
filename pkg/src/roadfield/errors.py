"""Exception hierarchy shared by the library and the CLI."""


class RoadfieldError(Exception):
    """Base class for all library errors."""


class ParameterDomainError(RoadfieldError, ValueError):
    """A physical or numerical parameter lies outside its admissible range."""


class StabilityError(RoadfieldError):
    """Grid or time step too coarse for the discretization to keep its sign structure."""


class GeometryError(RoadfieldError, ValueError):
    """Geometry incompatible with the requested operator, or spacing not dividing an extent."""


class ConvergenceError(RoadfieldError):
    """An iterative method did not converge.

    Attributes
    ----------
    residual : float
        Last residual reached before giving up.
    """

    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


class NoSubsolutionError(RoadfieldError):
    """The truncated principal eigenvalue is nonnegative, so no small positive subsolution exists."""


class ConfigError(RoadfieldError):
    """Invalid run configuration.

    Attributes
    ----------
    pointer : str
        JSON pointer (``/model/d``) or field name of the offending entry.
    """

    def __init__(self, message, pointer=""):
        super().__init__(f"{pointer}: {message}" if pointer else message)
        self.pointer = pointer
