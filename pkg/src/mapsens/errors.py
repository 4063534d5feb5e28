"""Exception hierarchy shared by all estimators."""


class MapSensError(Exception):
    """Base class for library errors."""


class ParameterError(MapSensError, ValueError):
    """Invalid distribution, kernel or estimator parameter."""


class DomainError(MapSensError, ValueError):
    """Input point outside the support of the input space."""


class GridMismatchError(MapSensError, ValueError):
    """Two set samples live on different grids."""


class DegenerateModelError(MapSensError, ArithmeticError):
    """An index is undefined because the output shows no variability."""


class ConfigError(MapSensError):
    """Invalid run configuration.

    ``key`` is the dotted path of the offending entry when known, ``line``
    the 1-based line number for syntax errors.
    """

    def __init__(self, message, key=None, line=None):
        self.key = key
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key '{key}'")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)
