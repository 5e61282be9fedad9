"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command line front end:
2 for configuration problems, 3 for bad input data, 4 for internal
invariant violations.
"""


class RowpipError(Exception):
    exit_code = 4


class ConfigError(RowpipError, ValueError):
    exit_code = 2


class DataError(RowpipError, ValueError):
    exit_code = 3


class FormatError(DataError):
    """Raster file uses a feature outside the supported baseline profile."""


class GeoreferencingError(DataError):
    """No usable north-up geotransform could be found."""


class ShapeError(DataError):
    """Band count or grid mismatch between rasters."""


class UndefinedMetricError(DataError, ZeroDivisionError):
    """A ratio metric was requested with a zero denominator."""


class GenerationError(RowpipError, RuntimeError):
    exit_code = 3


class InvariantError(RowpipError, AssertionError):
    exit_code = 4
