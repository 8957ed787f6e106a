"""Exception types shared across the package."""

import numpy as np


class InvalidArgumentError(ValueError):
    """An argument violates a documented precondition."""


class SingularSystemError(np.linalg.LinAlgError):
    """A linear system that must be solved is singular.

    ``rows`` lists the indices of the offending filter rows when they can be
    identified.
    """

    def __init__(self, message, rows=None):
        super().__init__(message)
        self.rows = list(rows) if rows is not None else []


class UndefinedMetricError(ValueError):
    """A metric has no contributing samples."""


class CubeFormatError(ValueError):
    """A cube file could not be parsed.

    ``code`` is one of ``"malformed-header"``, ``"payload-size-mismatch"``,
    ``"dtype-mismatch"`` or ``"kind-mismatch"``.
    """

    def __init__(self, code, message):
        super().__init__(f"{code}: {message}")
        self.code = code
