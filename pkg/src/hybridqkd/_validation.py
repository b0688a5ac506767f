"""Small helpers for parameter validation shared by the parameter records."""
from __future__ import annotations

import math


class ParameterError(ValueError):
    """Invalid value for a named parameter.

    ``field`` holds the offending attribute name so that configuration
    loaders can report a full dotted path such as ``source.mu``.
    """

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message


def require(condition: bool, field: str, message: str) -> None:
    if not condition:
        raise ParameterError(field, message)


def require_finite(value: float, field: str) -> None:
    require(isinstance(value, (int, float)) and math.isfinite(value), field,
            f"must be a finite number, got {value!r}")


def require_range(value: float, field: str, lo: float | None = None,
                  hi: float | None = None, *, lo_open: bool = False,
                  hi_open: bool = False) -> None:
    require_finite(value, field)
    if lo is not None:
        ok = value > lo if lo_open else value >= lo
        require(ok, field, f"must be {'>' if lo_open else '>='} {lo}, got {value}")
    if hi is not None:
        ok = value < hi if hi_open else value <= hi
        require(ok, field, f"must be {'<' if hi_open else '<='} {hi}, got {value}")
