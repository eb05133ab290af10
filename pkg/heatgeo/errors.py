from __future__ import annotations

from typing import Optional, Sequence


class HeatGeoError(Exception):
    pass


# Bad arguments, violated preconditions, invalid configuration values.
class ParameterError(HeatGeoError, ValueError):
    pass


# Unreadable or malformed input files.
class DataError(HeatGeoError):
    def __init__(self, message: str, line: Optional[int] = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DisconnectedGraphError(ParameterError):
    def __init__(self, message: str, components: Sequence[Sequence[int]]):
        # Only list the smaller components, the largest one is usually most of the graph.
        shown = sorted(components, key=len)[:-1][:10]
        super().__init__(
            f"{message}: {len(components)} components, detached vertex sets {[list(c) for c in shown]}"
        )
        self.components = [list(c) for c in components]


# Failures of the numerical routines themselves (as opposed to their inputs). The stage
# is reported by the CLI.
class NumericalError(HeatGeoError):
    def __init__(self, stage: str, message: str, residual: Optional[float] = None):
        if residual is not None:
            message = f"{message} (residual {residual:.3e})"
        super().__init__(f"{stage}: {message}")
        self.stage = stage
        self.residual = residual
