"""
Exceptions
Error hierarchy shared by the solver, the oracle and the CLI
"""

from typing import Any, Dict, Optional


class InfiltrationError(Exception):
    """Base class for every error raised by the package."""


class ConfigurationError(InfiltrationError):
    """Invalid parameters, scenario values or numerical settings."""


class DomainError(InfiltrationError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class StencilUnavailableError(InfiltrationError):
    """A half-node stencil was requested where a node has no neighbour."""

    def __init__(self, node: int, axis: int):
        self.node = node
        self.axis = axis
        super().__init__(f"node {node} has no two-sided stencil along axis {axis}")


class IllConditionedError(InfiltrationError):
    """A local Gram matrix could not be factorised reliably."""

    def __init__(self, node: int, condition: float, shape: float):
        self.node = node
        self.condition = condition
        self.shape = shape
        super().__init__(
            f"local Gram matrix of node {node} is ill-conditioned "
            f"(condition estimate {condition:.3e}); the Gaussian flattens as the shape "
            f"parameter shrinks, try a value larger than {shape:g}"
        )


class NonConvergenceError(InfiltrationError):
    """Picard iteration reached its cap without meeting the tolerance."""

    def __init__(self, time_level: int, time: float, delta: float, iterations: int):
        self.time_level = time_level
        self.time = time
        self.delta = delta
        self.iterations = iterations
        super().__init__(
            f"Picard iteration did not converge at time level {time_level} (t={time:g}) "
            f"after {iterations} iterations, final delta {delta:.3e}"
        )


class LinearSolverError(InfiltrationError):
    """The sparse global system could not be solved to the residual target."""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        self.diagnostics = diagnostics or {}
        super().__init__(message)


class ScenarioParseError(InfiltrationError):
    """A scenario or soil-table file failed to parse or validate."""

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        location = ""
        if path:
            location = f"{path}:{line}: " if line else f"{path}: "
        super().__init__(f"{location}{message}")


class OutputError(InfiltrationError):
    """A result file could not be written."""

    def __init__(self, path: str, reason: str):
        self.path = path
        super().__init__(f"cannot write {path}: {reason}")
