"""Exception hierarchy shared across the package.

Everything raised on purpose derives from StieltjesSimError so callers can
catch library failures without swallowing programming errors.
"""

from __future__ import annotations


class StieltjesSimError(Exception):
    """Base class for all library errors."""


# --- expression language ------------------------------------------------

class ExprSyntaxError(StieltjesSimError):
    """Malformed expression text.

    Attributes:
        offset: byte offset into the UTF-8 source where parsing failed.
        expected: short description of what the parser expected there.
    """

    def __init__(self, offset: int, expected: str):
        self.offset = offset
        self.expected = expected
        super().__init__(f"syntax error at byte {offset}: expected {expected}")


class UnknownFunctionError(StieltjesSimError):
    def __init__(self, name: str, offset: int = -1):
        self.name = name
        self.offset = offset
        super().__init__(f"unknown function '{name}'")


class ArityMismatchError(StieltjesSimError):
    def __init__(self, name: str, expected: int, got: int):
        self.name = name
        self.expected = expected
        self.got = got
        super().__init__(f"function '{name}' takes {expected} argument(s), got {got}")


class EvaluationError(StieltjesSimError):
    """Base for failures while evaluating expressions, fields or integrands."""


class UnboundVariableError(EvaluationError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"unbound variable '{name}'")


class ExprDomainError(EvaluationError):
    """Division by zero, log of a non-positive number, and similar."""


class FieldEvaluationError(EvaluationError):
    """A right-hand-side component failed to evaluate at (t, y)."""

    def __init__(self, t: float, component: int, cause: Exception):
        self.t = t
        self.component = component
        self.cause = cause
        super().__init__(f"field component {component + 1} failed at t={t}: {cause}")


# --- domains, grids, integrators ----------------------------------------

class OutOfDomainError(StieltjesSimError):
    def __init__(self, t: float, lo: float, hi: float):
        self.t = t
        super().__init__(f"t={t} outside domain [{lo}, {hi}]")


class DomainMismatchError(StieltjesSimError):
    pass


class ReversedIntervalError(StieltjesSimError):
    def __init__(self, u: float, v: float):
        super().__init__(f"reversed interval: u={u} > v={v}")


class MeshMissingJumpError(StieltjesSimError):
    def __init__(self, t: float):
        self.t = t
        super().__init__(f"mesh does not contain the jump time t={t}")


class ToleranceNotMetError(StieltjesSimError):
    def __init__(self, a: float, b: float, estimate: float, tol: float):
        self.interval = (a, b)
        self.estimate = estimate
        self.tol = tol
        super().__init__(
            f"adaptive quadrature exhausted its depth on [{a}, {b}]: "
            f"error estimate {estimate:.3e} > tol {tol:.3e}"
        )


# --- solver --------------------------------------------------------------

class SchemeUnsupportedError(StieltjesSimError):
    pass


class NonFiniteStateError(StieltjesSimError):
    def __init__(self, t: float):
        self.t = t
        super().__init__(f"state became non-finite at t={t}")


class NoConvergenceError(StieltjesSimError):
    """Difference quotients failed to stabilise."""


# --- brackets and iteration ----------------------------------------------

class BracketViolationError(StieltjesSimError):
    def __init__(self, escape: float, tol: float):
        self.escape = escape
        super().__init__(
            f"final iterate escapes the bracket by {escape:.3e} (> tol {tol:.3e})"
        )


# --- built-in models -------------------------------------------------------

class InvalidParamsError(StieltjesSimError):
    pass


class MissingAnchorsError(StieltjesSimError):
    def __init__(self, t: float, needed: int):
        super().__init__(
            f"evaluating the water oracle at t={t} needs {needed} refill anchor(s)"
        )


class SegmentNotFoundError(StieltjesSimError):
    def __init__(self, t: float):
        super().__init__(f"no closed-form segment covers t={t}")


# --- CLI -------------------------------------------------------------------

class ConfigError(StieltjesSimError):
    """Invalid configuration file; message carries the JSON pointer path."""
