"""
Error types for the diameter lab

Library code raises these; the CLI, the Flask routes and the MCP server
translate them into exit codes, HTTP statuses and tool errors.
"""

from typing import Optional


class LabError(Exception):
    """Base class for every failure raised by the processors package"""


class RejectedInputError(LabError, ValueError):
    """An operation was called outside its precondition"""


class InfeasibleConfigurationError(LabError, ValueError):
    """A field-lab configuration cannot realize the requested valuations"""


class PrecisionExhaustedError(LabError, ArithmeticError):
    """A truncated field element is indistinguishable from zero"""


class StepError(LabError):
    """
    A ball step hit a case the contraction lemma does not cover

    Args:
        message: Human readable description
        step: Index of the failing step, filled in by the propagator
    """

    kind = 'step_error'

    def __init__(self, message: str, step: Optional[int] = None):
        super().__init__(message)
        self.step = step

    def __str__(self):
        base = super().__str__()
        if self.step is None:
            return base
        return f"{base} (step {self.step})"


class BoundaryCaseError(StepError):
    """diam sits exactly on the tame/wild threshold"""

    kind = 'boundary_case'


class BallTooLargeError(StepError):
    """the ball is no longer strictly inside its sphere (or inside B(1))"""

    kind = 'ball_too_large'


class VerificationFailure(LabError):
    """
    An exact identity did not hold

    Args:
        location: Where the check failed (checkpoint, block, beta...)
        expected: Value predicted by the closed form
        actual: Value produced by the computation
    """

    def __init__(self, location: str, expected=None, actual=None, message: Optional[str] = None):
        self.location = location
        self.expected = expected
        self.actual = actual
        super().__init__(message or f"identity failed at {location}: expected {expected}, got {actual}")
