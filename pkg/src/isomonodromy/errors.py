"""Exception hierarchy.

Every failure raised by the package derives from :class:`IsomonodromyError`.
The CLI maps the three families below onto exit codes.
"""

from __future__ import annotations


class IsomonodromyError(Exception):
    """Base class for all package errors."""


class InputError(IsomonodromyError, ValueError):
    """Rejected input or violated precondition (CLI exit code 4)."""


class NumericFailure(IsomonodromyError, ArithmeticError):
    """A numerical procedure could not produce a trustworthy answer (exit 3)."""


class CheckFailure(IsomonodromyError):
    """A computed residual exceeded its tolerance (exit 2)."""


class SingularMatrixError(NumericFailure):
    def __init__(self, message: str, smallest_pivot: float):
        super().__init__(f"{message} (smallest pivot {smallest_pivot:.3e})")
        self.smallest_pivot = smallest_pivot


class NonConvergenceError(NumericFailure):
    def __init__(self, message: str, ratio: float | None = None):
        if ratio is not None:
            message = f"{message} (last contraction ratio {ratio:.3e})"
        super().__init__(message)
        self.ratio = ratio


class NearCollisionError(InputError):
    """Two poles came closer than the admissible gap."""

    def __init__(self, message: str, gap: float):
        super().__init__(f"{message} (pole gap {gap:.3e})")
        self.gap = gap


class StiffnessError(NumericFailure):
    """Step size underflow in the adaptive integrator."""

    def __init__(self, message: str, t: float):
        super().__init__(f"{message} at t={t!r}")
        self.t = t


class PoleOfSolution(NumericFailure):
    """The integrated solution blew up: a pole of a meromorphic solution.

    ``arclength`` is the refined location along the path where the norm
    crossed the blow-up threshold; ``u`` the corresponding point.
    """

    def __init__(self, message: str, arclength: float, u=None, parameter=None,
                 trace=None):
        super().__init__(f"{message} at arclength {arclength:.12g}")
        self.arclength = arclength
        self.u = u
        self.parameter = parameter
        # (arclength, u, unit tangent, state) of the last accepted steps
        self.trace = trace or []


class DegenerateMetricError(NumericFailure):
    def __init__(self, message: str, arclength: float, index: int, u=None):
        super().__init__(f"{message}: eta[{index}] vanishes near arclength {arclength:.6g}")
        self.arclength = arclength
        self.index = index
        self.u = u


class DegeneratePivotError(NumericFailure):
    """The gauge-step pivot ``g`` vanished (a Theta-point signal)."""

    def __init__(self, message: str, g: complex):
        super().__init__(f"{message} (|g| = {abs(g):.3e})")
        self.g = g
