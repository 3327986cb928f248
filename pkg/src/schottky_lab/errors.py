"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class SchottkyLabError(Exception):
    """Base class for every error raised by this package."""


class DomainError(SchottkyLabError, ValueError):
    """Input outside the mathematical domain (e.g. Im(B) not positive definite)."""


class TruncationInfeasibleError(SchottkyLabError):
    """The requested lattice tolerance needs a radius above the configured cap."""


class UnsupportedOrderError(SchottkyLabError, ValueError):
    pass


class PoleError(SchottkyLabError):
    """Evaluation too close to a pole of an elliptic function."""


class NearDivisorError(SchottkyLabError):
    """Theta is below the floor at an evaluation point where it is a denominator."""

    def __init__(self, message: str, point=None):
        super().__init__(message)
        self.point = point


class PrecisionError(SchottkyLabError):
    def __init__(self, message: str, estimate: float):
        super().__init__(message)
        self.estimate = estimate


class ConventionError(SchottkyLabError):
    def __init__(self, message: str, tried=None):
        super().__init__(message)
        self.tried = tried or []


class PathError(SchottkyLabError):
    pass


class CollisionError(SchottkyLabError):
    def __init__(self, message: str, pair=None, y=None):
        super().__init__(message)
        self.pair = pair
        self.y = y


class SingularLocusError(SchottkyLabError):
    """A tracked zero became (nearly) multiple: |tau_x| fell below the floor."""

    def __init__(self, message: str, y=None):
        super().__init__(message)
        self.y = y


class NotCMPoleError(SchottkyLabError):
    pass


class DegeneracyError(SchottkyLabError):
    pass


class ObstructionError(SchottkyLabError):
    """A simple-pole residue blocks rational integration.

    ``residues`` maps pole index to the offending residue (jet coefficients).
    """

    def __init__(self, message: str, residues=None, step=None):
        super().__init__(message)
        self.residues = residues or {}
        self.step = step

    @property
    def magnitude(self) -> float:
        if not self.residues:
            return 0.0
        return max(float(abs(r).max()) for r in self.residues.values())


class TruncationError(SchottkyLabError):
    def __init__(self, message: str, required_depth: int):
        super().__init__(message)
        self.required_depth = required_depth


class SamplingError(SchottkyLabError):
    pass


class DegenerateSystemError(SchottkyLabError):
    pass


class ManifestError(SchottkyLabError):
    """Invalid run manifest; maps to CLI exit status 2."""
