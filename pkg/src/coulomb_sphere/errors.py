"""Exception types raised by the numerical modules."""


class CoulombSphereError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(CoulombSphereError, ValueError):
    """Input violates a documented precondition."""


class PointAtInfinityError(CoulombSphereError, ValueError):
    """The north pole of S^3 has no finite momentum image."""


class PoleProximityError(CoulombSphereError, ValueError):
    """Energy sits on (or within tolerance of) a pole of the amplitude."""

    def __init__(self, message, n):
        super().__init__(message)
        self.n = n


class CoincidentPointError(CoulombSphereError, ValueError):
    """Fixed-energy amplitude requested at zero opening angle."""


class ResolutionError(CoulombSphereError, ValueError):
    """A grid or scan is too coarse for the requested quantity."""


class ConvergenceError(CoulombSphereError, RuntimeError):
    """An iterative procedure did not converge.

    ``diagnostics`` carries whatever the failing routine could report
    (final gradient norm, iteration count, ...).
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class CollisionError(ConvergenceError):
    """Orbit integration came within the collision radius of the centre."""
