"""Exception hierarchy shared by all splab modules."""

from __future__ import annotations


class SplabError(Exception):
    """Base class for all package errors."""


class GridMismatch(SplabError):
    """Fields live on different grids, or the grid kind is unsupported."""


class OutOfDomain(SplabError):
    """Interpolation would sample outside the source grid."""


class NonBracketable(SplabError):
    """A monotone root could not be bracketed on the search interval."""


class NoRoot(SplabError):
    """The scalar Nehari equation has no positive root for this ray."""


class DegenerateIterate(SplabError):
    """A descent iterate lost all mass on the superlinear branch."""


class NoConvergence(SplabError):
    """Iteration cap reached, or the line search stalled."""

    def __init__(self, message: str, best=None):
        super().__init__(message)
        self.best = best


class BoxTooSmall(SplabError):
    """The rescaled region or the solution tail does not fit in the box."""


class ExponentMismatch(SplabError):
    """Exponents violate the Hardy-Littlewood-Sobolev scaling relation."""


class BisectionExhausted(SplabError):
    """Shooting bisection could not isolate the decaying separatrix."""


class FlatField(SplabError):
    """The field has no positive maximum."""


class InsufficientWindow(SplabError):
    """Too few radial shells fall inside the decay-fit window."""


class InvalidOrder(SplabError):
    """Parameter lists are not in the required order."""


class WellCollision(SplabError):
    """Two well-localised runs converged into the same well."""


class ConfigError(SplabError):
    """Malformed or inconsistent configuration file."""


class SnapshotError(SplabError):
    """Malformed SPGF field snapshot."""
