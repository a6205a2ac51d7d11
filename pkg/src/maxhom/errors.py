"""Exception hierarchy for the toolkit.

All errors raised deliberately by the package derive from ``MaxhomError`` so
callers can catch the package's failures without swallowing programming
mistakes.  The leaf classes mirror the failure modes of the numerical layers:
bad inputs, rank/degeneracy conditions detected during a solve, and
iterative solvers that fail to converge.
"""

from __future__ import annotations


class MaxhomError(Exception):
    """Base class for all package errors."""


class ConfigError(MaxhomError):
    """A configuration document is malformed or uses unknown keys."""


class EmptyMeasure(MaxhomError):
    """A measure specification has no components or zero total mass."""


class RankMismatch(MaxhomError):
    """A field or coefficient array has the wrong component rank."""


class CutoffTooSmall(MaxhomError):
    """A frequency cutoff is too small for the requested operation."""


class NotPositiveDefinite(MaxhomError):
    """A coefficient or assembled form fails a positivity requirement."""


class SingularSystem(MaxhomError):
    """A linear system is singular beyond the tolerated null space."""


class DegenerateSubspace(MaxhomError):
    """A constructed subspace has lower dimension than required."""


class SingularSymbol(MaxhomError):
    """A symbol matrix is singular where an inverse was requested."""


class SingularProjection(MaxhomError):
    """A Gram matrix used for a projection is numerically singular."""


class ConstraintInfeasible(MaxhomError):
    """Linear constraints of a saddle problem are inconsistent."""


class SolverDiverged(MaxhomError):
    """An iterative solver exhausted its budget without converging."""


class IncompleteFamily(MaxhomError):
    """A family of solves is missing members needed by a later stage."""


class DegenerateFit(MaxhomError):
    """A rate fit was requested on degenerate data (zeros or one point)."""


class PropertyViolation(MaxhomError):
    """A structural invariant checked at runtime does not hold."""
