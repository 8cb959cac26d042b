"""Exception types shared across the package."""


class VlasovCtrlError(Exception):
    """Base class for all package errors."""


class GridMismatch(VlasovCtrlError):
    """Operands live on different phase-space grids."""


class OutsideVelocityDomain(VlasovCtrlError):
    """Particle velocity lies outside the bounded velocity domain.

    Signals that the particle belongs in the escape tally, not in an
    occupation tensor.
    """


class NeutralityViolated(VlasovCtrlError):
    """Global charge neutrality is broken beyond tolerance.

    The cumulative-quadrature field solve assumes a vanishing total charge;
    a violation indicates corrupted particle bookkeeping upstream.
    """


class EscapeThresholdExceeded(VlasovCtrlError):
    """Fraction of velocity-escaped particles exceeded the configured bound."""


class EnvelopeViolation(VlasovCtrlError):
    """Rejection sampling found a proposal with g(y) > k*h(y)."""


class NonTermination(VlasovCtrlError):
    """Rejection sampling acceptance rate fell below the configured floor."""


class SolverBreakdown(VlasovCtrlError):
    """Direct elliptic solve failed; cannot happen for the SPD lift operator."""


class LineSearchFailed(VlasovCtrlError):
    """Armijo backtracking exhausted its budget twice (after a steepest restart)."""


class ConfigInvalid(VlasovCtrlError):
    """Configuration failed validation.

    Carries the offending field name so the CLI can report it.
    """

    def __init__(self, field: str, message: str):
        self.field = field
        self.message = message
        super().__init__(f"config field '{field}': {message}")


class InsufficientPeaks(VlasovCtrlError):
    """Damping-rate fit needs at least three local maxima in the window."""
