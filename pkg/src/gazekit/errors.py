"""Exception types shared across the toolkit."""


class GazekitError(Exception):
    """Base class for all toolkit errors."""


class InvalidInputError(GazekitError):
    """Input violates a documented precondition."""


class DegenerateDesignError(GazekitError):
    """A least-squares design matrix is singular or too ill-conditioned."""


class UndefinedDisparityError(GazekitError):
    """1D registration has zero derivative everywhere; no disparity exists."""


class RegistrationLostError(GazekitError):
    """2D registration cannot continue (flat patch or window left the frame)."""


class NoIntersectionError(GazekitError):
    """Line is parallel to the plane."""


class DegenerateGeometryError(GazekitError):
    """Geometric construction is degenerate (e.g. line lies in the plane)."""


class IngestError(GazekitError):
    """A dataset on disk is malformed or incomplete."""
