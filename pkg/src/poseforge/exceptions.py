"""Exception hierarchy.

Everything raised on purpose by this package derives from PoseForgeError, so
callers can catch one type at the boundary. ValidationError covers malformed
user input (bad rotation matrices, out-of-range indices, dimension mismatches);
the solver/fitting errors signal well-defined geometric failure modes.
"""


class PoseForgeError(Exception):
    """Base class for all errors raised by poseforge."""


class ValidationError(PoseForgeError, ValueError):
    """Input violates a documented precondition or type invariant."""


class NonPositiveDepth(PoseForgeError):
    """A point to be projected lies on or behind the camera plane (Z <= 0)."""


class DegenerateMesh(ValidationError):
    """Mesh has too few vertices for the requested operation."""


class DimensionMismatch(ValidationError):
    """Array shape does not match the camera / map dimensions."""


class EmptyProjection(ValidationError):
    """The rendered object covers no pixels."""


class EmptyModel(ValidationError):
    """Model has no vertices to measure an error over."""


class ParseError(PoseForgeError):
    """A file could not be parsed.

    Carries the offset at which parsing failed when known: a byte offset
    for binary formats, a line number for line-oriented ones (the message
    says which).
    """

    def __init__(self, message, path=None, offset=None):
        detail = message
        if path is not None:
            detail = "%s: %s" % (path, detail)
        if offset is not None:
            detail = "%s (offset %d)" % (detail, offset)
        super().__init__(detail)
        self.path = path
        self.offset = offset


class UnsupportedElement(ParseError):
    """A mesh file uses a format feature the loader does not handle."""


class MissingField(ParseError):
    """A structured file lacks a required field."""


class TooFewVertices(ValidationError):
    """Mesh has fewer vertices than the requested sample count."""


class EmptyFragment(ValidationError):
    """A surface fragment owns zero vertices (fragment count too large)."""


class BadFragmentIndex(ValidationError):
    """Fragment index outside the atlas range."""


class TooFewPoints(ValidationError):
    """A solver was given fewer correspondences than its minimal sample."""


class DegenerateSample(PoseForgeError):
    """A minimal sample is degenerate (collinear points / tiny triangle)."""


class NoSolution(PoseForgeError):
    """A minimal solver found no pose satisfying its constraints."""


class NearPlanarConfiguration(PoseForgeError):
    """The 3D points span (close to) a plane; the solver cannot proceed."""


class NoHypothesis(PoseForgeError):
    """Robust fitting terminated without producing a single valid pose."""
