"""Exception types raised by the association library."""


class CdogError(Exception):
    """Base class for all library errors."""


class GeometryError(CdogError):
    """Base class for projective-geometry failures."""


class DegenerateRig(GeometryError):
    """Two cameras share a center, so their epipolar geometry is undefined."""


class DegenerateLine(GeometryError):
    """An epipolar line has vanishing (a, b) coefficients (point at the epipole)."""


class BehindCamera(GeometryError):
    """A 3D point has non-positive depth in a camera frame."""


class DegenerateConfiguration(GeometryError):
    """Triangulation rays are parallel or otherwise rank deficient."""


class SkipGroup(CdogError):
    """A group is too small for pairwise back-projection scoring."""


class SceneFormatError(CdogError):
    """A scene or association file does not match the expected schema."""
