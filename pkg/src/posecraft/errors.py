"""Exception hierarchy shared by all posecraft modules."""


class PoseCraftError(Exception):
    """Base class for every error raised by this package."""


class FormatError(PoseCraftError):
    """An input file is malformed or violates its declared schema."""


class LayoutError(PoseCraftError):
    """Pose layouts disagree, or a landmark count does not match its layout."""


class SelectionError(PoseCraftError):
    """Reference-frame selection found no candidate with a finite objective."""


class SingularTransformError(PoseCraftError):
    """A planar affine map with zero determinant cannot be inverted."""


class DegenerateRegionError(PoseCraftError):
    """No valid landmarks remain to form a bounding region on the grid."""
