"""Exception types raised across the pipeline."""


class TabletopError(Exception):
    """Base class for all package-specific errors."""


class MissingFile(TabletopError, FileNotFoundError):
    pass


class MalformedHeader(TabletopError, ValueError):
    """PCD header is missing, out of order, or inconsistent with the data."""


class NonAsciiData(TabletopError, ValueError):
    """PCD file declares a DATA encoding other than ascii."""


class IoFailure(TabletopError, OSError):
    pass


class RejectedInvalidPoint(TabletopError, ValueError):
    """A NaN/Inf coordinate was about to be serialized."""


class NonPositiveLeaf(TabletopError, ValueError):
    pass


class EmptyCloud(TabletopError, ValueError):
    pass


class AlphaOutOfRange(TabletopError, ValueError):
    pass


class InvalidBounds(TabletopError, ValueError):
    """A passthrough interval has min >= max."""


class DegenerateCloud(TabletopError, ValueError):
    """Fewer than 3 points, or all points collinear."""


class NoPlaneFound(TabletopError, RuntimeError):
    """Best RANSAC candidate fell below the minimum inlier fraction."""


class IndexOutOfRange(TabletopError, IndexError):
    pass


class NegativeRadius(TabletopError, ValueError):
    pass


class EmptyCluster(TabletopError, ValueError):
    pass


class BehindCamera(TabletopError, ValueError):
    """Point is behind (or on) the RGB camera plane."""


class FullyBehindCamera(TabletopError, ValueError):
    """No corner of the box projects in front of the camera."""


class DegenerateProjection(TabletopError, ValueError):
    """Projected box clamps to less than one pixel of area."""


class BoxOutOfBounds(TabletopError, ValueError):
    pass


class EmptyClass(TabletopError, ValueError):
    pass


class SingleClass(TabletopError, ValueError):
    pass


class ShapeMismatch(TabletopError, ValueError):
    """Patch dimensions do not match the classifier input size."""


class ProtocolError(TabletopError, RuntimeError):
    """Remote classifier sent an invalid or mismatched response."""


class InvalidSpec(TabletopError, ValueError):
    """Synthetic scene violates a gap, frustum, or geometry constraint."""


class StreamEnded(TabletopError, RuntimeError):
    """Frame stream ran dry before the acquisition target was met."""


class MalformedManifestRow(TabletopError, ValueError):
    pass


class ConfigError(TabletopError, ValueError):
    pass
