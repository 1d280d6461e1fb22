"""Exceptions raised by shapefit.

The cli maps them onto exit codes: computation failures exit with 1,
usage and file problems exit with 2.
"""


class ShapeFitError(Exception):
    """Base class of every error raised by shapefit."""


class UsageError(ShapeFitError):
    pass


class MeshFormatError(ShapeFitError, ValueError):
    """A PLY file could not be parsed. The message names the file and line."""

    def __init__(self, path, line_number, message):
        self.path = str(path)
        self.line_number = line_number
        super().__init__(f"{self.path}:{line_number}: {message}")


class VolumeFormatError(ShapeFitError, ValueError):
    pass


class InvalidMeshError(ShapeFitError, ValueError):
    pass


class ModelError(ShapeFitError, ValueError):
    pass


class TopologyError(ShapeFitError):
    pass


class SelfIntersectionError(ShapeFitError):
    pass


class DegenerateGeometryError(ShapeFitError):
    pass


class GridMismatchError(ShapeFitError):
    pass


class EmptyMaskError(ShapeFitError):
    pass
