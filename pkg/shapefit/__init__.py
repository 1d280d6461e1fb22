"""Top-level package for shapefit."""

__author__ = "The shapefit developers"
__email__ = ""
__version__ = '0.1.0'

from .shapefit import ShapeFit  # noqa: E402
