"""Unit test package for shapefit."""
