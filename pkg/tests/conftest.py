import numpy as np
import pytest

from shapefit.mesh import TriMesh
from shapefit.volume import BinaryVolume, GridSpec


def make_cube(low=0.0, high=2.0):
    corners = [(x, y, z) for x in (low, high) for y in (low, high) for z in (low, high)]
    faces = [
        [0, 1, 3], [0, 3, 2],   # x = low
        [4, 6, 7], [4, 7, 5],   # x = high
        [0, 4, 5], [0, 5, 1],   # y = low
        [2, 3, 7], [2, 7, 6],   # y = high
        [0, 2, 6], [0, 6, 4],   # z = low
        [1, 5, 7], [1, 7, 3],   # z = high
    ]
    return TriMesh(np.array(corners, dtype=float), faces)


def make_octahedron(center=(0.0, 0.0, 0.0), radius=1.0):
    vertices = np.array([[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]], dtype=float)
    faces = []
    for x in (0, 1):
        for y in (2, 3):
            for z in (4, 5):
                negatives = (x == 1) + (y == 3) + (z == 5)
                faces.append([x, y, z] if negatives % 2 == 0 else [x, z, y])
    return TriMesh(vertices * radius + np.asarray(center), faces)


def make_ball(radius=10.0, spacing=1.0, margin=3):
    """voxelized ball centred at the world origin"""
    half = int(np.ceil(radius / spacing)) + margin
    grid = GridSpec(dims=(2 * half + 1,) * 3, spacing=(spacing,) * 3, origin=(-half * spacing,) * 3)
    x, y, z = np.meshgrid(*(grid.axis_centers(a) for a in range(3)), indexing='ij')
    return BinaryVolume(grid, x ** 2 + y ** 2 + z ** 2 <= radius ** 2)


@pytest.fixture
def cube():
    return make_cube()


@pytest.fixture
def octahedron():
    return make_octahedron()


@pytest.fixture
def ball():
    return make_ball()


@pytest.fixture
def rng():
    return np.random.default_rng(2020)
