"""Tests for `shapefit.volume`."""

import numpy as np
import pytest

from shapefit.exceptions import TopologyError, VolumeFormatError
from shapefit.mesh import TriMesh, enclosed_volume
from shapefit.synth import icosphere
from shapefit.volume import (BinaryVolume, GridSpec, add_salt_noise, boundary_voxels, contains, load_volume,
                             point_in_mesh, save_volume, voxelize, winding_number)
from tests.conftest import make_cube


def random_closed_mesh(rng):
    """star-shaped perturbed icosphere, never self-intersecting"""
    directions, faces = icosphere(2)
    radii = rng.uniform(5.0, 11.0) * (1.0 + 0.3 * rng.random(len(directions)))
    return TriMesh(directions * radii[:, None] + rng.uniform(-2.0, 2.0, size=3), faces)


def test_grid_validation():
    with pytest.raises(ValueError):
        GridSpec((0, 2, 2))
    with pytest.raises(ValueError):
        GridSpec((2, 2, 2), spacing=(1.0, -1.0, 1.0))
    grid = GridSpec((2, 3, 4), spacing=(0.5, 1.0, 2.0), origin=(1.0, 0.0, -1.0))
    assert grid.n_voxels == 24
    assert grid.voxel_volume == pytest.approx(1.0)
    assert GridSpec.from_dict(grid.to_dict()) == grid


def test_enclosing_grid_covers_points():
    points = np.array([[-3.2, 0.0, 1.0], [4.9, 2.5, 7.0]])
    grid = GridSpec.enclosing(points, spacing=(1.0, 1.0, 1.0), margin=2.0)
    low = np.asarray(grid.origin)
    high = low + (np.asarray(grid.dims) - 1) * np.asarray(grid.spacing)
    assert np.all(low <= points.min(axis=0) - 2.0)
    assert np.all(high >= points.max(axis=0) + 2.0)


def test_load_volume_of_ones(tmp_path):
    grid = GridSpec((2, 2, 2))
    save_volume(BinaryVolume(grid, np.ones((2, 2, 2), dtype=bool)), tmp_path / "ones.mhd")
    volume = load_volume(tmp_path / "ones.mhd")
    assert volume.count == 8
    assert volume.grid == grid


@pytest.mark.parametrize("name", ["mask.mhd", "mask.mha"])
def test_save_load_round_trip(tmp_path, rng, name):
    grid = GridSpec((5, 4, 3), spacing=(0.5, 1.0, 1.5), origin=(-1.0, 2.0, 3.25))
    volume = BinaryVolume(grid, rng.random(grid.dims) < 0.4)
    save_volume(volume, tmp_path / name)
    loaded = load_volume(tmp_path / name)
    assert loaded.grid == grid
    assert np.array_equal(loaded.data, volume.data)


def test_save_volume_is_x_fastest(tmp_path):
    data = np.zeros((3, 2, 2), dtype=bool)
    data[1, 0, 0] = True
    save_volume(BinaryVolume(GridSpec((3, 2, 2)), data), tmp_path / "mask.mhd")
    raw = (tmp_path / "mask.raw").read_bytes()
    assert len(raw) == 12
    assert raw.index(1) == 1


def test_short_raw_file_is_rejected(tmp_path):
    save_volume(BinaryVolume(GridSpec((4, 4, 4)), np.ones((4, 4, 4), dtype=bool)), tmp_path / "mask.mhd")
    raw = tmp_path / "mask.raw"
    raw.write_bytes(raw.read_bytes()[:-5])
    with pytest.raises(VolumeFormatError) as e:
        load_volume(tmp_path / "mask.mhd")
    assert "59" in str(e.value) and "64" in str(e.value)


def test_unsupported_element_type(tmp_path):
    save_volume(BinaryVolume(GridSpec((2, 2, 2)), np.ones((2, 2, 2), dtype=bool)), tmp_path / "mask.mhd")
    header = tmp_path / "mask.mhd"
    header.write_text(header.read_text().replace("MET_UCHAR", "MET_FLOAT"))
    with pytest.raises(VolumeFormatError):
        load_volume(header)


def test_voxelize_cube():
    grid = GridSpec((2, 2, 2), origin=(0.5, 0.5, 0.5))
    volume = voxelize(make_cube(0.0, 2.0), grid)
    assert volume.count == 8


def test_voxelize_mesh_outside_grid():
    grid = GridSpec((4, 4, 4))
    assert voxelize(make_cube(10.0, 12.0), grid).count == 0


def test_voxelize_ball():
    directions, faces = icosphere(4)
    ball = TriMesh(directions * 10.0, faces)
    grid = GridSpec((25, 25, 25), origin=(-12.0, -12.0, -12.0))
    volume = voxelize(ball, grid)
    assert volume.count == pytest.approx(4.0 / 3.0 * np.pi * 1000.0, rel=0.02)


def test_voxelize_is_translation_invariant(rng):
    spacing = (1.0, 0.5, 0.75)
    for _ in range(5):
        mesh = random_closed_mesh(rng)
        grid = GridSpec.enclosing(mesh.vertices, spacing, margin=2.0)
        steps = rng.integers(-5, 6, size=3)
        shift = steps * np.asarray(spacing)
        moved_grid = GridSpec(grid.dims, grid.spacing, np.asarray(grid.origin) + shift)
        assert np.array_equal(voxelize(mesh.translated(shift), moved_grid).data, voxelize(mesh, grid).data)


def test_voxelized_volume_converges_with_spacing():
    directions, faces = icosphere(3)
    ball = TriMesh(directions * 10.0, faces)
    exact = enclosed_volume(ball)
    errors = []
    for size in (2.0, 0.5):
        grid = GridSpec.enclosing(ball.vertices, (size, size, size), margin=2.0)
        volume = voxelize(ball, grid)
        errors.append(abs(volume.count * grid.voxel_volume - exact))
    assert errors[1] < errors[0]
    assert errors[1] < 0.01 * exact


def test_voxelize_requires_closed_mesh():
    open_mesh = TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])
    with pytest.raises(TopologyError):
        voxelize(open_mesh, GridSpec((2, 2, 2)))


def test_voxelize_agrees_with_point_in_mesh(rng):
    for _ in range(25):
        mesh = random_closed_mesh(rng)
        grid = GridSpec.enclosing(mesh.vertices, margin=1.0)
        spacing = tuple(np.ptp(mesh.vertices, axis=0).max() * 1.1 / 31 for _ in range(3))
        grid = GridSpec((32, 32, 32), spacing=spacing, origin=np.asarray(grid.origin))
        volume = voxelize(mesh, grid)
        centres = grid.to_world(np.indices(grid.dims).reshape(3, -1).T)
        oracle = contains(mesh, centres).reshape(grid.dims)
        assert np.array_equal(volume.data, oracle)
        for idx in rng.choice(len(centres), size=5, replace=False):
            assert point_in_mesh(mesh, centres[idx]) == volume.data.reshape(-1)[idx]


def test_point_in_cube():
    cube = make_cube(0.0, 2.0)
    assert point_in_mesh(cube, (1, 1, 1))
    assert not point_in_mesh(cube, (3, 1, 1))


def test_point_in_octahedron(octahedron):
    assert point_in_mesh(octahedron, (0.9, 0.0, 0.0))
    assert not point_in_mesh(octahedron, (0.6, 0.6, 0.0))
    assert winding_number(octahedron, [[0.1, 0.2, 0.3]])[0] == pytest.approx(1.0)


def test_point_in_mesh_requires_closed_mesh():
    with pytest.raises(TopologyError):
        point_in_mesh(TriMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]]), (0, 0, 0))


def test_boundary_of_single_voxel():
    data = np.zeros((3, 3, 3), dtype=bool)
    data[1, 1, 1] = True
    points = boundary_voxels(BinaryVolume(GridSpec((3, 3, 3), origin=(10.0, 0.0, 0.0)), data))
    assert points.tolist() == [[11.0, 1.0, 1.0]]


def test_boundary_of_solid_block():
    data = np.zeros((5, 5, 5), dtype=bool)
    data[1:4, 1:4, 1:4] = True
    points = boundary_voxels(BinaryVolume(GridSpec((5, 5, 5)), data))
    assert len(points) == 26
    assert [2.0, 2.0, 2.0] not in points.tolist()


def test_boundary_of_full_grid_is_the_grid_border():
    grid = GridSpec((4, 5, 6), spacing=(1.0, 2.0, 0.5), origin=(1.0, -2.0, 3.0))
    points = boundary_voxels(BinaryVolume(grid, np.ones(grid.dims, dtype=bool)))
    index = np.indices(grid.dims).reshape(3, -1).T
    on_border = ((index == 0) | (index == np.asarray(grid.dims) - 1)).any(axis=1)
    expected = grid.to_world(index[on_border])
    assert len(points) == on_border.sum() == 4 * 5 * 6 - 2 * 3 * 4
    assert sorted(map(tuple, points.tolist())) == sorted(map(tuple, expected.tolist()))


def test_boundary_of_empty_volume():
    assert len(boundary_voxels(BinaryVolume.empty(GridSpec((3, 3, 3))))) == 0


def test_salt_noise_is_seeded():
    empty = BinaryVolume.empty(GridSpec((20, 20, 20)))
    noisy = add_salt_noise(empty, 0.05, seed=1)
    assert 0.03 * 8000 < noisy.count < 0.07 * 8000
    assert np.array_equal(noisy.data, add_salt_noise(empty, 0.05, seed=1).data)
