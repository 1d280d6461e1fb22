"""Tests for `shapefit.metrics`."""

import numpy as np
import pytest

from shapefit.exceptions import EmptyMaskError, GridMismatchError
from shapefit.mesh import marching_cubes
from shapefit.metrics import EvaluationReport, dsc, evaluate, hausdorff, report_table
from shapefit.volume import BinaryVolume, GridSpec, boundary_voxels


def brute_force_hausdorff(a, b):
    pa, pb = boundary_voxels(a), boundary_voxels(b)
    distances = np.linalg.norm(pa[:, None, :] - pb[None, :, :], axis=2)
    return max(distances.min(axis=1).max(), distances.min(axis=0).max())


def block(grid, low, high):
    data = np.zeros(grid.dims, dtype=bool)
    data[tuple(slice(lo, hi) for lo, hi in zip(low, high))] = True
    return BinaryVolume(grid, data)


@pytest.fixture
def grid():
    return GridSpec((8, 8, 8))


def test_dsc_identities(grid):
    a = block(grid, (0, 0, 0), (2, 2, 2))
    assert dsc(a, a) == 1.0
    assert dsc(a, block(grid, (4, 4, 4), (6, 6, 6))) == 0.0
    assert dsc(a, block(grid, (1, 0, 0), (3, 2, 2))) == 0.5
    assert dsc(BinaryVolume.empty(grid), BinaryVolume.empty(grid)) == 1.0


def test_dsc_requires_matching_grids(grid):
    a = block(grid, (0, 0, 0), (2, 2, 2))
    shifted = GridSpec(grid.dims, origin=(1.0, 0.0, 0.0))
    with pytest.raises(GridMismatchError):
        dsc(a, BinaryVolume(shifted, a.data))


def test_hausdorff_identities(grid):
    a = block(grid, (1, 1, 1), (4, 4, 4))
    assert hausdorff(a, a) == 0.0
    single = block(grid, (1, 1, 1), (2, 2, 2))
    other = block(grid, (4, 1, 1), (5, 2, 2))
    assert hausdorff(single, other) == 3.0


def test_hausdorff_of_concentric_cubes(grid):
    inner = block(grid, (2, 2, 2), (5, 5, 5))
    outer = block(grid, (1, 1, 1), (6, 6, 6))
    assert hausdorff(inner, outer) == pytest.approx(np.sqrt(3.0))
    assert hausdorff(inner, outer) == pytest.approx(brute_force_hausdorff(inner, outer))


def test_hausdorff_matches_brute_force(rng):
    grid = GridSpec((10, 10, 10), spacing=(1.0, 0.5, 2.0))
    for _ in range(5):
        a = BinaryVolume(grid, rng.random(grid.dims) < 0.2)
        b = BinaryVolume(grid, rng.random(grid.dims) < 0.2)
        assert hausdorff(a, b) == pytest.approx(brute_force_hausdorff(a, b))
        assert hausdorff(a, b, percentile=95) <= hausdorff(a, b)


def test_metrics_are_symmetric(rng):
    grid = GridSpec((9, 9, 9), spacing=(1.0, 0.5, 2.0))
    for _ in range(5):
        a = BinaryVolume(grid, rng.random(grid.dims) < 0.3)
        b = BinaryVolume(grid, rng.random(grid.dims) < 0.3)
        assert dsc(a, b) == dsc(b, a)
        assert hausdorff(a, b) == hausdorff(b, a)
        assert hausdorff(a, b, percentile=90) == hausdorff(b, a, percentile=90)


def test_hausdorff_scales_with_spacing(rng):
    grid = GridSpec((9, 9, 9), spacing=(1.0, 0.5, 2.0), origin=(2.0, -1.0, 0.0))
    scaled = GridSpec(grid.dims, spacing=tuple(3.0 * s for s in grid.spacing), origin=grid.origin)
    for _ in range(5):
        a_data, b_data = rng.random(grid.dims) < 0.2, rng.random(grid.dims) < 0.2
        distance = hausdorff(BinaryVolume(grid, a_data), BinaryVolume(grid, b_data))
        assert hausdorff(BinaryVolume(scaled, a_data), BinaryVolume(scaled, b_data)) == pytest.approx(3.0 * distance)


def test_hausdorff_of_empty_mask(grid):
    with pytest.raises(EmptyMaskError):
        hausdorff(BinaryVolume.empty(grid), block(grid, (0, 0, 0), (2, 2, 2)))


def test_evaluate_marching_cubes_surface(ball):
    report = evaluate(marching_cubes(ball), ball, surface_id="ball")
    assert report.dsc >= 0.99
    assert report.hd <= np.sqrt(3.0)
    assert report.gl > 0.0
    assert report.to_dict()["surface"] == "ball"


def test_evaluate_translated_surface(ball):
    report = evaluate(marching_cubes(ball).translated((5.0, 0.0, 0.0)), ball)
    assert report.hd >= 5.0 - np.sqrt(3.0)
    assert report.dsc < 0.99


def test_evaluate_empty_reference(ball):
    with pytest.raises(EmptyMaskError):
        evaluate(marching_cubes(ball), BinaryVolume.empty(ball.grid))


def test_evaluate_mismatched_grid(ball):
    other = GridSpec(ball.dims, spacing=(2.0, 2.0, 2.0), origin=ball.origin)
    with pytest.raises(GridMismatchError):
        evaluate(marching_cubes(ball), ball, grid=other)


def test_report_range_checks(grid):
    with pytest.raises(ValueError):
        EvaluationReport(dsc=1.5, hd=0.0, gl=0.0, surface_id="a", reference_id="b", grid=grid)
    with pytest.raises(ValueError):
        EvaluationReport(dsc=0.5, hd=np.nan, gl=0.0, surface_id="a", reference_id="b", grid=grid)


def test_report_table(grid):
    reports = [EvaluationReport(0.9, 2.0, 100.0, "left", "ref", grid),
               EvaluationReport(0.8, 4.0, 120.0, "right", "ref", grid)]
    table = report_table(reports)
    assert list(table.columns) == ["case", "DSC", "HD", "GL"]
    assert table["case"].tolist() == ["left", "right", "mean ± std"]
    assert table.iloc[-1]["DSC"] == f"0.850 ± {np.std([0.9, 0.8], ddof=1):.3f}"
    assert table.iloc[-1]["HD"] == f"3.000 ± {np.std([2.0, 4.0], ddof=1):.3f}"
    assert report_table([]).empty
