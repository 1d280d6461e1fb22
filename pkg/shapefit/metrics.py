import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd
from sklearn.neighbors import KDTree

from shapefit.exceptions import GridMismatchError, EmptyMaskError
from shapefit.mesh import TriMesh, surface_gl
from shapefit.volume import BinaryVolume, GridSpec, boundary_voxels, voxelize

logging.basicConfig(format='%(levelname)s - %(message)s', level=logging.INFO)
logger = logging.getLogger(__name__)

TABLE_COLUMNS = ("case", "DSC", "HD", "GL")


@dataclass(frozen=True)
class EvaluationReport:
    dsc: float
    hd: float
    gl: float
    surface_id: str
    reference_id: str
    grid: GridSpec
    hd_percentile: Optional[float] = None

    def __post_init__(self):
        if not all(np.isfinite([self.dsc, self.hd, self.gl])):
            raise ValueError(f"non-finite evaluation values dsc={self.dsc} hd={self.hd} gl={self.gl}")
        if not 0.0 <= self.dsc <= 1.0 or self.hd < 0 or self.gl < 0:
            raise ValueError(f"evaluation values out of range dsc={self.dsc} hd={self.hd} gl={self.gl}")

    def to_dict(self) -> dict:
        return {
            "surface": self.surface_id,
            "reference": self.reference_id,
            "dsc": self.dsc,
            "hd": self.hd,
            "hd_percentile": self.hd_percentile,
            "gl": self.gl,
            "grid": self.grid.to_dict(),
        }


def _check_grids(a: BinaryVolume, b: BinaryVolume):
    if a.grid != b.grid:
        raise GridMismatchError(f"masks live on different grids: {a.grid} vs {b.grid}")


def dsc(a: BinaryVolume, b: BinaryVolume) -> float:
    """Dice similarity 2|A and B| / (|A| + |B|); two empty masks are identical, so 1"""
    _check_grids(a, b)
    total = a.count + b.count
    if total == 0:
        return 1.0
    return 2.0 * int(np.logical_and(a.data, b.data).sum()) / total


def directed_distances(source: np.ndarray, target: np.ndarray) -> np.ndarray:
    """distance from every source point to its nearest target point"""
    distances, _ = KDTree(target).query(source, k=1)
    return distances.ravel()


def hausdorff(a: BinaryVolume, b: BinaryVolume, percentile: Optional[float] = None) -> float:
    """
    symmetric Hausdorff distance in mm between the 6-connected boundary voxel centres of two masks
    @param percentile: use this percentile of each directed distance set instead of its maximum
    """
    _check_grids(a, b)
    points_a, points_b = boundary_voxels(a), boundary_voxels(b)
    if not len(points_a) or not len(points_b):
        raise EmptyMaskError("Hausdorff distance needs two nonempty masks")
    forward = directed_distances(points_a, points_b)
    backward = directed_distances(points_b, points_a)
    if percentile is None:
        return float(max(forward.max(), backward.max()))
    return float(max(np.percentile(forward, percentile), np.percentile(backward, percentile)))


def evaluate(surface: TriMesh, reference: BinaryVolume, grid: Optional[GridSpec] = None,
             surface_id: str = "surface", reference_id: str = "reference",
             percentile: Optional[float] = None) -> EvaluationReport:
    """
    compare the voxelization of a surface with a reference mask and measure the surface smoothness
    @param grid: voxelization grid, the reference grid when not given
    """
    grid = reference.grid if grid is None else grid
    if grid != reference.grid:
        raise GridMismatchError(f"evaluation grid {grid} differs from the reference grid {reference.grid}")
    if not reference.count:
        raise EmptyMaskError(f"reference mask {reference_id} is empty")
    candidate = voxelize(surface, grid)
    if not candidate.count:
        raise EmptyMaskError(f"surface {surface_id} voxelizes to an empty mask")
    report = EvaluationReport(
        dsc=dsc(candidate, reference),
        hd=hausdorff(candidate, reference, percentile=percentile),
        gl=surface_gl(surface),
        surface_id=surface_id,
        reference_id=reference_id,
        grid=grid,
        hd_percentile=percentile,
    )
    logger.info(f"{surface_id} vs {reference_id}: DSC={report.dsc:.4f} HD={report.hd:.3f} mm GL={report.gl:.3f}")
    return report


def report_table(reports) -> pd.DataFrame:
    """one row per case plus a mean +- std footer"""
    rows = [{"case": r.surface_id, "DSC": f"{r.dsc:.3f}", "HD": f"{r.hd:.3f}", "GL": f"{r.gl:.3f}"}
            for r in reports]
    if reports:
        values = pd.DataFrame([{"DSC": r.dsc, "HD": r.hd, "GL": r.gl} for r in reports])
        ddof = 1 if len(reports) > 1 else 0
        footer = {"case": "mean ± std"}
        for col in ("DSC", "HD", "GL"):
            footer[col] = f"{values[col].mean():.3f} ± {values[col].std(ddof=ddof):.3f}"
        rows.append(footer)
    return pd.DataFrame(rows, columns=list(TABLE_COLUMNS))
