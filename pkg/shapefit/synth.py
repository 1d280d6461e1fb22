"""
Synthetic corresponded templates and ground-truth target masks.

Templates are subdivided icospheres stretched into an ellipsoid and then
pushed along the ellipsoid's vertex normals by a smooth random radial
field built from real spherical harmonics up to a band limit. All
templates share the icosphere connectivity, so vertex i corresponds
across the whole set.
"""
import logging
import math
from dataclasses import dataclass, fields, asdict

import numpy as np
from scipy.special import lpmv

from shapefit.exceptions import SelfIntersectionError
from shapefit.mesh import TriMesh, self_intersections, vertex_normals
from shapefit.shape_model import FitParams, PoseParams, ShapeModel, instantiate
from shapefit.volume import BinaryVolume, GridSpec, voxelize

logging.basicConfig(format='%(levelname)s - %(message)s', level=logging.INFO)
logger = logging.getLogger(__name__)

# targets with fewer foreground voxels are too coarse to fit reliably
MIN_TARGET_VOXELS = 100

_GOLDEN = (1.0 + np.sqrt(5.0)) / 2.0
_ICOSAHEDRON_VERTICES = np.array([
    [-1.0, _GOLDEN, 0.0], [1.0, _GOLDEN, 0.0], [-1.0, -_GOLDEN, 0.0], [1.0, -_GOLDEN, 0.0],
    [0.0, -1.0, _GOLDEN], [0.0, 1.0, _GOLDEN], [0.0, -1.0, -_GOLDEN], [0.0, 1.0, -_GOLDEN],
    [_GOLDEN, 0.0, -1.0], [_GOLDEN, 0.0, 1.0], [-_GOLDEN, 0.0, -1.0], [-_GOLDEN, 0.0, 1.0],
])
_ICOSAHEDRON_FACES = [
    [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
    [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
    [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
    [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
]


@dataclass(frozen=True)
class SynthConfig:
    semi_axes: tuple = (12.0, 7.0, 6.0)
    subdivision: int = 3
    template_count: int = 16
    amplitude: float = 1.0
    band_limit: int = 4
    seed: int = 0
    target_count: int = 2
    spacing: tuple = (1.0, 1.0, 1.0)
    margin: float = 4.0
    target_b_clip: float = 2.0
    target_translation: float = 3.0
    target_rotation: float = 0.1
    target_scale: float = 0.05

    def __post_init__(self):
        semi_axes = tuple(float(a) for a in self.semi_axes)
        spacing = tuple(float(s) for s in self.spacing)
        object.__setattr__(self, 'semi_axes', semi_axes)
        object.__setattr__(self, 'spacing', spacing)
        checks = {
            'semi_axes': len(semi_axes) == 3 and all(a > 0 for a in semi_axes),
            'subdivision': 0 <= self.subdivision <= 6,
            'template_count': self.template_count >= 2,
            'amplitude': self.amplitude >= 0,
            'band_limit': self.band_limit >= 0,
            'seed': 0 <= self.seed < 2 ** 64,
            'target_count': self.target_count >= 0,
            'spacing': len(spacing) == 3 and all(s > 0 for s in spacing),
            'margin': self.margin >= 0,
            'target_b_clip': self.target_b_clip >= 0,
            'target_translation': self.target_translation >= 0,
            'target_rotation': self.target_rotation >= 0,
            'target_scale': 0 <= self.target_scale < 1,
        }
        for key, ok in checks.items():
            if not ok:
                raise ValueError(f"invalid synth config value {key}={getattr(self, key)!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d['semi_axes'] = list(self.semi_axes)
        d['spacing'] = list(self.spacing)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> 'SynthConfig':
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown synth config keys {sorted(unknown)}")
        return cls(**d)


def icosphere(level: int):
    """
    unit icosphere after `level` midpoint subdivisions, 10 * 4**level + 2 vertices,
    faces oriented outward
    @return: (vertices, faces)
    """
    vertices = [v / np.linalg.norm(v) for v in _ICOSAHEDRON_VERTICES]
    faces = [list(f) for f in _ICOSAHEDRON_FACES]
    for _ in range(level):
        midpoints = {}

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in midpoints:
                m = vertices[i] + vertices[j]
                vertices.append(m / np.linalg.norm(m))
                midpoints[key] = len(vertices) - 1
            return midpoints[key]

        subdivided = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            subdivided += [[a, ab, ca], [ab, b, bc], [bc, c, ca], [ab, bc, ca]]
        faces = subdivided
    return np.array(vertices), np.array(faces, dtype=np.int64)


def real_spherical_harmonics(directions, band_limit: int) -> np.ndarray:
    """
    orthonormal real spherical harmonics Y_lm for l = 0..band_limit, evaluated at unit directions
    @return: (n, (band_limit + 1)**2) matrix
    """
    directions = np.asarray(directions, dtype=np.float64).reshape(-1, 3)
    directions = directions / np.linalg.norm(directions, axis=1, keepdims=True)
    cos_theta = np.clip(directions[:, 2], -1.0, 1.0)
    phi = np.arctan2(directions[:, 1], directions[:, 0])
    columns = []
    for degree in range(band_limit + 1):
        for order in range(-degree, degree + 1):
            m = abs(order)
            norm = math.sqrt((2 * degree + 1) / (4 * math.pi)
                             * math.factorial(degree - m) / math.factorial(degree + m))
            legendre = lpmv(m, degree, cos_theta)
            if order > 0:
                columns.append(math.sqrt(2) * norm * legendre * np.cos(m * phi))
            elif order < 0:
                columns.append(math.sqrt(2) * norm * legendre * np.sin(m * phi))
            else:
                columns.append(norm * legendre)
    return np.stack(columns, axis=1)


def base_ellipsoid(config: SynthConfig):
    """(directions, ellipsoid mesh) of the undeformed base shape"""
    directions, faces = icosphere(config.subdivision)
    return directions, TriMesh(directions * np.asarray(config.semi_axes), faces)


def make_templates(config: SynthConfig):
    """
    template_count corresponded meshes: the base ellipsoid displaced along its normals by
    amplitude-scaled random band-limited radial fields (RMS over the sphere equals amplitude)
    """
    directions, base = base_ellipsoid(config)
    normals = vertex_normals(base)
    basis = real_spherical_harmonics(directions, config.band_limit)
    gain = config.amplitude * math.sqrt(4 * math.pi / basis.shape[1])
    rng = np.random.default_rng(config.seed)

    templates = []
    for index in range(config.template_count):
        coefficients = rng.standard_normal(basis.shape[1])
        radial = gain * (basis @ coefficients)
        mesh = TriMesh(base.vertices + radial[:, None] * normals, base.faces)
        crossings = self_intersections(mesh)
        if crossings:
            raise SelfIntersectionError(f"template {index} folds onto itself ({crossings} intersecting face pairs); "
                                        f"lower the deformation amplitude {config.amplitude}")
        templates.append(mesh)
    logger.info(f"generated {len(templates)} templates with {base.n_vertices} corresponded vertices")
    return templates


def make_target(model: ShapeModel, b, pose: PoseParams, grid: GridSpec):
    """
    voxelize the model instance for (b, pose)
    @return: (target mask, generating FitParams)
    """
    params = FitParams(b, pose)
    target = voxelize(instantiate(model, params), grid)
    if target.count < MIN_TARGET_VOXELS:
        logger.warning(f"target has only {target.count} foreground voxels, the grid is likely too coarse "
                       f"for the shape")
    return target, params


def target_grid(model: ShapeModel, config: SynthConfig) -> GridSpec:
    """one grid for every target, covering the mean shape and the largest pose offset"""
    extent = np.abs(model.mean.points() - model.centroid).max()
    reach = extent * config.target_scale + config.target_translation + extent * math.sin(
        min(config.target_rotation * math.sqrt(3), math.pi / 2))
    return GridSpec.enclosing(model.mean.points(), config.spacing, margin=config.margin + reach)


def make_targets(model: ShapeModel, config: SynthConfig):
    """
    target_count held-out targets with b ~ N(0, lambda) clipped to +- target_b_clip sqrt(lambda)
    and small random poses around the identity
    @return: list of (BinaryVolume, FitParams)
    """
    rng = np.random.default_rng([config.seed, 1])
    grid = target_grid(model, config)
    sd = np.sqrt(model.eigenvalues)
    targets = []
    for _ in range(config.target_count):
        b = np.clip(rng.standard_normal(model.t) * sd, -config.target_b_clip * sd, config.target_b_clip * sd)
        pose = PoseParams(
            translation=tuple(rng.uniform(-config.target_translation, config.target_translation, 3)),
            rotation=tuple(rng.uniform(-config.target_rotation, config.target_rotation, 3)),
            scale=float(1.0 + rng.uniform(-config.target_scale, config.target_scale)),
        )
        targets.append(make_target(model, b, pose, grid))
    return targets
