"""Point distribution model built from corresponded template surfaces.

Each template with n vertices is flattened into a shape vector
(x1, y1, z1, ..., xn, yn, zn). The model keeps the mean shape and the
leading eigenvectors of the 1/N covariance of the shape vectors; a shape
is reconstructed as mean + P b and then placed in image space by a
7 parameter similarity transform (translation, Z-Y-X Euler rotation,
isotropic scale about the centroid of the mean shape).
"""
import json
import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.spatial.transform import Rotation

from shapefit.exceptions import ModelError
from shapefit.mesh import TriMesh

logger = logging.getLogger(__name__)

MODEL_FORMAT = "shapefit-model-v1"


@dataclass(frozen=True, eq=False)
class ShapeVector:
    coords: np.ndarray

    def __post_init__(self):
        coords = np.array(self.coords, dtype=np.float64).ravel()
        if len(coords) % 3:
            raise ModelError(f"shape vector length {len(coords)} is not a multiple of 3")
        if not np.isfinite(coords).all():
            raise ModelError("shape vector has non-finite entries")
        coords.flags.writeable = False
        object.__setattr__(self, 'coords', coords)

    @property
    def n(self) -> int:
        return len(self.coords) // 3

    def points(self) -> np.ndarray:
        return self.coords.reshape(-1, 3)


@dataclass(frozen=True)
class PoseParams:
    """translation in mm, intrinsic Z-Y-X Euler angles (rx, ry, rz) in radians, isotropic scale"""
    translation: tuple = (0.0, 0.0, 0.0)
    rotation: tuple = (0.0, 0.0, 0.0)
    scale: float = 1.0

    def __post_init__(self):
        translation = tuple(float(v) for v in self.translation)
        rotation = tuple(float(v) for v in self.rotation)
        scale = float(self.scale)
        if len(translation) != 3 or len(rotation) != 3:
            raise ModelError("pose needs 3 translation and 3 rotation parameters")
        if not (np.isfinite(translation).all() and np.isfinite(rotation).all()):
            raise ModelError(f"pose parameters must be finite, got {translation} {rotation}")
        if not np.isfinite(scale) or scale <= 0:
            raise ModelError(f"pose scale must be > 0, got {scale}")
        object.__setattr__(self, 'translation', translation)
        object.__setattr__(self, 'rotation', rotation)
        object.__setattr__(self, 'scale', scale)

    @property
    def is_rigid_identity(self) -> bool:
        return self.scale == 1.0 and not any(self.rotation)

    def to_vector(self) -> np.ndarray:
        return np.array(self.translation + self.rotation + (self.scale,))

    @classmethod
    def from_vector(cls, vector) -> 'PoseParams':
        vector = np.asarray(vector, dtype=np.float64)
        return cls(tuple(vector[0:3]), tuple(vector[3:6]), float(vector[6]))

    def to_dict(self) -> dict:
        return {"translation": list(self.translation), "rotation": list(self.rotation), "scale": self.scale}

    @classmethod
    def from_dict(cls, d: dict) -> 'PoseParams':
        return cls(d.get('translation', (0.0, 0.0, 0.0)), d.get('rotation', (0.0, 0.0, 0.0)), d.get('scale', 1.0))


@dataclass(frozen=True, eq=False)
class FitParams:
    """the t + 7 search vector: shape weights b followed by the pose"""
    b: np.ndarray
    pose: PoseParams = field(default_factory=PoseParams)

    def __post_init__(self):
        b = np.array(self.b, dtype=np.float64).ravel()
        if not np.isfinite(b).all():
            raise ModelError("shape weights must be finite")
        b.flags.writeable = False
        object.__setattr__(self, 'b', b)

    @property
    def t(self) -> int:
        return len(self.b)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.b, self.pose.to_vector()])

    @classmethod
    def from_vector(cls, vector, t: int) -> 'FitParams':
        vector = np.asarray(vector, dtype=np.float64)
        if len(vector) != t + 7:
            raise ModelError(f"parameter vector has length {len(vector)}, expected t + 7 = {t + 7}")
        return cls(vector[:t], PoseParams.from_vector(vector[t:]))

    def to_dict(self) -> dict:
        return {"b": self.b.tolist(), "pose": self.pose.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> 'FitParams':
        return cls(d.get('b', []), PoseParams.from_dict(d.get('pose', {})))


@dataclass(frozen=True, eq=False)
class ShapeModel:
    """
    mean: mean shape vector
    modes: (3n, t) matrix P with orthonormal columns
    eigenvalues: t variances in mm^2, descending
    faces: connectivity shared by every template
    total_variance: sum of all eigenvalues of the covariance, kept modes or not
    """
    mean: ShapeVector
    modes: np.ndarray
    eigenvalues: np.ndarray
    faces: np.ndarray
    total_variance: float

    def __post_init__(self):
        eigenvalues = np.array(self.eigenvalues, dtype=np.float64).ravel()
        modes = np.array(self.modes, dtype=np.float64)
        if modes.size == 0:
            modes = np.zeros((len(self.mean.coords), 0))
        modes = modes.reshape(len(self.mean.coords), -1)
        if modes.shape[1] != len(eigenvalues):
            raise ModelError(f"{modes.shape[1]} modes but {len(eigenvalues)} eigenvalues")
        if len(eigenvalues) and (eigenvalues.min() <= 0 or np.any(np.diff(eigenvalues) > 0)):
            raise ModelError("eigenvalues must be positive and sorted in descending order")
        faces = np.array(self.faces, dtype=np.int64).reshape(-1, 3)
        for arr in (modes, eigenvalues, faces):
            arr.flags.writeable = False
        object.__setattr__(self, 'modes', modes)
        object.__setattr__(self, 'eigenvalues', eigenvalues)
        object.__setattr__(self, 'faces', faces)
        object.__setattr__(self, 'total_variance', float(self.total_variance))

    @property
    def n(self) -> int:
        return self.mean.n

    @property
    def t(self) -> int:
        return len(self.eigenvalues)

    @cached_property
    def centroid(self) -> np.ndarray:
        return self.mean.points().mean(axis=0)

    @property
    def explained_variance_ratio(self) -> np.ndarray:
        if self.total_variance <= 0:
            return np.zeros(self.t)
        return self.eigenvalues / self.total_variance

    def mean_mesh(self) -> TriMesh:
        return shape_to_mesh(self.mean, self.faces)

    def project(self, shape: ShapeVector) -> np.ndarray:
        """least-squares shape weights b = P^T (a - mean)"""
        return self.modes.T @ (shape.coords - self.mean.coords)


def assemble_shape_vector(mesh: TriMesh) -> ShapeVector:
    return ShapeVector(mesh.vertices.ravel())


def shape_to_mesh(shape: ShapeVector, faces) -> TriMesh:
    return TriMesh(shape.points(), faces)


def template_centroid_spread(templates) -> float:
    """largest distance (mm) between a template centroid and the mean of all centroids"""
    centroids = np.array([t.vertices.mean(axis=0) for t in templates])
    return float(np.linalg.norm(centroids - centroids.mean(axis=0), axis=1).max())


def build_model(templates, variance_fraction: float = 0.98) -> ShapeModel:
    """
    build the point distribution model of corresponded templates.

    The covariance S = 1/N sum (a_i - mean)(a_i - mean)^T is never formed: its nonzero
    eigenpairs are obtained from the N x N Gram matrix of the centered shape vectors,
    whose eigenvectors u map to eigenvectors D^T u of S with the same eigenvalue.
    @param templates: list of TriMesh sharing vertex count and faces
    @param variance_fraction: keep the fewest modes explaining at least this fraction of the variance
    @return: ShapeModel
    """
    templates = list(templates)
    if len(templates) < 2:
        raise ModelError(f"at least 2 templates are needed to build a shape model, got {len(templates)}")
    if not 0 < variance_fraction <= 1:
        raise ModelError(f"variance_fraction must be in (0, 1], got {variance_fraction}")
    reference = templates[0]
    for idx, template in enumerate(templates[1:], start=1):
        if template.n_vertices != reference.n_vertices:
            raise ModelError(f"template {idx} has {template.n_vertices} vertices, "
                             f"template 0 has {reference.n_vertices}")
        if not np.array_equal(template.faces, reference.faces):
            raise ModelError(f"template {idx} does not share the face connectivity of template 0")

    data = np.stack([assemble_shape_vector(t).coords for t in templates])
    n_templates = len(data)
    mean = data.mean(axis=0)
    centered = data - mean
    gram = centered @ centered.T / n_templates
    values, vectors = np.linalg.eigh(gram)
    order = np.argsort(values)[::-1]
    values, vectors = values[order], vectors[:, order]
    total_variance = float(max(np.trace(gram), 0.0))

    keep = values > total_variance * 1e-12
    values, vectors = values[keep], vectors[:, keep]
    modes = centered.T @ vectors
    if modes.shape[1]:
        modes /= np.linalg.norm(modes, axis=0)
        peak = np.abs(modes).argmax(axis=0)
        modes *= np.sign(modes[peak, np.arange(modes.shape[1])])

    t = 0
    if len(values):
        cumulative = np.cumsum(values) / total_variance
        t = min(int(np.searchsorted(cumulative, variance_fraction - 1e-12)) + 1, len(values))
    logger.info(f"built shape model from {n_templates} templates of {reference.n_vertices} points: "
                f"{t} of {len(values)} modes explain {np.sum(values[:t]) / total_variance if t else 0.0:.4f} "
                f"of the variance")
    return ShapeModel(ShapeVector(mean), modes[:, :t], values[:t], reference.faces, total_variance)


def reconstruct(model: ShapeModel, b) -> ShapeVector:
    """mean + P b"""
    b = np.asarray(b, dtype=np.float64).ravel()
    if len(b) != model.t:
        raise ModelError(f"expected {model.t} shape weights, got {len(b)}")
    return ShapeVector(model.mean.coords + model.modes @ b)


def rotation_matrix(rotation) -> np.ndarray:
    rx, ry, rz = rotation
    return Rotation.from_euler('ZYX', [rz, ry, rx]).as_matrix()


def apply_pose(shape: ShapeVector, pose: PoseParams, faces, center=None) -> TriMesh:
    """
    p -> R(rx, ry, rz) s (p - c) + c + translation, scale then rotate then translate.
    @param center: pose centre c, the centroid of shape when not given
    """
    points = shape.points()
    translation = np.asarray(pose.translation)
    if pose.is_rigid_identity:
        return TriMesh(points + translation, faces)
    c = points.mean(axis=0) if center is None else np.asarray(center, dtype=np.float64)
    moved = (pose.scale * (points - c)) @ rotation_matrix(pose.rotation).T + c + translation
    return TriMesh(moved, faces)


def instantiate(model: ShapeModel, params: FitParams) -> TriMesh:
    return apply_pose(reconstruct(model, params.b), params.pose, model.faces, center=model.centroid)


def save_model(model: ShapeModel, path):
    doc = {
        "format": MODEL_FORMAT,
        "n": model.n,
        "t": model.t,
        "total_variance": model.total_variance,
        "eigenvalues": model.eigenvalues.tolist(),
        "mean": model.mean.coords.tolist(),
        "modes": model.modes.T.tolist(),
        "faces": model.faces.tolist(),
    }
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(doc, f)


def load_model(path) -> ShapeModel:
    with open(path, 'r', encoding='utf-8') as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise ModelError(f"{path}: not a JSON document ({e})")
    if not isinstance(doc, dict) or doc.get('format') != MODEL_FORMAT:
        raise ModelError(f"{path}: unsupported model format {doc.get('format') if isinstance(doc, dict) else None}, "
                         f"expected {MODEL_FORMAT}")
    try:
        n, t = int(doc['n']), int(doc['t'])
        mean = ShapeVector(doc['mean'])
        modes = np.array(doc['modes'], dtype=np.float64).reshape(t, 3 * n).T if t else np.zeros((3 * n, 0))
        model = ShapeModel(mean, modes, doc['eigenvalues'], doc['faces'], doc['total_variance'])
    except (KeyError, TypeError, ValueError) as e:
        raise ModelError(f"{path}: malformed shape model ({e})")
    if model.n != n or model.t != t:
        raise ModelError(f"{path}: declared n={n}, t={t} but data has n={model.n}, t={model.t}")
    return model
