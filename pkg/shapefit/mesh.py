"""Triangulated surface meshes.

Holds the TriMesh type, ASCII PLY reading and writing, the geometric
laplacian used as smoothness measure, the marching cubes baseline and
topology checks.

Vertex order is meaningful: templates of a shape model are corresponded
by vertex index, so nothing in this module ever reorders vertices of a
mesh it was given.
"""
import logging
from dataclasses import dataclass, asdict
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree
from skimage import measure

from shapefit.exceptions import MeshFormatError, InvalidMeshError, DegenerateGeometryError

logger = logging.getLogger(__name__)

PLY_FACE_PROPERTIES = ('vertex_indices', 'vertex_index')
PLY_SCALAR_TYPES = {
    'char': int, 'uchar': int, 'short': int, 'ushort': int, 'int': int, 'uint': int,
    'int8': int, 'uint8': int, 'int16': int, 'uint16': int, 'int32': int, 'uint32': int,
    'float': float, 'double': float, 'float32': float, 'float64': float,
}


@dataclass(frozen=True, eq=False)
class TriMesh:
    """
    Triangulated surface with vertex coordinates in mm and faces as vertex index triples.
    Arrays are copied on construction and made read-only.
    """
    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        vertices = np.array(self.vertices, dtype=np.float64)
        faces = np.array(self.faces, dtype=np.int64)
        if vertices.size == 0:
            vertices = vertices.reshape(0, 3)
        if faces.size == 0:
            faces = faces.reshape(0, 3)
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise InvalidMeshError(f"vertices must have shape (V, 3), got {vertices.shape}")
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise InvalidMeshError(f"faces must be triangles with shape (F, 3), got {faces.shape}")
        if not np.isfinite(vertices).all():
            bad = int(np.flatnonzero(~np.isfinite(vertices).all(axis=1))[0])
            raise InvalidMeshError(f"vertex {bad} has non-finite coordinates")
        if len(faces):
            if faces.min() < 0 or faces.max() >= len(vertices):
                bad = int(np.flatnonzero((faces < 0).any(axis=1) | (faces >= len(vertices)).any(axis=1))[0])
                raise InvalidMeshError(f"face {bad} {faces[bad].tolist()} indexes outside [0, {len(vertices)})")
            repeated = (faces[:, 0] == faces[:, 1]) | (faces[:, 1] == faces[:, 2]) | (faces[:, 0] == faces[:, 2])
            if repeated.any():
                bad = int(np.flatnonzero(repeated)[0])
                raise InvalidMeshError(f"face {bad} {faces[bad].tolist()} repeats a vertex")
        vertices.flags.writeable = False
        faces.flags.writeable = False
        object.__setattr__(self, 'vertices', vertices)
        object.__setattr__(self, 'faces', faces)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @cached_property
    def _edge_counts(self):
        if not self.n_faces:
            return np.zeros((0, 2), dtype=np.int64), np.zeros(0, dtype=np.int64)
        pairs = np.concatenate([self.faces[:, [0, 1]], self.faces[:, [1, 2]], self.faces[:, [2, 0]]])
        pairs.sort(axis=1)
        return np.unique(pairs, axis=0, return_counts=True)

    @property
    def edges(self) -> np.ndarray:
        """unique undirected edges as sorted index pairs"""
        return self._edge_counts[0]

    def neighbors(self, v: int) -> np.ndarray:
        """1-ring of vertex v: every vertex sharing an edge with it"""
        edges = self.edges
        return np.unique(np.concatenate([edges[edges[:, 0] == v, 1], edges[edges[:, 1] == v, 0]]))

    def translated(self, offset) -> 'TriMesh':
        return TriMesh(self.vertices + np.asarray(offset, dtype=np.float64), self.faces)

    def scaled(self, factor: float) -> 'TriMesh':
        return TriMesh(self.vertices * factor, self.faces)


@dataclass(frozen=True)
class MeshTopologyReport:
    is_closed: bool
    is_edge_manifold: bool
    euler_characteristic: int
    connected_components: int

    def to_dict(self) -> dict:
        return asdict(self)


def empty_mesh() -> TriMesh:
    return TriMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))


def load_mesh(path) -> TriMesh:
    """
    read an ASCII PLY file with x/y/z vertex properties and triangular faces
    @param path: path to the .ply file
    @return: TriMesh with the vertex order of the file
    """
    path = Path(path)
    with open(path, 'r', encoding='ascii', errors='replace') as f:
        lines = f.read().splitlines()

    def fail(line_number, message):
        raise MeshFormatError(path, line_number, message)

    if not lines or lines[0].strip() != 'ply':
        fail(1, "missing 'ply' magic line")

    elements = []   # [name, count, [(kind, name), ...]]
    body_start = None
    for idx in range(1, len(lines)):
        tokens = lines[idx].split()
        lineno = idx + 1
        if not tokens or tokens[0] in ('comment', 'obj_info'):
            continue
        keyword = tokens[0]
        if keyword == 'format':
            if tokens[1:] != ['ascii', '1.0']:
                fail(lineno, f"unsupported format '{' '.join(tokens[1:])}', only 'ascii 1.0' is read")
        elif keyword == 'element':
            if len(tokens) != 3 or not tokens[2].isdigit():
                fail(lineno, f"malformed element declaration '{lines[idx]}'")
            elements.append([tokens[1], int(tokens[2]), []])
        elif keyword == 'property':
            if not elements:
                fail(lineno, "property declared before any element")
            if len(tokens) == 3 and tokens[1] in PLY_SCALAR_TYPES:
                elements[-1][2].append(('scalar', tokens[2]))
            elif len(tokens) == 5 and tokens[1] == 'list':
                elements[-1][2].append(('list', tokens[4]))
            else:
                fail(lineno, f"malformed property declaration '{lines[idx]}'")
        elif keyword == 'end_header':
            body_start = idx + 1
            break
        else:
            fail(lineno, f"unexpected header keyword '{keyword}'")
    if body_start is None:
        fail(len(lines), "header has no 'end_header'")

    names = [element[0] for element in elements]
    if 'vertex' not in names:
        fail(body_start, "no vertex element declared")
    vertex_props = [name for _, name in elements[names.index('vertex')][2]]
    if any(axis not in vertex_props for axis in 'xyz'):
        fail(body_start, "vertex element lacks x, y or z property")
    n_vertices = elements[names.index('vertex')][1]

    vertices, faces = [], []
    cursor = body_start
    for name, count, props in elements:
        for _ in range(count):
            while cursor < len(lines) and not lines[cursor].strip():
                cursor += 1
            if cursor >= len(lines):
                fail(cursor, f"unexpected end of file while reading element '{name}'")
            lineno = cursor + 1
            tokens = lines[cursor].split()
            cursor += 1
            values, pos = {}, 0
            try:
                for kind, prop in props:
                    if kind == 'scalar':
                        values[prop] = float(tokens[pos])
                        pos += 1
                    else:
                        n = int(tokens[pos])
                        values[prop] = [int(t) for t in tokens[pos + 1:pos + 1 + n]]
                        if len(values[prop]) != n:
                            raise IndexError
                        pos += 1 + n
            except (ValueError, IndexError):
                fail(lineno, f"cannot parse {name} record '{lines[lineno - 1]}'")
            if pos != len(tokens):
                fail(lineno, f"{name} record has {len(tokens)} values, expected {pos}")
            if name == 'vertex':
                vertices.append([values['x'], values['y'], values['z']])
            elif name == 'face':
                face = next((values[p] for p in PLY_FACE_PROPERTIES if p in values), None)
                if face is None:
                    fail(lineno, "face element has no vertex_indices list")
                if len(face) != 3:
                    fail(lineno, f"face with {len(face)} vertices, only triangles are supported")
                out_of_range = [i for i in face if i < 0 or i >= n_vertices]
                if out_of_range:
                    fail(lineno, f"face index {out_of_range[0]} out of range for {n_vertices} vertices")
                if len(set(face)) != 3:
                    fail(lineno, f"degenerate face {face}")
                faces.append(face)

    vertices = np.array(vertices, dtype=np.float64)
    if len(vertices) and not np.isfinite(vertices).all():
        bad = int(np.flatnonzero(~np.isfinite(vertices).all(axis=1))[0])
        fail(body_start + bad + 1, "non-finite vertex coordinate")
    logger.debug(f"read {len(vertices)} vertices and {len(faces)} faces from {path}")
    return TriMesh(vertices, np.array(faces, dtype=np.int64))


def save_mesh(mesh: TriMesh, path):
    """
    write the mesh as ASCII PLY. Coordinates are written with repr precision so that
    load_mesh reproduces them bit for bit.
    """
    out = [
        "ply",
        "format ascii 1.0",
        f"element vertex {mesh.n_vertices}",
        "property float x",
        "property float y",
        "property float z",
        f"element face {mesh.n_faces}",
        "property list uchar int vertex_indices",
        "end_header",
    ]
    out += [" ".join(repr(float(c)) for c in vertex) for vertex in mesh.vertices]
    out += [f"3 {a} {b} {c}" for a, b, c in mesh.faces.tolist()]
    with open(path, 'w', encoding='ascii', newline='\n') as f:
        f.write("\n".join(out) + "\n")


def geometric_laplacian(vertices, edges) -> np.ndarray:
    """
    per-vertex geometric laplacian over an arbitrary vertex graph:
    GL(v) = v - sum(v_i / l_i) / sum(1 / l_i) over the direct neighbours v_i of v
    @param vertices: (V, 3) coordinates
    @param edges: (E, 2) unique undirected edges
    @return: (V, 3) laplacian vectors
    """
    vertices = np.asarray(vertices, dtype=np.float64)
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    n = len(vertices)
    if n == 0:
        return np.zeros((0, 3))
    i, j = edges[:, 0], edges[:, 1]
    lengths = np.linalg.norm(vertices[i] - vertices[j], axis=1)
    coincident = np.flatnonzero(lengths == 0)
    if coincident.size:
        a, b = edges[coincident[0]]
        raise DegenerateGeometryError(f"vertex {a} coincides with its neighbour {b}, geometric laplacian undefined")
    weights = 1.0 / lengths
    adjacency = sparse.coo_matrix((np.concatenate([weights, weights]),
                                   (np.concatenate([i, j]), np.concatenate([j, i]))),
                                  shape=(n, n)).tocsr()
    total = np.asarray(adjacency.sum(axis=1)).ravel()
    isolated = np.flatnonzero(total == 0)
    if isolated.size:
        raise DegenerateGeometryError(f"vertex {isolated[0]} has no neighbours, geometric laplacian undefined")
    return vertices - (adjacency @ vertices) / total[:, None]


def vertex_gl(mesh: TriMesh, v: int) -> np.ndarray:
    """geometric laplacian vector of a single vertex, in mm"""
    if not 0 <= v < mesh.n_vertices:
        raise IndexError(f"vertex {v} out of range for {mesh.n_vertices} vertices")
    neighbours = mesh.neighbors(v)
    if not neighbours.size:
        raise DegenerateGeometryError(f"vertex {v} has no neighbours, geometric laplacian undefined")
    point = mesh.vertices[v]
    lengths = np.linalg.norm(mesh.vertices[neighbours] - point, axis=1)
    if (lengths == 0).any():
        raise DegenerateGeometryError(
            f"vertex {v} coincides with its neighbour {neighbours[lengths == 0][0]}, geometric laplacian undefined")
    weights = 1.0 / lengths
    return point - weights @ mesh.vertices[neighbours] / weights.sum()


def surface_gl(mesh: TriMesh) -> float:
    """sum of the norms of all vertex-wise geometric laplacian vectors. Lower is smoother."""
    laplacian = geometric_laplacian(mesh.vertices, mesh.edges)
    return float(np.linalg.norm(laplacian, axis=1).sum())


def enclosed_volume(mesh: TriMesh) -> float:
    """signed volume enclosed by a closed mesh, positive for outward oriented faces"""
    if not mesh.n_faces:
        return 0.0
    a, b, c = (mesh.vertices[mesh.faces[:, k]] for k in range(3))
    return float(np.einsum('ij,ij->i', a, np.cross(b, c)).sum() / 6.0)


def vertex_normals(mesh: TriMesh) -> np.ndarray:
    """area weighted unit vertex normals"""
    a, b, c = (mesh.vertices[mesh.faces[:, k]] for k in range(3))
    face_normals = np.cross(b - a, c - a)
    normals = np.zeros_like(mesh.vertices)
    for k in range(3):
        np.add.at(normals, mesh.faces[:, k], face_normals)
    norms = np.linalg.norm(normals, axis=1, keepdims=True)
    return normals / np.where(norms == 0, 1.0, norms)


def _compact(vertices, faces):
    used, inverse = np.unique(faces, return_inverse=True)
    return vertices[used], inverse.reshape(faces.shape)


def marching_cubes(volume) -> TriMesh:
    """
    isosurface at 0.5 of the binary mask sampled at voxel centres, in world coordinates.

    The mask is padded with one layer of background so the surface always closes.
    The classic Lorensen case table is used: on binary data the Lewiner table emits
    duplicate triangles that leave edges shared by four faces. Faces are oriented outward.
    """
    data = np.asarray(volume.data, dtype=bool)
    if not data.any():
        return empty_mesh()
    padded = np.pad(data, 1, mode='constant', constant_values=False).astype(np.float32)
    verts, faces, _, _ = measure.marching_cubes(padded, level=0.5, method='lorensen', allow_degenerate=False)
    spacing = np.asarray(volume.spacing, dtype=np.float64)
    origin = np.asarray(volume.origin, dtype=np.float64)
    vertices = origin + (verts.astype(np.float64) - 1.0) * spacing
    vertices, faces = _compact(vertices, faces.astype(np.int64))
    mesh = TriMesh(vertices, faces)
    if enclosed_volume(mesh) < 0:
        mesh = TriMesh(vertices, faces[:, ::-1])
    return mesh


def topology_report(mesh: TriMesh) -> MeshTopologyReport:
    n = mesh.n_vertices
    if n == 0:
        return MeshTopologyReport(True, True, 0, 0)
    edges, counts = mesh._edge_counts
    graph = sparse.coo_matrix((np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(n, n))
    n_components, _ = connected_components(graph, directed=False)
    return MeshTopologyReport(
        is_closed=bool(np.all(counts == 2)),
        is_edge_manifold=bool(np.all(counts <= 2)),
        euler_characteristic=int(n - len(edges) + mesh.n_faces),
        connected_components=int(n_components),
    )


def _segments_cross_triangles(p0, p1, a, b, c, eps=1e-12):
    # Moller-Trumbore restricted to the segment p0 -> p1
    direction = p1 - p0
    e1, e2 = b - a, c - a
    h = np.cross(direction, e2)
    det = np.einsum('ij,ij->i', e1, h)
    ok = np.abs(det) > eps
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    s = p0 - a
    u = inv * np.einsum('ij,ij->i', s, h)
    q = np.cross(s, e1)
    v = inv * np.einsum('ij,ij->i', direction, q)
    t = inv * np.einsum('ij,ij->i', e2, q)
    return ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (t >= 0) & (t <= 1)


def self_intersections(mesh: TriMesh) -> int:
    """
    number of intersecting pairs among faces that share no vertex.
    Coplanar overlaps are not detected.
    """
    if mesh.n_faces < 2:
        return 0
    tri = mesh.vertices[mesh.faces]
    centroids = tri.mean(axis=1)
    radius = np.linalg.norm(tri - centroids[:, None, :], axis=2).max()
    pairs = cKDTree(centroids).query_pairs(2.0 * radius, output_type='ndarray')
    if not len(pairs):
        return 0
    fi, fj = mesh.faces[pairs[:, 0]], mesh.faces[pairs[:, 1]]
    disjoint = ~(fi[:, :, None] == fj[:, None, :]).any(axis=(1, 2))
    pairs = pairs[disjoint]
    lo_i, hi_i = tri[pairs[:, 0]].min(axis=1), tri[pairs[:, 0]].max(axis=1)
    lo_j, hi_j = tri[pairs[:, 1]].min(axis=1), tri[pairs[:, 1]].max(axis=1)
    pairs = pairs[((lo_i <= hi_j) & (lo_j <= hi_i)).all(axis=1)]
    if not len(pairs):
        return 0
    hit = np.zeros(len(pairs), dtype=bool)
    for first, second in ((0, 1), (1, 0)):
        edge_tri, face_tri = tri[pairs[:, first]], tri[pairs[:, second]]
        for k in range(3):
            hit |= _segments_cross_triangles(edge_tri[:, k], edge_tri[:, (k + 1) % 3],
                                             face_tri[:, 0], face_tri[:, 1], face_tri[:, 2])
    return int(hit.sum())
