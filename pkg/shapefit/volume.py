"""Binary volumes: MetaImage I/O, mesh voxelization and boundary extraction."""
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from shapefit.exceptions import VolumeFormatError, TopologyError
from shapefit.mesh import TriMesh, topology_report

logging.basicConfig(format='%(levelname)s - %(message)s', level=logging.INFO)
logger = logging.getLogger(__name__)

# ray jitter applied to rows whose ray grazes a vertex or an edge
JITTER_STEPS = 3
JITTER_Y = 1e-4
JITTER_Z = 3.1e-4
BARYCENTRIC_TOLERANCE = 1e-10


def _triple(values, cast, name):
    values = tuple(cast(v) for v in values)
    if len(values) != 3:
        raise ValueError(f"{name} needs 3 values, got {len(values)}")
    return values


@dataclass(frozen=True)
class GridSpec:
    """
    Regular voxel grid. origin is the world position (mm) of the centre of voxel (0, 0, 0),
    spacing the voxel size in mm along x, y and z.
    """
    dims: tuple
    spacing: tuple = (1.0, 1.0, 1.0)
    origin: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        dims = _triple(self.dims, int, 'dims')
        spacing = _triple(self.spacing, float, 'spacing')
        origin = _triple(self.origin, float, 'origin')
        if min(dims) < 1:
            raise ValueError(f"grid dims must all be >= 1, got {dims}")
        if not all(np.isfinite(spacing)) or min(spacing) <= 0:
            raise ValueError(f"grid spacing must all be > 0, got {spacing}")
        if not all(np.isfinite(origin)):
            raise ValueError(f"grid origin must be finite, got {origin}")
        object.__setattr__(self, 'dims', dims)
        object.__setattr__(self, 'spacing', spacing)
        object.__setattr__(self, 'origin', origin)

    @property
    def n_voxels(self) -> int:
        return int(np.prod(self.dims))

    @property
    def voxel_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axis_centers(self, axis: int) -> np.ndarray:
        return self.origin[axis] + np.arange(self.dims[axis]) * self.spacing[axis]

    def to_world(self, indices) -> np.ndarray:
        return np.asarray(self.origin) + np.asarray(indices, dtype=np.float64) * np.asarray(self.spacing)

    def to_dict(self) -> dict:
        return {"dims": list(self.dims), "spacing": list(self.spacing), "origin": list(self.origin)}

    @classmethod
    def from_dict(cls, d: dict) -> 'GridSpec':
        return cls(dims=d['dims'], spacing=d.get('spacing', (1.0, 1.0, 1.0)), origin=d.get('origin', (0.0, 0.0, 0.0)))

    @classmethod
    def enclosing(cls, points, spacing=(1.0, 1.0, 1.0), margin: float = 3.0) -> 'GridSpec':
        """grid aligned to multiples of spacing that covers points plus a margin in mm"""
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        spacing = np.asarray(_triple(spacing, float, 'spacing'))
        first = np.floor((points.min(axis=0) - margin) / spacing)
        last = np.ceil((points.max(axis=0) + margin) / spacing)
        return cls(dims=(last - first + 1).astype(int), spacing=spacing, origin=first * spacing)


@dataclass(frozen=True, eq=False)
class BinaryVolume:
    """binary mask on a GridSpec, data indexed [x, y, z]"""
    grid: GridSpec
    data: np.ndarray

    def __post_init__(self):
        data = np.array(self.data, dtype=bool)
        if data.shape != self.grid.dims:
            raise ValueError(f"mask shape {data.shape} does not match grid dims {self.grid.dims}")
        data.flags.writeable = False
        object.__setattr__(self, 'data', data)

    @property
    def dims(self) -> tuple:
        return self.grid.dims

    @property
    def spacing(self) -> tuple:
        return self.grid.spacing

    @property
    def origin(self) -> tuple:
        return self.grid.origin

    @property
    def count(self) -> int:
        return int(self.data.sum())

    def centroid(self) -> np.ndarray:
        """world centroid of the foreground voxel centres"""
        if not self.count:
            raise ValueError("centroid of an empty mask is undefined")
        return self.grid.to_world(np.argwhere(self.data).mean(axis=0))

    @classmethod
    def empty(cls, grid: GridSpec) -> 'BinaryVolume':
        return cls(grid, np.zeros(grid.dims, dtype=bool))


def _read_header(f, path):
    header = {}
    while True:
        raw = f.readline()
        if not raw:
            raise VolumeFormatError(f"{path}: header has no ElementDataFile entry")
        line = raw.decode('ascii', errors='replace').strip()
        if not line or line.startswith('#'):
            continue
        if '=' not in line:
            raise VolumeFormatError(f"{path}: malformed header line '{line}'")
        key, value = (part.strip() for part in line.split('=', 1))
        header[key] = value
        if key == 'ElementDataFile':
            return header


def load_volume(path) -> BinaryVolume:
    """
    read a MetaImage volume (.mhd header with .raw data, or a single .mha file with
    ElementDataFile = LOCAL). Any nonzero voxel is foreground.
    """
    path = Path(path)
    with open(path, 'rb') as f:
        header = _read_header(f, path)
        local_data = f.read() if header['ElementDataFile'] == 'LOCAL' else None

    def ints(key):
        try:
            return [int(v) for v in header[key].split()]
        except (KeyError, ValueError):
            raise VolumeFormatError(f"{path}: missing or malformed {key}")

    def floats(key, default):
        for alias in (key,) + (('Origin', 'Position') if key == 'Offset' else ()):
            if alias in header:
                try:
                    return [float(v) for v in header[alias].split()]
                except ValueError:
                    raise VolumeFormatError(f"{path}: malformed {alias}")
        return default

    if ints('NDims') != [3]:
        raise VolumeFormatError(f"{path}: only 3-dimensional volumes are supported, NDims = {header.get('NDims')}")
    element_type = header.get('ElementType')
    if element_type != 'MET_UCHAR':
        raise VolumeFormatError(f"{path}: unsupported element type {element_type}, expected MET_UCHAR")
    if header.get('CompressedData', 'False') == 'True':
        raise VolumeFormatError(f"{path}: compressed MetaImage data is not supported")
    if int(header.get('ElementNumberOfChannels', '1')) != 1:
        raise VolumeFormatError(f"{path}: multi-channel volumes are not supported")

    dims = ints('DimSize')
    try:
        grid = GridSpec(dims=dims, spacing=floats('ElementSpacing', [1.0, 1.0, 1.0]),
                        origin=floats('Offset', [0.0, 0.0, 0.0]))
    except ValueError as e:
        raise VolumeFormatError(f"{path}: {e}")

    if local_data is None:
        raw_path = path.parent / header['ElementDataFile']
        with open(raw_path, 'rb') as f:
            local_data = f.read()
    raw = np.frombuffer(local_data, dtype=np.uint8)
    if raw.size != grid.n_voxels:
        raise VolumeFormatError(f"{path}: raw data has {raw.size} bytes but the header declares "
                                f"{' x '.join(map(str, dims))} = {grid.n_voxels} voxels")
    data = raw.reshape(dims[::-1]).transpose(2, 1, 0) != 0
    logger.debug(f"read {dims} mask with {int(data.sum())} foreground voxels from {path}")
    return BinaryVolume(grid, np.ascontiguousarray(data))


def save_volume(volume: BinaryVolume, path):
    """
    write a MetaImage volume. A .mha path gets the data inline, anything else a .mhd
    header next to a .raw file. Data is x-fastest, one unsigned byte per voxel.
    """
    path = Path(path)
    local = path.suffix == '.mha'
    raw_path = path.with_suffix('.raw')

    def fmt(values):
        return " ".join(repr(float(v)) for v in values)

    header = [
        "ObjectType = Image",
        "NDims = 3",
        "BinaryData = True",
        "BinaryDataByteOrderMSB = False",
        "CompressedData = False",
        f"Offset = {fmt(volume.origin)}",
        f"ElementSpacing = {fmt(volume.spacing)}",
        f"DimSize = {' '.join(str(d) for d in volume.dims)}",
        "ElementType = MET_UCHAR",
        f"ElementDataFile = {'LOCAL' if local else raw_path.name}",
    ]
    payload = volume.data.astype(np.uint8).transpose(2, 1, 0).tobytes()
    with open(path, 'wb') as f:
        f.write(("\n".join(header) + "\n").encode('ascii'))
        if local:
            f.write(payload)
    if not local:
        with open(raw_path, 'wb') as f:
            f.write(payload)


def _edge_functions(tri_yz, py, pz):
    # signed doubled areas of the sub-triangles opposite each corner, in the yz projection
    def cross(i, j):
        return ((tri_yz[:, i, 0] - py) * (tri_yz[:, j, 1] - pz)
                - (tri_yz[:, i, 1] - pz) * (tri_yz[:, j, 0] - py))
    return np.stack([cross(1, 2), cross(2, 0), cross(0, 1)], axis=1)


def _classify_hits(tri, py, pz, area_floor):
    """x of every strict ray hit, and whether any ray grazes an edge or vertex"""
    weights = _edge_functions(tri[:, :, 1:], py, pz)
    total = weights.sum(axis=1)
    flat = np.abs(total) <= area_floor
    lam = weights / np.where(flat, 1.0, total)[:, None]
    low = lam.min(axis=1)
    strict = ~flat & (low > BARYCENTRIC_TOLERANCE)
    grazing = ~flat & (low >= -BARYCENTRIC_TOLERANCE) & ~strict
    x_hit = np.einsum('ij,ij->i', lam, tri[:, :, 0])
    return x_hit, strict, grazing


def _row_candidates(tri, grid):
    # (face, j, k) for every voxel-centre row whose yz position falls in the face's yz bounding box
    (_, ny, nz), (_, sy, sz), (_, oy, oz) = grid.dims, grid.spacing, grid.origin
    j_lo = np.maximum(np.ceil((tri[:, :, 1].min(axis=1) - oy) / sy), 0).astype(np.int64)
    j_hi = np.minimum(np.floor((tri[:, :, 1].max(axis=1) - oy) / sy), ny - 1).astype(np.int64)
    k_lo = np.maximum(np.ceil((tri[:, :, 2].min(axis=1) - oz) / sz), 0).astype(np.int64)
    k_hi = np.minimum(np.floor((tri[:, :, 2].max(axis=1) - oz) / sz), nz - 1).astype(np.int64)
    n_j = np.maximum(j_hi - j_lo + 1, 0)
    n_k = np.maximum(k_hi - k_lo + 1, 0)
    counts = n_j * n_k
    face = np.repeat(np.arange(len(tri)), counts)
    local = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
    j = j_lo[face] + local // np.maximum(n_k[face], 1)
    k = k_lo[face] + local % np.maximum(n_k[face], 1)
    return face, j, k


def _cast_row(mesh, tri, grid, j, k, area_floor):
    """classify one row of voxel centres with jittered rays, falling back to winding numbers"""
    xs = grid.axis_centers(0)
    y = grid.origin[1] + j * grid.spacing[1]
    z = grid.origin[2] + k * grid.spacing[2]
    for step in range(1, JITTER_STEPS + 1):
        py = np.full(len(tri), y + step * JITTER_Y * grid.spacing[1])
        pz = np.full(len(tri), z + step * JITTER_Z * grid.spacing[2])
        x_hit, strict, grazing = _classify_hits(tri, py, pz, area_floor)
        if not grazing.any():
            crossings = np.sort(x_hit[strict])
            return np.searchsorted(crossings, xs, side='left') % 2 == 1
    logger.warning(f"ray row (y={y}, z={z}) stays degenerate after {JITTER_STEPS} jitters, "
                   f"using winding numbers")
    points = np.column_stack([xs, np.full_like(xs, y), np.full_like(xs, z)])
    return contains(mesh, points)


def voxelize(mesh: TriMesh, grid: GridSpec) -> BinaryVolume:
    """
    rasterize a closed mesh: a voxel is foreground iff its centre lies inside the surface.
    Inside is decided by the parity of ray crossings along +x, one ray per (y, z) row.
    """
    if not topology_report(mesh).is_closed:
        raise TopologyError("only closed meshes can be voxelized")
    nx, ny, nz = grid.dims
    if not mesh.n_faces:
        return BinaryVolume.empty(grid)

    tri = mesh.vertices[mesh.faces]
    area_floor = 1e-12 * grid.spacing[1] * grid.spacing[2]
    face, j, k = _row_candidates(tri, grid)
    if not len(face):
        return BinaryVolume.empty(grid)

    py = grid.origin[1] + j * grid.spacing[1]
    pz = grid.origin[2] + k * grid.spacing[2]
    x_hit, strict, grazing = _classify_hits(tri[face], py, pz, area_floor)

    crossings = np.zeros((nx + 1, ny, nz), dtype=np.int32)
    first_after = np.floor((x_hit[strict] - grid.origin[0]) / grid.spacing[0]) + 1
    np.add.at(crossings, (np.clip(first_after, 0, nx).astype(np.int64), j[strict], k[strict]), 1)
    inside = np.cumsum(crossings, axis=0)[:nx] % 2 == 1

    degenerate = np.unique(np.column_stack([j[grazing], k[grazing]]), axis=0)
    for row_j, row_k in degenerate:
        inside[:, row_j, row_k] = _cast_row(mesh, tri, grid, row_j, row_k, area_floor)
    if len(degenerate):
        logger.debug(f"re-cast {len(degenerate)} degenerate ray rows")
    return BinaryVolume(grid, inside)


def winding_number(mesh: TriMesh, points) -> np.ndarray:
    """generalized winding number of the surface around each point"""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    out = np.zeros(len(points))
    if not mesh.n_faces:
        return out
    tri = mesh.vertices[mesh.faces]
    chunk = max(1, 2_000_000 // mesh.n_faces)
    for start in range(0, len(points), chunk):
        p = points[start:start + chunk, None, :]
        a, b, c = tri[None, :, 0] - p, tri[None, :, 1] - p, tri[None, :, 2] - p
        la, lb, lc = (np.linalg.norm(v, axis=2) for v in (a, b, c))
        det = np.einsum('pfi,pfi->pf', a, np.cross(b, c))
        denom = (la * lb * lc + np.einsum('pfi,pfi->pf', a, b) * lc
                 + np.einsum('pfi,pfi->pf', b, c) * la + np.einsum('pfi,pfi->pf', c, a) * lb)
        out[start:start + chunk] = np.arctan2(det, denom).sum(axis=1) / (2.0 * np.pi)
    return out


def _on_surface(mesh: TriMesh, point, tolerance):
    a, b, c = (mesh.vertices[mesh.faces[:, k]] for k in range(3))
    e1, e2, rel = b - a, c - a, point - a
    normal = np.cross(e1, e2)
    norm = np.linalg.norm(normal, axis=1)
    off_plane = np.abs(np.einsum('ij,ij->i', rel, normal)) / np.where(norm == 0, 1.0, norm)
    d00, d01, d11 = (np.einsum('ij,ij->i', e1, e1), np.einsum('ij,ij->i', e1, e2), np.einsum('ij,ij->i', e2, e2))
    d20, d21 = np.einsum('ij,ij->i', rel, e1), np.einsum('ij,ij->i', rel, e2)
    denom = d00 * d11 - d01 ** 2
    safe = np.where(denom == 0, 1.0, denom)
    v = (d11 * d20 - d01 * d21) / safe
    w = (d00 * d21 - d01 * d20) / safe
    eps = 1e-9
    return bool(np.any((norm > 0) & (off_plane <= tolerance) & (v >= -eps) & (w >= -eps) & (v + w <= 1 + eps)))


def contains(mesh: TriMesh, points) -> np.ndarray:
    """inside test for many points. Points on the surface count as inside."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    winding = winding_number(mesh, points)
    rounded = np.rint(winding)
    inside = rounded != 0
    scale = float(np.ptp(mesh.vertices, axis=0).max()) if mesh.n_vertices else 1.0
    for idx in np.flatnonzero(np.abs(winding - rounded) > 1e-6):
        inside[idx] = inside[idx] or _on_surface(mesh, points[idx], 1e-9 * max(scale, 1.0))
    return inside


def point_in_mesh(mesh: TriMesh, p) -> bool:
    """
    true iff the winding number of the closed surface around p rounds to a nonzero
    integer. Points on the surface are classified inside.
    """
    if not topology_report(mesh).is_closed:
        raise TopologyError("point_in_mesh needs a closed mesh")
    return bool(contains(mesh, p)[0])


def boundary_voxels(volume: BinaryVolume) -> np.ndarray:
    """
    world centres of foreground voxels with at least one background 6-neighbour;
    voxels outside the grid count as background
    """
    structure = ndimage.generate_binary_structure(3, 1)
    interior = ndimage.binary_erosion(volume.data, structure=structure, border_value=0)
    return volume.grid.to_world(np.argwhere(volume.data & ~interior))


def add_salt_noise(volume: BinaryVolume, fraction: float, seed: int = 0) -> BinaryVolume:
    """switch a random fraction of all voxels to foreground"""
    rng = np.random.default_rng(seed)
    salt = rng.random(volume.dims) < fraction
    return BinaryVolume(volume.grid, volume.data | salt)
