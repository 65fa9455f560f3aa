"""STL ingestion, cleaning and building indexing.

Buildings arrive as a directory of STL files (metres, z-up).  Each file
becomes one :class:`Building` with an ID, cleaned mesh and plan-view
statistics; together they form a :class:`BuildingSet` with the combined mesh
and a buffered ground plane.
"""
from __future__ import annotations

import json
import logging
import math
import re
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import shapely
from shapely.geometry import Polygon
from shapely.ops import unary_union

logger = logging.getLogger(__name__)

GROUND_Z = 0.0
DEFAULT_WELD_TOLERANCE = 1e-6
_ZERO_AREA = 1e-12

_BINARY_RECORD = np.dtype(
    [("normal", "<f4", (3,)), ("v", "<f4", (3, 3)), ("attr", "<u2")]
)


class GeometryError(ValueError):
    """Raised for unreadable, malformed or degenerate geometry."""


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    vertices: np.ndarray
    triangles: np.ndarray
    normals: np.ndarray | None = None
    cleaning: dict | None = None

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        t = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise GeometryError("triangle index out of range")
        if not np.all(np.isfinite(v)):
            raise GeometryError("non-finite vertex coordinate")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def corners(self) -> np.ndarray:
        """(M, 3, 3) array of triangle corner coordinates."""
        return self.vertices[self.triangles]

    def cross(self) -> np.ndarray:
        c = self.corners
        return np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])

    def face_areas(self) -> np.ndarray:
        return 0.5 * np.linalg.norm(self.cross(), axis=1)

    def face_normals(self) -> np.ndarray:
        cr = self.cross()
        n = np.linalg.norm(cr, axis=1, keepdims=True)
        return np.divide(cr, n, out=np.zeros_like(cr), where=n > 0)

    def centroids(self) -> np.ndarray:
        return self.corners.mean(axis=1)

    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        if not len(self.vertices):
            raise GeometryError("empty mesh has no bounding box")
        used = self.vertices[np.unique(self.triangles)] if self.n_triangles else self.vertices
        return used.min(axis=0), used.max(axis=0)

    def signed_volume(self) -> float:
        c = self.corners
        return float(np.einsum("ij,ij->i", c[:, 0], np.cross(c[:, 1], c[:, 2])).sum() / 6.0)

    def boundary_edge_count(self) -> int:
        """Edges used by exactly one triangle (zero for a watertight mesh)."""
        t = self.triangles
        edges = np.sort(np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]), axis=1)
        _, counts = np.unique(edges, axis=0, return_counts=True)
        return int((counts == 1).sum())

    def translated(self, offset) -> "TriangleMesh":
        return replace(self, vertices=self.vertices + np.asarray(offset, dtype=float))


# ---------------------------------------------------------------------------
# STL I/O


def load_stl(path) -> TriangleMesh:
    """Read a binary or ASCII STL file into an unwelded mesh.

    Binary is recognised by its size matching the declared facet count; files
    that start with ``solid`` and are not size-consistent binaries are parsed
    as ASCII.
    """
    path = Path(path)
    data = path.read_bytes()
    if len(data) >= 84:
        (count,) = struct.unpack_from("<I", data, 80)
        if len(data) == 84 + 50 * count:
            return _parse_binary(data, count, path)
    if data.lstrip()[:5].lower() == b"solid":
        return _parse_ascii(data, path)
    if len(data) < 84:
        raise GeometryError(f"{path}: truncated file ({len(data)} bytes, header needs 84)")
    (count,) = struct.unpack_from("<I", data, 80)
    available = (len(data) - 84) // 50
    raise GeometryError(
        f"{path}: facet count mismatch: header declares {count} facets, "
        f"file holds {available} complete records ({len(data)} bytes)"
    )


def _parse_binary(data: bytes, count: int, path: Path) -> TriangleMesh:
    rec = np.frombuffer(data, dtype=_BINARY_RECORD, count=count, offset=84)
    verts = rec["v"].astype(np.float64).reshape(-1, 3)
    bad = ~np.isfinite(verts).all(axis=1)
    if bad.any():
        facet = int(np.flatnonzero(bad)[0]) // 3
        offset = 84 + 50 * facet + 12
        raise GeometryError(f"{path}: non-finite coordinate in facet {facet} at byte offset {offset}")
    tris = np.arange(len(verts)).reshape(-1, 3)
    return TriangleMesh(verts, tris, rec["normal"].astype(np.float64))


def _parse_ascii(data: bytes, path: Path) -> TriangleMesh:
    try:
        text = data.decode("ascii")
    except UnicodeDecodeError as exc:
        raise GeometryError(f"{path}: not an ASCII STL (byte offset {exc.start})") from exc
    verts: list[tuple[float, float, float]] = []
    normals: list[tuple[float, float, float]] = []
    in_facet = False
    facet_verts = 0
    lineno = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        tok = raw.split()
        if not tok:
            continue
        key = tok[0].lower()
        if key == "facet":
            if in_facet:
                raise GeometryError(f"{path}: line {lineno}: nested facet")
            in_facet, facet_verts = True, 0
            n = tok[2:5] if len(tok) >= 5 and tok[1].lower() == "normal" else ["0", "0", "0"]
            normals.append(_floats(n, path, lineno))
        elif key == "vertex":
            if not in_facet or len(tok) != 4:
                raise GeometryError(f"{path}: line {lineno}: malformed vertex")
            verts.append(_floats(tok[1:4], path, lineno))
            facet_verts += 1
        elif key == "endfacet":
            if facet_verts != 3:
                raise GeometryError(f"{path}: line {lineno}: facet with {facet_verts} vertices")
            in_facet = False
    if in_facet:
        raise GeometryError(f"{path}: line {lineno}: truncated file inside facet")
    if not verts:
        raise GeometryError(f"{path}: no facets found")
    v = np.array(verts, dtype=np.float64)
    return TriangleMesh(v, np.arange(len(v)).reshape(-1, 3), np.array(normals))


def _floats(tokens: Sequence[str], path: Path, lineno: int) -> tuple[float, float, float]:
    try:
        vals = tuple(float(t) for t in tokens)
    except ValueError as exc:
        raise GeometryError(f"{path}: line {lineno}: {exc}") from exc
    if len(vals) != 3 or not all(math.isfinite(x) for x in vals):
        raise GeometryError(f"{path}: line {lineno}: non-finite coordinate")
    return vals  # type: ignore[return-value]


def write_stl_binary(mesh: TriangleMesh, path, header: bytes = b"urbancool") -> None:
    rec = np.zeros(mesh.n_triangles, dtype=_BINARY_RECORD)
    rec["normal"] = mesh.face_normals()
    rec["v"] = mesh.corners
    with open(path, "wb") as fh:
        fh.write(header[:80].ljust(80, b" "))
        fh.write(struct.pack("<I", mesh.n_triangles))
        fh.write(rec.tobytes())


def write_stl_ascii(mesh: TriangleMesh, path, name: str = "mesh") -> None:
    lines = [f"solid {name}"]
    for n, tri in zip(mesh.face_normals(), mesh.corners):
        lines.append(f"  facet normal {n[0]:.6e} {n[1]:.6e} {n[2]:.6e}")
        lines.append("    outer loop")
        for p in tri:
            lines.append(f"      vertex {p[0]:.9e} {p[1]:.9e} {p[2]:.9e}")
        lines.append("    endloop")
        lines.append("  endfacet")
    lines.append(f"endsolid {name}")
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# cleaning


def clean_mesh(mesh: TriangleMesh, weld_tolerance: float = DEFAULT_WELD_TOLERANCE) -> TriangleMesh:
    """Weld vertices, drop zero-area and duplicate triangles.

    The returned mesh carries a ``cleaning`` dict with the removal counts.
    """
    if weld_tolerance <= 0:
        raise GeometryError("weld_tolerance must be positive")
    keys = np.round(mesh.vertices / weld_tolerance).astype(np.int64)
    _, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.reshape(-1)
    verts = mesh.vertices[first]
    tris = inverse[mesh.triangles]

    repeated = (tris[:, 0] == tris[:, 1]) | (tris[:, 1] == tris[:, 2]) | (tris[:, 0] == tris[:, 2])
    c = verts[tris]
    area = 0.5 * np.linalg.norm(np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]), axis=1)
    degenerate = repeated | (area <= _ZERO_AREA)
    tris = tris[~degenerate]

    _, keep = np.unique(np.sort(tris, axis=1), axis=0, return_index=True)
    keep = np.sort(keep)
    n_dup = len(tris) - len(keep)
    tris = tris[keep]
    if not len(tris):
        raise GeometryError("mesh degenerate after cleaning")

    used = np.unique(tris)
    remap = np.full(len(verts), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    stats = {
        "vertices_merged": int(len(mesh.vertices) - len(verts)),
        "vertices_unreferenced": int(len(verts) - len(used)),
        "degenerate_removed": int(degenerate.sum()),
        "duplicates_removed": int(n_dup),
    }
    return TriangleMesh(verts[used], remap[tris], None, stats)


def enclosed_volume(mesh: TriangleMesh) -> tuple[float, bool]:
    """Volume by signed tetrahedron sum; second item is True if approximate."""
    return abs(mesh.signed_volume()), mesh.boundary_edge_count() > 0


# ---------------------------------------------------------------------------
# buildings


@dataclass(frozen=True, eq=False)
class Building:
    id: str
    mesh: TriangleMesh
    bbox_xy: tuple[float, float, float, float]
    height: float
    footprint_area: float
    volume: float
    envelope_area: float
    footprint: Polygon
    source_file: str = ""
    volume_approximate: bool = False

    @property
    def centroid_xy(self) -> tuple[float, float]:
        c = self.footprint.centroid
        return float(c.x), float(c.y)

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "file": self.source_file,
            "bbox_xy": [round(float(x), 6) for x in self.bbox_xy],
            "height_m": round(self.height, 6),
            "footprint_area_m2": round(self.footprint_area, 6),
            "volume_m3": round(self.volume, 6),
            "envelope_area_m2": round(self.envelope_area, 6),
        }


def oriented_outward(mesh: TriangleMesh) -> TriangleMesh:
    """Flip winding when the mesh encloses negative signed volume."""
    if mesh.signed_volume() < 0:
        return replace(mesh, triangles=mesh.triangles[:, ::-1].copy(), normals=None)
    return mesh


def footprint_polygon(mesh: TriangleMesh, min_top: float = -np.inf):
    """Union of the XY projections of upward-facing faces reaching ``min_top``.

    With ``min_top`` set to a slice height this gives the cross-section used
    for obstacle rasterisation; faces whose highest point lies below the slice
    are ignored.
    """
    normals = mesh.face_normals()
    corners = mesh.corners
    up = normals[:, 2] > 1e-9
    if not up.any():
        up = mesh.face_areas() > _ZERO_AREA
    up &= corners[:, :, 2].max(axis=1) >= min_top
    if not up.any():
        return Polygon()
    xy = corners[up][:, :, :2]
    polys = shapely.polygons(np.concatenate([xy, xy[:, :1]], axis=1))
    polys = polys[shapely.area(polys) > _ZERO_AREA]
    if not len(polys):
        return Polygon()
    return unary_union(polys).buffer(0)


def ground_contact_mask(mesh: TriangleMesh, ground_z: float = GROUND_Z, tol: float = 1e-6) -> np.ndarray:
    """Downward faces lying on the ground (not part of the exposed envelope)."""
    n = mesh.face_normals()
    zmax = mesh.corners[:, :, 2].max(axis=1)
    return (n[:, 2] < -0.99) & (zmax <= ground_z + tol)


def make_building(bid: str, mesh: TriangleMesh, source_file: str = "") -> Building:
    mesh = oriented_outward(mesh)
    lo, hi = mesh.bbox()
    fp = footprint_polygon(mesh)
    if fp.is_empty or fp.area <= 0:
        raise GeometryError(f"building {bid}: empty footprint")
    volume, approx = enclosed_volume(mesh)
    areas = mesh.face_areas()
    envelope = float(areas[~ground_contact_mask(mesh)].sum())
    return Building(
        id=bid,
        mesh=mesh,
        bbox_xy=(float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])),
        height=float(max(hi[2] - GROUND_Z, 0.0)),
        footprint_area=float(fp.area),
        volume=volume,
        envelope_area=envelope,
        footprint=fp,
        source_file=source_file,
        volume_approximate=approx,
    )


@dataclass(frozen=True, eq=False)
class BuildingSet:
    buildings: tuple[Building, ...]
    combined_mesh: TriangleMesh
    ground: TriangleMesh | None
    domain_bbox: tuple[float, float, float, float]
    load_errors: tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.buildings)

    def __iter__(self):
        return iter(self.buildings)

    @property
    def ids(self) -> list[str]:
        return [b.id for b in self.buildings]

    def by_id(self, bid: str) -> Building:
        for b in self.buildings:
            if b.id == bid:
                return b
        raise KeyError(bid)

    def plan_extents(self) -> tuple[float, float, float, float]:
        if not self.buildings:
            raise GeometryError("empty building set has no plan extents")
        boxes = np.array([b.bbox_xy for b in self.buildings])
        return (float(boxes[:, 0].min()), float(boxes[:, 1].min()),
                float(boxes[:, 2].max()), float(boxes[:, 3].max()))

    def nearest(self, x: float, y: float, k: int = 2) -> list[str]:
        """IDs of the ``k`` buildings whose footprints are closest to (x, y)."""
        if not self.buildings:
            return []
        pt = shapely.points(x, y)
        d = shapely.distance(np.array([b.footprint for b in self.buildings]), pt)
        order = sorted(range(len(d)), key=lambda i: (round(float(d[i]), 9), self.buildings[i].id))
        return [self.buildings[i].id for i in order[:k]]

    def index_records(self) -> list[dict]:
        return [b.to_record() for b in self.buildings]


@dataclass
class GeometryConfig:
    weld_tolerance: float = DEFAULT_WELD_TOLERANCE
    buffer_factor: float = 1.2
    cell_size: float = 2.0
    id_mode: str = "filename"  # or "order"
    permissive: bool = False
    auto_shift: bool = True
    domain_bbox: tuple[float, float, float, float] | None = None


def normalise_id(stem: str) -> str:
    return re.sub(r"[^0-9a-z]", "_", stem.lower())


def assign_ids(stems: Sequence[str], mode: str = "filename") -> list[str]:
    if mode == "order":
        return [f"b{i + 1:03d}" for i in range(len(stems))]
    if mode != "filename":
        raise GeometryError(f"unknown id_mode {mode!r}")
    seen: dict[str, int] = {}
    taken: set[str] = set()
    out = []
    for stem in stems:
        base = normalise_id(stem)
        bid = base
        while bid in taken:
            seen[base] = seen.get(base, 0) + 1
            bid = f"{base}_{seen[base]}"
        taken.add(bid)
        out.append(bid)
    return out


def build_index(directory, config: GeometryConfig | None = None) -> BuildingSet:
    """Load every ``*.stl`` in ``directory`` into a BuildingSet."""
    config = config or GeometryConfig()
    directory = Path(directory)
    files = sorted(p for p in directory.iterdir() if p.suffix.lower() == ".stl") if directory.is_dir() else []
    if not files:
        raise GeometryError(f"{directory}: no STL files found")
    ids = assign_ids([p.stem for p in files], config.id_mode)
    buildings, errors = [], []
    for bid, path in zip(ids, files):
        try:
            mesh = clean_mesh(load_stl(path), config.weld_tolerance)
            zmin = mesh.vertices[:, 2].min()
            if abs(zmin - GROUND_Z) > 1e-6:
                logger.warning("%s: base at z=%.3f, expected ground z=%.1f%s", path.name, zmin,
                               GROUND_Z, " (shifted)" if config.auto_shift else "")
                if config.auto_shift:
                    mesh = mesh.translated((0.0, 0.0, GROUND_Z - zmin))
            buildings.append(make_building(bid, mesh, path.name))
        except (GeometryError, OSError) as exc:
            msg = f"{path.name}: {exc}"
            if not config.permissive:
                raise GeometryError(msg) from exc
            logger.warning("skipping %s", msg)
            errors.append(msg)
    if not buildings:
        raise GeometryError(f"{directory}: no loadable STL files")
    return assemble(buildings, config, tuple(errors))


def assemble(buildings: Iterable[Building], config: GeometryConfig | None = None,
             load_errors: tuple[str, ...] = ()) -> BuildingSet:
    config = config or GeometryConfig()
    buildings = tuple(buildings)
    ids = [b.id for b in buildings]
    if len(set(ids)) != len(ids):
        raise GeometryError("building IDs must be unique")
    combined = concatenate([b.mesh for b in buildings])
    bset = BuildingSet(buildings, combined, None, (0.0, 0.0, 0.0, 0.0), load_errors)
    if config.domain_bbox is not None:
        domain = tuple(float(x) for x in config.domain_bbox)
    else:
        domain = buffered_extents(bset.plan_extents(), config.buffer_factor)
    ground = _ground_mesh(domain, config.cell_size)
    return replace(bset, ground=ground, domain_bbox=domain)


def concatenate(meshes: Sequence[TriangleMesh]) -> TriangleMesh:
    if not meshes:
        return TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
    offsets = np.cumsum([0] + [len(m.vertices) for m in meshes[:-1]])
    verts = np.concatenate([m.vertices for m in meshes])
    tris = np.concatenate([m.triangles + o for m, o in zip(meshes, offsets)])
    return TriangleMesh(verts, tris)


def buffered_extents(extents, factor: float) -> tuple[float, float, float, float]:
    if factor < 1:
        raise GeometryError("buffer_factor must be >= 1")
    x0, y0, x1, y1 = extents
    w, d = x1 - x0, y1 - y0
    if w <= 0 or d <= 0:
        raise GeometryError("degenerate plan extents")
    cx, cy = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
    return (cx - 0.5 * w * factor, cy - 0.5 * d * factor, cx + 0.5 * w * factor, cy + 0.5 * d * factor)


def generate_ground_plane(bset: BuildingSet, buffer_factor: float = 1.2,
                          cell_size: float = 2.0) -> TriangleMesh:
    """Rectangular z=0 plane around the buildings, two triangles per grid cell."""
    return _ground_mesh(buffered_extents(bset.plan_extents(), buffer_factor), cell_size)


@dataclass(frozen=True)
class Grid2D:
    origin: tuple[float, float]
    cell_size: float
    nx: int
    ny: int

    @classmethod
    def covering(cls, extents, cell_size: float) -> "Grid2D":
        x0, y0, x1, y1 = extents
        nx = max(1, int(math.ceil((x1 - x0) / cell_size - 1e-9)))
        ny = max(1, int(math.ceil((y1 - y0) / cell_size - 1e-9)))
        return cls((float(x0), float(y0)), float(cell_size), nx, ny)

    def centres(self) -> tuple[np.ndarray, np.ndarray]:
        """Cell-centre coordinate arrays, each shaped (ny, nx)."""
        xs = self.origin[0] + (np.arange(self.nx) + 0.5) * self.cell_size
        ys = self.origin[1] + (np.arange(self.ny) + 0.5) * self.cell_size
        return np.meshgrid(xs, ys)

    @property
    def extents(self) -> tuple[float, float, float, float]:
        x0, y0 = self.origin
        return (x0, y0, x0 + self.nx * self.cell_size, y0 + self.ny * self.cell_size)


def _ground_mesh(extents, cell_size: float) -> TriangleMesh:
    x0, y0, x1, y1 = extents
    if x1 - x0 <= 0 or y1 - y0 <= 0:
        raise GeometryError("degenerate plan extents")
    nx = max(1, int(math.ceil((x1 - x0) / cell_size - 1e-9)))
    ny = max(1, int(math.ceil((y1 - y0) / cell_size - 1e-9)))
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    gx, gy = np.meshgrid(xs, ys)
    verts = np.column_stack([gx.ravel(), gy.ravel(), np.full(gx.size, GROUND_Z)])
    j, i = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
    a = (j * (nx + 1) + i).ravel()
    b, c, d = a + 1, a + nx + 2, a + nx + 1
    tris = np.empty((2 * a.size, 3), dtype=np.int64)
    tris[0::2] = np.column_stack([a, b, c])
    tris[1::2] = np.column_stack([a, c, d])
    return TriangleMesh(verts, tris, None, {"nx": nx, "ny": ny})


@dataclass(frozen=True, eq=False)
class ObstacleMask:
    origin: tuple[float, float]
    cell_size: float
    nx: int
    ny: int
    cells: np.ndarray  # bool (ny, nx)

    @property
    def grid(self) -> Grid2D:
        return Grid2D(self.origin, self.cell_size, self.nx, self.ny)


def rasterize_footprints(bset: BuildingSet, cell_size: float, slice_height: float,
                         extents=None) -> ObstacleMask:
    """Mark cells whose centre lies inside a building cross-section at ``slice_height``."""
    if cell_size <= 0:
        raise GeometryError("cell_size must be positive")
    if extents is None:
        extents = bset.domain_bbox if bset.buildings else (0.0, 0.0, cell_size, cell_size)
    grid = Grid2D.covering(extents, cell_size)
    cells = np.zeros((grid.ny, grid.nx), dtype=bool)
    if bset.buildings:
        cx, cy = grid.centres()
        for b in bset.buildings:
            if b.height < slice_height:
                continue
            poly = footprint_polygon(b.mesh, slice_height)
            if poly.is_empty:
                continue
            x0, y0, x1, y1 = poly.bounds
            sel = (cx >= x0) & (cx <= x1) & (cy >= y0) & (cy <= y1) & ~cells
            if sel.any():
                cells[sel] = shapely.contains_xy(poly, cx[sel], cy[sel])
    return ObstacleMask(grid.origin, grid.cell_size, grid.nx, grid.ny, cells)


# ---------------------------------------------------------------------------
# artefacts


def _outline_rings(poly) -> list[np.ndarray]:
    geoms = getattr(poly, "geoms", [poly])
    return [np.asarray(g.exterior.coords) for g in geoms if not g.is_empty]


def render_index_map(bset: BuildingSet, path, tick_spacing: float = 100.0) -> Path:
    """Plan-view SVG: one outline polygon and one ID label per building.

    The drawing uses metres as user units (y flipped so north is up); the
    frame and tick marks are plain paths so that the only ``<text>`` elements
    are building labels.
    """
    if not bset.buildings:
        raise GeometryError("index map needs at least one building")
    x0, y0, x1, y1 = bset.domain_bbox if bset.ground is not None else bset.plan_extents()
    w, h = x1 - x0, y1 - y0
    pad = 0.05 * max(w, h)
    font = max(w, h) / 60.0
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="800" height="{800 * (h + 2 * pad) / (w + 2 * pad):.1f}" '
        f'viewBox="{x0 - pad:.3f} {-(y1 + pad):.3f} {w + 2 * pad:.3f} {h + 2 * pad:.3f}">',
        f"<desc>Building index map; user units are metres (x east, y north); "
        f"ticks every {tick_spacing:g} m; frame {x0:.3f} {y0:.3f} {x1:.3f} {y1:.3f}</desc>",
        '<g transform="scale(1,-1)">',
        f'<rect x="{x0:.3f}" y="{y0:.3f}" width="{w:.3f}" height="{h:.3f}" fill="none" '
        f'stroke="#888" stroke-width="{font / 10:.3f}"/>',
    ]
    ticks = []
    for tx in np.arange(math.ceil(x0 / tick_spacing) * tick_spacing, x1 + 1e-9, tick_spacing):
        ticks.append(f"M{tx:.3f} {y0:.3f}V{y0 + font:.3f}")
    for ty in np.arange(math.ceil(y0 / tick_spacing) * tick_spacing, y1 + 1e-9, tick_spacing):
        ticks.append(f"M{x0:.3f} {ty:.3f}H{x0 + font:.3f}")
    if ticks:
        out.append(f'<path d="{" ".join(ticks)}" stroke="#888" stroke-width="{font / 10:.3f}"/>')
    labels = []
    for b in bset.buildings:
        rings = _outline_rings(b.footprint)
        pts = " ".join(f"{x:.3f},{y:.3f}" for x, y in rings[0][:-1])
        out.append(f'<polygon id="outline-{b.id}" points="{pts}" fill="#d9d9d9" '
                   f'stroke="#333" stroke-width="{font / 8:.3f}"/>')
        cx, cy = b.centroid_xy
        labels.append(f'<text x="{cx:.3f}" y="{-cy:.3f}" font-size="{font:.3f}" '
                      f'text-anchor="middle" dominant-baseline="middle">{b.id}</text>')
    out.append("</g>")
    out.extend(labels)
    out.append("</svg>")
    path = Path(path)
    path.write_text("\n".join(out) + "\n")
    return path


def write_building_index(bset: BuildingSet, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(bset.index_records(), indent=2) + "\n")
    return path


def box_mesh(x0, y0, z0, x1, y1, z1) -> TriangleMesh:
    """Closed axis-aligned box between two corners, outward winding."""
    v = np.array([
        [x0, y0, z0], [x1, y0, z0], [x1, y1, z0], [x0, y1, z0],
        [x0, y0, z1], [x1, y0, z1], [x1, y1, z1], [x0, y1, z1],
    ], dtype=float)
    t = np.array([
        [0, 2, 1], [0, 3, 2],        # bottom
        [4, 5, 6], [4, 6, 7],        # top
        [0, 1, 5], [0, 5, 4],        # south (y0)
        [1, 2, 6], [1, 6, 5],        # east (x1)
        [2, 3, 7], [2, 7, 6],        # north (y1)
        [3, 0, 4], [3, 4, 7],        # west (x0)
    ])
    return TriangleMesh(v, t)
