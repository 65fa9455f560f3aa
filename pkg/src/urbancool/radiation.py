"""Surface radiation, transient surface energy balance and pedestrian MRT.

Surfaces are triangles: building envelopes subdivided to a target size plus
two ground triangles per simulation grid cell.  One batch of cosine-weighted
hemisphere rays per receiver gives its sky view factor and a sparse view
matrix onto the other surfaces; the matrix supplies both the surroundings
longwave term and the mean albedo of what a receiver sees.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .geometry import BuildingSet, Grid2D, ground_contact_mask, rasterize_footprints
from .raytrace import BVH, RAY_EPS, cosine_directions

SIGMA = 5.670374419e-8
T_MIN, T_MAX = 200.0, 400.0
ROOF, WALL, GROUND = 0, 1, 2
CLASS_NAMES = ("roof", "wall", "ground")


class SurfaceDivergence(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# surfaces


def subdivide(corners: np.ndarray, max_edge: float) -> tuple[np.ndarray, np.ndarray]:
    """Longest-edge bisection until no edge exceeds ``max_edge``.

    Returns the new corners and, for each, the index of its parent triangle.
    Winding is preserved.
    """
    tri = np.asarray(corners, dtype=float)
    parent = np.arange(len(tri))
    while True:
        edges = np.stack([np.linalg.norm(tri[:, (k + 1) % 3] - tri[:, k], axis=1) for k in range(3)], axis=1)
        longest = edges.argmax(axis=1)
        split = edges.max(axis=1) > max_edge * (1 + 1e-9)
        if not split.any():
            return tri, parent
        t = tri[split]
        k = longest[split]
        n = np.arange(len(t))
        a = t[n, k]
        b = t[n, (k + 1) % 3]
        c = t[n, (k + 2) % 3]
        m = 0.5 * (a + b)
        first = np.stack([a, m, c], axis=1)
        second = np.stack([m, b, c], axis=1)
        tri = np.concatenate([tri[~split], first, second])
        parent = np.concatenate([parent[~split], parent[split], parent[split]])


@dataclass(frozen=True, eq=False)
class SurfaceSet:
    corners: np.ndarray        # (n, 3, 3)
    normals: np.ndarray        # (n, 3) unit
    areas: np.ndarray
    centroids: np.ndarray
    cls: np.ndarray            # ROOF / WALL / GROUND
    building: np.ndarray       # index into building_ids, -1 for ground
    building_ids: tuple[str, ...]
    covered: np.ndarray        # ground triangles under a footprint (inactive)
    grid: Grid2D               # ground triangulation grid
    n_building_faces: int

    def __len__(self):
        return len(self.areas)

    @property
    def active(self) -> np.ndarray:
        return ~self.covered

    def ground_face(self, x, y) -> np.ndarray:
        """Index of the ground triangle containing (x, y), clamped to the grid."""
        g = self.grid
        fx = (np.asarray(x) - g.origin[0]) / g.cell_size
        fy = (np.asarray(y) - g.origin[1]) / g.cell_size
        i = np.clip(np.floor(fx).astype(np.int64), 0, g.nx - 1)
        j = np.clip(np.floor(fy).astype(np.int64), 0, g.ny - 1)
        lx = np.clip(fx - i, 0.0, 1.0)
        ly = np.clip(fy - j, 0.0, 1.0)
        return self.n_building_faces + 2 * (j * g.nx + i) + (ly > lx)

    def material(self, params, prop: str) -> np.ndarray:
        """Per-face material property honouring per-building overrides."""
        out = np.empty(len(self))
        for c, name in enumerate(CLASS_NAMES):
            out[self.cls == c] = params[f"material.{name}.{prop}"] if f"material.{name}.{prop}" in params else np.nan
        overrides = params["material.building_overrides"]
        for bi, bid in enumerate(self.building_ids):
            ov = overrides.get(bid)
            if not ov:
                continue
            for c, name in enumerate(CLASS_NAMES[:2]):
                key = f"{name}.{prop}"
                if key in ov:
                    out[(self.building == bi) & (self.cls == c)] = ov[key]
        return out


def ground_grid(bset: BuildingSet, cell_size: float) -> Grid2D:
    return Grid2D.covering(bset.domain_bbox, cell_size)


def build_surfaces(bset: BuildingSet, grid: Grid2D, face_size: float = 4.0) -> SurfaceSet:
    corners, cls, owner = [], [], []
    for bi, b in enumerate(bset.buildings):
        m = b.mesh
        keep = ~ground_contact_mask(m)
        sub, _ = subdivide(m.corners[keep], face_size * math.sqrt(2.0))
        n = np.cross(sub[:, 1] - sub[:, 0], sub[:, 2] - sub[:, 0])
        nz = n[:, 2] / np.maximum(np.linalg.norm(n, axis=1), 1e-300)
        corners.append(sub)
        cls.append(np.where(nz > 0.7, ROOF, WALL))
        owner.append(np.full(len(sub), bi))
    nb = int(sum(len(c) for c in corners))

    x0, y0 = grid.origin
    h = grid.cell_size
    xs = x0 + np.arange(grid.nx + 1) * h
    ys = y0 + np.arange(grid.ny + 1) * h
    jj, ii = np.meshgrid(np.arange(grid.ny), np.arange(grid.nx), indexing="ij")
    jj, ii = jj.ravel(), ii.ravel()
    a = np.stack([xs[ii], ys[jj], np.zeros_like(jj, dtype=float)], axis=1)
    b_ = np.stack([xs[ii + 1], ys[jj], np.zeros(len(jj))], axis=1)
    c = np.stack([xs[ii + 1], ys[jj + 1], np.zeros(len(jj))], axis=1)
    d = np.stack([xs[ii], ys[jj + 1], np.zeros(len(jj))], axis=1)
    ground = np.empty((2 * len(jj), 3, 3))
    ground[0::2] = np.stack([a, b_, c], axis=1)
    ground[1::2] = np.stack([a, c, d], axis=1)
    if bset.buildings:
        cover_cells = rasterize_footprints(bset, h, 0.0, extents=grid.extents).cells.ravel()
    else:
        cover_cells = np.zeros(len(jj), dtype=bool)
    covered = np.concatenate([np.zeros(nb, dtype=bool), np.repeat(cover_cells, 2)])

    allc = np.concatenate(corners + [ground]) if corners else ground
    n = np.cross(allc[:, 1] - allc[:, 0], allc[:, 2] - allc[:, 0])
    norm = np.linalg.norm(n, axis=1)
    return SurfaceSet(
        corners=allc,
        normals=n / norm[:, None],
        areas=0.5 * norm,
        centroids=allc.mean(axis=1),
        cls=np.concatenate(cls + [np.full(len(ground), GROUND)]) if cls else np.full(len(ground), GROUND),
        building=np.concatenate(owner + [np.full(len(ground), -1)]) if owner else np.full(len(ground), -1),
        building_ids=tuple(bset.ids),
        covered=covered,
        grid=grid,
        n_building_faces=nb,
    )


# ---------------------------------------------------------------------------
# visibility


def _classify(surfaces: SurfaceSet, bvh: BVH, origins, dirs):
    """Target face per ray (-1 = sky) from building hits and the ground plane."""
    hit, _ = bvh.closest(origins, dirs)
    down = (hit < 0) & (dirs[:, 2] < 0)
    if down.any():
        t = -origins[down, 2] / dirs[down, 2]
        gx = origins[down, 0] + t * dirs[down, 0]
        gy = origins[down, 1] + t * dirs[down, 1]
        hit[down] = surfaces.ground_face(gx, gy)
    return hit


def _views(surfaces: SurfaceSet, bvh: BVH, origins, normals, n_samples, rng, chunk=4096):
    n_rec = len(origins)
    svf = np.zeros(n_rec)
    rows, cols = [], []
    for s in range(0, n_rec, chunk):
        e = min(n_rec, s + chunk)
        dirs = cosine_directions(normals[s:e], n_samples, rng).reshape(-1, 3)
        o = np.repeat(origins[s:e], n_samples, axis=0)
        target = _classify(surfaces, bvh, o, dirs)
        rec = np.repeat(np.arange(s, e), n_samples)
        sky = target < 0
        svf[s:e] = np.bincount(rec[sky] - s, minlength=e - s) / n_samples
        rows.append(rec[~sky])
        cols.append(target[~sky])
    r = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    c = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
    view = sp.csr_matrix((np.full(len(r), 1.0 / n_samples), (r, c)), shape=(n_rec, len(surfaces)))
    view.sum_duplicates()
    return svf, view


@dataclass(frozen=True, eq=False)
class PedestrianGrid:
    grid: Grid2D
    valid: np.ndarray          # (ny, nx)
    points: np.ndarray         # (m, 3) valid points only
    svf_upper: np.ndarray      # upper-hemisphere sky view factor (used for cause tags)
    svf: np.ndarray            # person-sphere sky fraction, 0.5 * svf_upper
    view: sp.csr_matrix        # (m, n_faces) person-sphere view weights onto surfaces

    def to_grid(self, values, fill=np.nan) -> np.ndarray:
        out = np.full(self.valid.shape, fill, dtype=float)
        out[self.valid] = values
        return out


@dataclass(frozen=True, eq=False)
class RadiationScene:
    surfaces: SurfaceSet
    bvh: BVH
    svf: np.ndarray            # per face
    view: sp.csr_matrix        # (n_faces, n_faces)
    pedestrian: PedestrianGrid
    n_samples: int
    seed: int

    @classmethod
    def build(cls, surfaces: SurfaceSet, n_samples: int = 64, seed: int = 42,
              pedestrian_height: float = 2.0, footprint_mask: np.ndarray | None = None) -> "RadiationScene":
        nb = surfaces.n_building_faces
        bvh = BVH(surfaces.corners[:nb])
        rng = np.random.default_rng(seed)
        active = np.flatnonzero(surfaces.active)
        origins = surfaces.centroids[active] + RAY_EPS * surfaces.normals[active]
        svf_a, view_a = _views(surfaces, bvh, origins, surfaces.normals[active], n_samples, rng)
        n = len(surfaces)
        svf = np.zeros(n)
        svf[active] = svf_a
        expand = sp.csr_matrix((np.ones(len(active)), (active, np.arange(len(active)))), shape=(n, len(active)))
        view = (expand @ view_a).tocsr()

        g = surfaces.grid
        valid = ~footprint_mask if footprint_mask is not None else \
            ~surfaces.covered[nb::2].reshape(g.ny, g.nx)
        cx, cy = g.centres()
        pts = np.column_stack([cx[valid], cy[valid], np.full(int(valid.sum()), pedestrian_height)])
        up = np.tile([0.0, 0.0, 1.0], (len(pts), 1))
        svf_up, view_up = _views(surfaces, bvh, pts, up, n_samples, rng)
        # lower half of the person sphere sees the ground cell beneath (both triangles)
        base = nb + 2 * (np.flatnonzero(valid.ravel()))
        m = len(pts)
        below = sp.csr_matrix((np.full(2 * m, 0.25), (np.repeat(np.arange(m), 2),
                                                      np.column_stack([base, base + 1]).ravel())),
                              shape=(m, n))
        ped = PedestrianGrid(g, valid, pts, svf_up, 0.5 * svf_up, (0.5 * view_up + below).tocsr())
        return cls(surfaces, bvh, svf, view, ped, n_samples, seed)

    def sun_exposure(self, sun_dir) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(cos incidence per face, face lit flags, pedestrian lit flags) for a sun direction."""
        s = np.asarray(sun_dir, dtype=float)
        n = len(self.surfaces)
        if s[2] <= 0:
            return np.zeros(n), np.zeros(n, dtype=bool), np.zeros(len(self.pedestrian.points), dtype=bool)
        cosi = self.surfaces.normals @ s
        facing = (cosi > 0) & self.surfaces.active
        lit = np.zeros(n, dtype=bool)
        idx = np.flatnonzero(facing)
        o = self.surfaces.centroids[idx] + RAY_EPS * self.surfaces.normals[idx]
        lit[idx] = ~self.bvh.occluded(o, s[None, :])
        ped_lit = ~self.bvh.occluded(self.pedestrian.points, s[None, :])
        return np.maximum(cosi, 0.0), lit, ped_lit


def compute_svf(bvh: BVH, point, normal=(0.0, 0.0, 1.0), n_samples: int = 64, seed: int = 0) -> float:
    """Fraction of cosine-weighted rays about ``normal`` that reach the sky."""
    if n_samples < 16:
        raise ValueError("n_samples must be at least 16")
    normal = np.asarray(normal, dtype=float)
    normal = normal / np.linalg.norm(normal)
    dirs = cosine_directions(normal[None, :], n_samples, np.random.default_rng(seed))[0]
    o = np.repeat(np.asarray(point, dtype=float)[None, :] + RAY_EPS * normal, n_samples, axis=0)
    hit = bvh.occluded(o, dirs)
    return float(np.mean(~hit & (dirs[:, 2] > 0)))


def shadow_test(bvh: BVH, point, sun_direction) -> bool:
    """True when the point sees the sun (sun above horizon, nothing in the way)."""
    s = np.asarray(sun_direction, dtype=float)
    if s[2] <= 0:
        return False
    return not bool(bvh.occluded(np.asarray(point, dtype=float)[None, :], s[None, :])[0])


# ---------------------------------------------------------------------------
# fluxes


def shortwave_in(lit, dni, dhi, cos_incidence, svf, rho_context, ghi):
    """Incident shortwave: direct + sky diffuse + single-bounce reflection from surroundings."""
    lit = np.asarray(lit, dtype=float)
    return (lit * dni * np.maximum(0.0, cos_incidence) + dhi * np.asarray(svf)
            + np.asarray(rho_context) * ghi * (1.0 - np.asarray(svf)))


def longwave_exchange(emissivity, t_surf, t_surround, t_air, svf, sky_emissivity: float = 0.85):
    """(q_lw_in, q_lw_out) in W/m2, temperatures in K."""
    svf = np.asarray(svf, dtype=float)
    q_in = svf * sky_emissivity * SIGMA * np.asarray(t_air) ** 4 + (1.0 - svf) * SIGMA * np.asarray(t_surround) ** 4
    q_out = np.asarray(emissivity) * SIGMA * np.asarray(t_surf) ** 4
    return q_in, q_out


def convective_coefficient(wind_speed, a: float = 5.7, b: float = 3.8):
    return a + b * np.asarray(wind_speed, dtype=float)


def step_surface_temperature(t0, q_abs, emissivity, h_conv, t_air, c_areal, dt):
    """One semi-implicit step of C dT/dt = Q_abs - eps sigma T^4 - H (T - T_air).

    Emission is linearised about ``t0`` and, with convection, treated
    implicitly; absorbed radiation is explicit.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    t0 = np.asarray(t0, dtype=float)
    eps_sigma = np.asarray(emissivity) * SIGMA
    k = np.asarray(c_areal) / dt
    lin = 4.0 * eps_sigma * t0 ** 3
    t1 = (k * t0 + q_abs - eps_sigma * t0 ** 4 + lin * t0 + h_conv * t_air) / (k + lin + h_conv)
    bad = ~((t1 >= T_MIN) & (t1 <= T_MAX))
    if np.any(bad):
        i = int(np.flatnonzero(np.atleast_1d(bad))[0])
        raise SurfaceDivergence(
            f"surface temperature left [{T_MIN:g}, {T_MAX:g}] K at face {i}: "
            f"T0={np.atleast_1d(t0)[i]:.2f} K -> {np.atleast_1d(t1)[i]:.2f} K, "
            f"Q_abs={np.atleast_1d(np.broadcast_to(q_abs, t1.shape))[i]:.1f} W/m2")
    return t1


def mean_radiant_temperature(dni, dhi, lit, svf, reflected_sw, t_air_k, surround_lw,
                             sky_emissivity=0.85, alpha_sw=0.7, alpha_lw=0.97, f_p=0.7):
    """MRT (deg C) from absorbed short- and longwave radiation on a person.

    ``surround_lw`` is the surroundings term (1 - svf) sigma T_surround^4 in W/m2.
    """
    svf = np.asarray(svf, dtype=float)
    s = (alpha_sw * (f_p * dni * np.asarray(lit, dtype=float) + dhi * svf + reflected_sw)
         + alpha_lw * (svf * sky_emissivity * SIGMA * np.asarray(t_air_k) ** 4 + surround_lw))
    return (s / (alpha_lw * SIGMA)) ** 0.25 - 273.15


def mrt_at_point(dni, dhi, lit, svf, rho_context, ghi, t_air_k, t_surround_k, **kw):
    """Scalar-friendly MRT with the mean-field surroundings temperature."""
    svf = np.asarray(svf, dtype=float)
    refl = np.asarray(rho_context) * ghi * (1.0 - svf)
    surround = (1.0 - svf) * SIGMA * np.asarray(t_surround_k) ** 4
    return mean_radiant_temperature(dni, dhi, lit, svf, refl, t_air_k, surround, **kw)
