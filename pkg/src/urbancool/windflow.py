"""Pseudo-3D wind: 2D potential flow around building footprints at fixed heights.

Each horizontal slice solves the discrete Laplace equation for a velocity
potential on the cell-centred obstacle grid.  The outer ring of cells carries
the uniform-flow potential (Dirichlet) and faces shared with building cells
carry zero flux.  Because the problem is linear in the inflow vector, every
slice is solved once for unit +x and unit +y inflow; any speed/direction is
then a linear combination of the two (see :class:`WindBasis`).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numba
import numpy as np
import scipy.ndimage as ndi
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import Grid2D, ObstacleMask

logger = logging.getLogger(__name__)

REFERENCE_HEIGHT = 10.0
DEFAULT_SLICE_HEIGHTS = (2.0, 10.0, 20.0, 30.0, 40.0, 50.0, 100.0)


class WindError(ValueError):
    pass


def log_profile(u10, z, z0: float = 0.5):
    """Wind speed at height ``z`` from the 10 m speed; zero at and below ``z0``."""
    if not (0.0 < z0 < REFERENCE_HEIGHT):
        raise WindError(f"roughness length z0={z0} must lie in (0, {REFERENCE_HEIGHT}) m")
    z = np.asarray(z, dtype=float)
    ratio = np.log(np.maximum(z, z0) / z0) / math.log(REFERENCE_HEIGHT / z0)
    out = np.asarray(u10, dtype=float) * ratio
    return float(out) if out.ndim == 0 else out


def flow_vector(speed: float, direction_deg: float) -> tuple[float, float]:
    """(u, v) of a meteorological wind: ``direction_deg`` is where it blows *from*."""
    th = math.radians(direction_deg)
    return -speed * math.sin(th), -speed * math.cos(th)


# ---------------------------------------------------------------------------
# discrete potential problem


@dataclass(frozen=True, eq=False)
class UnitPotential:
    """Potentials and face velocities of one slice for unit +x and +y inflow."""

    mask: ObstacleMask
    phi: np.ndarray        # (2, ny, nx)
    face_u: np.ndarray     # (2, ny, nx+1) x-velocity on vertical faces
    face_v: np.ndarray     # (2, ny+1, nx) y-velocity on horizontal faces
    residual: float
    iterations: int = 0

    def combine(self, a: float, b: float):
        """Cell-centred (u, v) for inflow vector (a, b)."""
        fu = a * self.face_u[0] + b * self.face_u[1]
        fv = a * self.face_v[0] + b * self.face_v[1]
        u = 0.5 * (fu[:, 1:] + fu[:, :-1])
        v = 0.5 * (fv[1:, :] + fv[:-1, :])
        u[self.mask.cells] = 0.0
        v[self.mask.cells] = 0.0
        return u, v, fu, fv


def _layout(mask: ObstacleMask):
    cells = mask.cells
    ny, nx = cells.shape
    fluid = ~cells
    if not fluid.any():
        raise WindError("fully masked domain: no fluid cells")
    ring = np.zeros_like(fluid)
    ring[0, :] = ring[-1, :] = ring[:, 0] = ring[:, -1] = True
    labels, _ = ndi.label(fluid)
    connected = np.isin(labels, np.unique(labels[ring & fluid]))
    connected[~fluid] = False
    unknown = fluid & ~ring & connected
    return fluid, ring & fluid, unknown, connected


def _boundary_potential(grid: Grid2D):
    cx, cy = grid.centres()
    return cx - grid.origin[0], cy - grid.origin[1]


def _assemble(fluid, unknown):
    ny, nx = fluid.shape
    idx = -np.ones(fluid.shape, dtype=np.int64)
    n = int(unknown.sum())
    idx[unknown] = np.arange(n)
    rows, cols, vals = [], [], []
    diag = np.zeros(n)
    nbr_known = []  # (row, j, i) of Dirichlet neighbours
    jj, ii = np.nonzero(unknown)
    me = idx[jj, ii]
    for dj, di in ((0, 1), (0, -1), (1, 0), (-1, 0)):
        j2, i2 = jj + dj, ii + di
        ok = fluid[j2, i2]
        diag[me[ok]] -= 1.0
        is_unknown = ok & unknown[j2, i2]
        rows.append(me[is_unknown])
        cols.append(idx[j2[is_unknown], i2[is_unknown]])
        vals.append(np.ones(int(is_unknown.sum())))
        kn = ok & ~unknown[j2, i2]
        nbr_known.append((me[kn], j2[kn], i2[kn]))
    rows.append(np.arange(n))
    cols.append(np.arange(n))
    vals.append(diag)
    A = sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    return A, idx, nbr_known


def _face_velocities(phi, fluid, grid: Grid2D, inflow):
    """Face-normal velocities; zero on building faces, free stream on the outer boundary."""
    h = grid.cell_size
    ny, nx = phi.shape
    fu = np.zeros((ny, nx + 1))
    fv = np.zeros((ny + 1, nx))
    both = fluid[:, 1:] & fluid[:, :-1]
    fu[:, 1:-1] = np.where(both, (phi[:, 1:] - phi[:, :-1]) / h, 0.0)
    fu[:, 0] = np.where(fluid[:, 0], inflow[0], 0.0)
    fu[:, -1] = np.where(fluid[:, -1], inflow[0], 0.0)
    both = fluid[1:, :] & fluid[:-1, :]
    fv[1:-1, :] = np.where(both, (phi[1:, :] - phi[:-1, :]) / h, 0.0)
    fv[0, :] = np.where(fluid[0, :], inflow[1], 0.0)
    fv[-1, :] = np.where(fluid[-1, :], inflow[1], 0.0)
    return fu, fv


@numba.njit(cache=True)
def _sor_sweeps(phi, fluid, unknown, omega, tol, max_iters):
    ny, nx = phi.shape
    it = 0
    delta = np.inf
    while it < max_iters:
        delta = 0.0
        for colour in range(2):
            for j in range(1, ny - 1):
                for i in range(1, nx - 1):
                    if (i + j) % 2 != colour or not unknown[j, i]:
                        continue
                    s = 0.0
                    k = 0
                    if fluid[j, i + 1]:
                        s += phi[j, i + 1]
                        k += 1
                    if fluid[j, i - 1]:
                        s += phi[j, i - 1]
                        k += 1
                    if fluid[j + 1, i]:
                        s += phi[j + 1, i]
                        k += 1
                    if fluid[j - 1, i]:
                        s += phi[j - 1, i]
                        k += 1
                    if k == 0:
                        continue
                    d = omega * (s / k - phi[j, i])
                    phi[j, i] += d
                    if abs(d) > delta:
                        delta = abs(d)
        it += 1
        if delta <= tol:
            break
    return it, delta


def _residual(phi, fluid, unknown, h):
    """Max |net face flux| over unknown cells, in velocity units (m/s)."""
    r = np.zeros_like(phi)
    for dj, di in ((0, 1), (0, -1), (1, 0), (-1, 0)):
        nb = np.roll(np.roll(phi, -dj, 0), -di, 1)
        ok = np.roll(np.roll(fluid, -dj, 0), -di, 1)
        r += np.where(ok, nb - phi, 0.0)
    return float(np.abs(r[unknown]).max() / h) if unknown.any() else 0.0


def solve_unit(mask: ObstacleMask, method: str = "direct", tolerance: float = 1e-6,
               max_iters: int = 20000, omega: float = 1.8) -> UnitPotential:
    """Solve the slice for unit +x and unit +y inflow."""
    grid = mask.grid
    fluid, ring, unknown, connected = _layout(mask)
    bx, by = _boundary_potential(grid)
    phis = np.zeros((2,) + fluid.shape)
    for k, bnd in enumerate((bx, by)):
        phis[k][ring] = bnd[ring]
    iterations = 0
    if unknown.any():
        if method == "direct":
            A, idx, nbr_known = _assemble(fluid, unknown)
            lu = spla.splu(A.tocsc(), permc_spec="COLAMD")
            for k in range(2):
                b = np.zeros(A.shape[0])
                for rows, j2, i2 in nbr_known:
                    np.add.at(b, rows, -phis[k][j2, i2])
                phis[k][unknown] = lu.solve(b)[idx[unknown]]
        elif method == "sor":
            for k, bnd in enumerate((bx, by)):
                phi = phis[k]
                phi[unknown] = bnd[unknown]  # uniform-flow initial guess
                scale = grid.cell_size
                it, delta = _sor_sweeps(phi, fluid, unknown, omega, tolerance * scale, max_iters)
                iterations = max(iterations, int(it))
                if delta > tolerance * scale:
                    raise WindError(f"SOR did not converge in {max_iters} sweeps "
                                    f"(last max |dphi| {delta:.3e})")
        else:
            raise WindError(f"unknown solver {method!r}")
    phis[:, ~connected] = 0.0
    res = max(_residual(phis[k], fluid, unknown, grid.cell_size) for k in range(2))
    if method == "direct" and res > tolerance:
        raise WindError(f"linear solve residual {res:.3e} exceeds tolerance {tolerance:g}")
    fus, fvs = [], []
    for k, inflow in enumerate(((1.0, 0.0), (0.0, 1.0))):
        fu, fv = _face_velocities(phis[k], connected, grid, inflow)
        fus.append(fu)
        fvs.append(fv)
    return UnitPotential(mask, phis, np.array(fus), np.array(fvs), res, iterations)


# ---------------------------------------------------------------------------
# slices and volumes


@dataclass(frozen=True, eq=False)
class Slice2D:
    height: float
    grid: Grid2D
    u: np.ndarray
    v: np.ndarray
    mask: ObstacleMask
    face_u: np.ndarray
    face_v: np.ndarray
    free_stream: float = 0.0
    direction: float = 0.0
    residual: float = 0.0

    @property
    def speed(self) -> np.ndarray:
        return np.hypot(self.u, self.v)

    def divergence(self) -> np.ndarray:
        """Net outward face-velocity sum per cell (m/s); zero for conserved cells."""
        return (self.face_u[:, 1:] - self.face_u[:, :-1]) + (self.face_v[1:, :] - self.face_v[:-1, :])

    def interior_fluid(self) -> np.ndarray:
        sel = ~self.mask.cells.copy()
        sel[0, :] = sel[-1, :] = sel[:, 0] = sel[:, -1] = False
        return sel


def solve_slice(mask: ObstacleMask, inflow_speed: float, inflow_dir: float, tolerance: float = 1e-6,
                max_iters: int = 20000, method: str = "direct", omega: float = 1.8,
                height: float = 0.0) -> Slice2D:
    if inflow_speed < 0:
        raise WindError("inflow speed must be non-negative")
    basis = solve_unit(mask, method, tolerance, max_iters, omega)
    return _slice_from(basis, height, inflow_speed, inflow_dir)


def _slice_from(basis: UnitPotential, height, speed, direction) -> Slice2D:
    a, b = flow_vector(speed, direction)
    u, v, fu, fv = basis.combine(a, b)
    return Slice2D(height, basis.mask.grid, u, v, basis.mask, fu, fv, speed, direction,
                   basis.residual * max(abs(a), abs(b)))


@dataclass(frozen=True, eq=False)
class WindVolume:
    slices: tuple[Slice2D, ...]
    z0: float
    u10: float
    dir10: float

    @property
    def heights(self) -> np.ndarray:
        return np.array([s.height for s in self.slices])

    @property
    def grid(self) -> Grid2D:
        return self.slices[0].grid


@dataclass(frozen=True, eq=False)
class WindBasis:
    """Unit solutions for every slice height; cheap to turn into any hour's volume."""

    heights: tuple[float, ...]
    units: tuple[UnitPotential, ...]
    z0: float
    _cache: dict = field(default_factory=dict, repr=False)

    @classmethod
    def build(cls, masks, z0: float = 0.5, method: str = "direct", tolerance: float = 1e-6,
              max_iters: int = 20000, omega: float = 1.8) -> "WindBasis":
        """``masks`` maps slice height -> ObstacleMask (all on one grid)."""
        heights = tuple(sorted(float(h) for h in masks))
        if any(b <= a for a, b in zip(heights, heights[1:])):
            raise WindError("slice heights must be strictly increasing")
        log_profile(1.0, 10.0, z0)  # validates z0
        units = tuple(solve_unit(masks[h], method, tolerance, max_iters, omega) for h in heights)
        return cls(heights, units, z0)

    def volume(self, u10: float, dir10: float) -> WindVolume:
        key = (float(u10), float(dir10))
        if key not in self._cache:
            slices = tuple(_slice_from(unit, h, log_profile(u10, h, self.z0), dir10)
                           for h, unit in zip(self.heights, self.units))
            self._cache.clear()
            self._cache[key] = WindVolume(slices, self.z0, float(u10), float(dir10))
        return self._cache[key]


def assemble_pseudo3d(masks, u10: float, dir10: float, z0: float = 0.5, method: str = "direct",
                      tolerance: float = 1e-6, max_iters: int = 20000, omega: float = 1.8) -> WindVolume:
    return WindBasis.build(masks, z0, method, tolerance, max_iters, omega).volume(u10, dir10)


def _bilinear(field2d: np.ndarray, grid: Grid2D, x, y):
    h = grid.cell_size
    fx = np.clip((x - grid.origin[0]) / h - 0.5, 0.0, grid.nx - 1)
    fy = np.clip((y - grid.origin[1]) / h - 0.5, 0.0, grid.ny - 1)
    i0 = np.minimum(np.floor(fx).astype(np.int64), max(grid.nx - 2, 0))
    j0 = np.minimum(np.floor(fy).astype(np.int64), max(grid.ny - 2, 0))
    i1 = np.minimum(i0 + 1, grid.nx - 1)
    j1 = np.minimum(j0 + 1, grid.ny - 1)
    tx, ty = fx - i0, fy - j0
    f = field2d
    return ((1 - tx) * (1 - ty) * f[j0, i0] + tx * (1 - ty) * f[j0, i1]
            + (1 - tx) * ty * f[j1, i0] + tx * ty * f[j1, i1])


def sample_wind_many(volume: WindVolume, points) -> np.ndarray:
    """Velocities (N, 3) at points (N, 3); w is always zero."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    grid = volume.grid
    x0, y0, x1, y1 = grid.extents
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    eps = 1e-9 * max(1.0, abs(x1), abs(y1))
    if np.any((x < x0 - eps) | (x > x1 + eps) | (y < y0 - eps) | (y > y1 + eps)):
        raise WindError("sample point outside the wind domain")
    if np.any(z < 0):
        raise WindError("sample point below ground")
    heights = volume.heights
    uv = np.stack([np.stack([_bilinear(s.u, grid, x, y), _bilinear(s.v, grid, x, y)], axis=-1)
                   for s in volume.slices])  # (S, N, 2)
    zc = np.clip(z, heights[0], heights[-1])
    k = np.clip(np.searchsorted(heights, zc, side="right") - 1, 0, len(heights) - 1)
    k1 = np.minimum(k + 1, len(heights) - 1)
    span = heights[k1] - heights[k]
    t = np.where(span > 0, (zc - heights[k]) / np.where(span > 0, span, 1.0), 0.0)
    n = np.arange(len(pts))
    out = (1 - t)[:, None] * uv[k, n] + t[:, None] * uv[k1, n]
    return np.column_stack([out, np.zeros(len(pts))])


def sample_wind(volume: WindVolume, point) -> np.ndarray:
    return sample_wind_many(volume, [point])[0]


# ---------------------------------------------------------------------------
# local air state


def saturation_vapour_pressure(t_c):
    """Magnus-Tetens saturation vapour pressure (hPa) over water."""
    t_c = np.asarray(t_c, dtype=float)
    return 6.1078 * np.exp(17.27 * t_c / (t_c + 237.3))


@dataclass(frozen=True)
class LocalAirState:
    t_adj: float | np.ndarray
    rh_adj: float | np.ndarray
    wind_speed_local: float | np.ndarray

    @property
    def vapour_pressure(self):
        return np.asarray(self.rh_adj) / 100.0 * saturation_vapour_pressure(self.t_adj)


def adjust_air_state(t2m, rh2m, wind_local, wind_ref, k_mix: float = 0.3, dt_max: float = 2.0) -> LocalAirState:
    """Surrogate local air temperature and humidity.

    ``dT = k_mix * (wind_ref - wind_local)`` clipped to +-dt_max: sheltered,
    slow air is warmer.  Humidity keeps the 2 m vapour pressure and is
    re-expressed relative to saturation at the adjusted temperature.
    """
    t2m = np.asarray(t2m, dtype=float)
    dt = np.clip(k_mix * (np.asarray(wind_ref, dtype=float) - np.asarray(wind_local, dtype=float)),
                 -dt_max, dt_max)
    t_adj = t2m + dt
    e = np.asarray(rh2m, dtype=float) / 100.0 * saturation_vapour_pressure(t2m)
    rh = np.asarray(rh2m, dtype=float)
    # unchanged temperature returns rh exactly rather than via a rounding round trip
    rh_adj = np.clip(np.where(dt == 0.0, rh, 100.0 * e / saturation_vapour_pressure(t_adj)), 0.0, 100.0)
    if t_adj.ndim == 0:
        return LocalAirState(float(t_adj), float(rh_adj), float(np.asarray(wind_local)))
    return LocalAirState(t_adj, rh_adj, np.asarray(wind_local, dtype=float))
