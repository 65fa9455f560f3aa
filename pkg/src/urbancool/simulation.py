"""Coupled diurnal run: wind, surface energy balance, pedestrian MRT/PET, envelope loads.

A :class:`SimulationContext` holds everything that depends only on geometry
and discretisation (wind unit solutions, surfaces, view matrices), so a
mitigation rerun that only touches materials reuses it.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta

import numpy as np

from . import comfort, energy, radiation as rad, windflow
from .geometry import BuildingSet, Grid2D, rasterize_footprints
from .params import HOURS, ResolvedParams
from .weather import SiteLocation, solar_position

logger = logging.getLogger(__name__)

CONTEXT_KEYS = (
    "grid.cell_size_m", "grid.face_size_m", "grid.pedestrian_height_m", "wind.z0_m", "wind.slice_heights_m",
    "wind.solver", "wind.tolerance", "wind.max_iters", "wind.sor_omega", "radiation.svf_samples",
    "radiation.seed",
)


def context_key(params: ResolvedParams) -> str:
    return repr(tuple((k, params[k]) for k in CONTEXT_KEYS))


@dataclass(eq=False)
class SimulationContext:
    bset: BuildingSet
    grid: Grid2D
    masks: dict
    wind: windflow.WindBasis
    scene: rad.RadiationScene
    face_probe: np.ndarray       # wind sample point per face
    key: str

    @classmethod
    def build(cls, bset: BuildingSet, params: ResolvedParams) -> "SimulationContext":
        cell = params["grid.cell_size_m"]
        grid = Grid2D.covering(bset.domain_bbox, cell)
        masks = {float(h): rasterize_footprints(bset, cell, float(h), extents=grid.extents)
                 for h in params["wind.slice_heights_m"]}
        basis = windflow.WindBasis.build(masks, params["wind.z0_m"], params["wind.solver"],
                                         params["wind.tolerance"], params["wind.max_iters"],
                                         params["wind.sor_omega"])
        surfaces = rad.build_surfaces(bset, grid, params["grid.face_size_m"])
        ground_mask = rasterize_footprints(bset, cell, 0.0, extents=grid.extents).cells
        scene = rad.RadiationScene.build(surfaces, params["radiation.svf_samples"], params["radiation.seed"],
                                         params["grid.pedestrian_height_m"], ground_mask)
        x0, y0, x1, y1 = grid.extents
        probe = surfaces.centroids + cell * surfaces.normals
        probe[:, 0] = np.clip(probe[:, 0], x0, x1)
        probe[:, 1] = np.clip(probe[:, 1], y0, y1)
        probe[:, 2] = np.maximum(probe[:, 2], 0.0)
        return cls(bset, grid, masks, basis, scene, probe, context_key(params))

    @property
    def surfaces(self) -> rad.SurfaceSet:
        return self.scene.surfaces

    @property
    def pedestrian(self) -> rad.PedestrianGrid:
        return self.scene.pedestrian


@dataclass(eq=False)
class RunResult:
    params: ResolvedParams
    context: SimulationContext
    hours: list[int]
    sun: list[tuple[float, float]]           # (azimuth, elevation) per hour
    t_surf: np.ndarray                        # (24, n_faces) K, hour means
    q_sw_in: np.ndarray
    q_sw_abs: np.ndarray
    q_lw_in: np.ndarray
    q_lw_out: np.ndarray
    q_conv: np.ndarray
    albedo: np.ndarray                        # per face
    mrt: np.ndarray                           # (24, ny, nx) deg C, NaN where invalid
    pet: np.ndarray
    t_air_local: np.ndarray
    rh_local: np.ndarray
    wind_local: np.ndarray
    reflected: np.ndarray
    lit: np.ndarray                           # (24, ny, nx) bool
    energies: list[energy.BuildingEnergy]
    face_cooling: np.ndarray                  # (24, n_faces) W/m2 (0 on ground)
    hotspots: list[comfort.Hotspot] = field(default_factory=list)
    outliers: list[tuple[energy.BuildingEnergy, bool]] = field(default_factory=list)

    @property
    def grid(self) -> Grid2D:
        return self.context.grid

    def hour_index(self, hour: int) -> int:
        return self.hours.index(hour)

    def total_cooling_kwh(self) -> float:
        return float(sum(e.energy_kwh for e in self.energies))

    def energy_by_id(self) -> dict[str, energy.BuildingEnergy]:
        return {e.building_id: e for e in self.energies}

    def point_value(self, name: str, hour: int, x: float, y: float) -> float:
        g = self.grid
        i = int(min(g.nx - 1, max(0, math.floor((x - g.origin[0]) / g.cell_size))))
        j = int(min(g.ny - 1, max(0, math.floor((y - g.origin[1]) / g.cell_size))))
        return float(getattr(self, name)[self.hour_index(hour), j, i])


def site_from(params: ResolvedParams) -> SiteLocation:
    return SiteLocation(params["site.latitude"], params["site.longitude"], params["site.altitude_m"],
                        params["site.utc_offset_h"])


def hour_midpoint(params: ResolvedParams, hour: int) -> datetime:
    """Local civil time at the middle of EPW hour ``hour`` (1..24) of the run day."""
    return datetime(params["run.year"], params["run.month"], params["run.day"]) + timedelta(hours=hour - 0.5)


@dataclass
class _Forcing:
    t_air_k: float
    sky_lw: float
    q_sw_in: np.ndarray
    q_sw_abs: np.ndarray
    h_conv: np.ndarray
    t_face_air: np.ndarray
    ped_lit: np.ndarray
    ped_air: windflow.LocalAirState
    dni: float
    dhi: float
    ghi: float


def _local_air(ctx, volume, pts, t2m, rh2m, u10, params):
    uv = windflow.sample_wind_many(volume, pts)
    speed = np.hypot(uv[:, 0], uv[:, 1])
    z = np.clip(pts[:, 2], ctx.wind.heights[0], ctx.wind.heights[-1])
    ref = windflow.log_profile(u10, z, params["wind.z0_m"])
    return windflow.adjust_air_state(t2m, rh2m, speed, ref, params["wind.k_mix"], params["wind.dt_max_k"])


def _forcing(ctx: SimulationContext, params: ResolvedParams, k: int, albedo: np.ndarray, sun) -> _Forcing:
    surfaces, scene = ctx.surfaces, ctx.scene
    t2m = params.hour("weather.t_air_c", k)
    rh2m = params.hour("weather.rh_pct", k)
    u10 = params.hour("weather.wind_speed_ms", k)
    d10 = params.hour("weather.wind_dir_deg", k)
    ghi, dni, dhi = (params.hour(p, k) for p in ("weather.ghi_wm2", "weather.dni_wm2", "weather.dhi_wm2"))
    t_air_k = t2m + 273.15

    if sun.elevation > 0:
        cosi, lit, ped_lit = scene.sun_exposure(sun.direction())
    else:
        cosi = np.zeros(len(surfaces))
        lit = np.zeros(len(surfaces), dtype=bool)
        ped_lit = np.zeros(len(scene.pedestrian.points), dtype=bool)
        dni = 0.0
        dhi = dhi if ghi > 0 else 0.0
    rho = np.zeros(len(surfaces))
    seen = 1.0 - scene.svf
    ok = seen > 1e-12
    rho[ok] = (scene.view @ albedo)[ok] / seen[ok]
    q_sw_in = rad.shortwave_in(lit, dni, dhi, cosi, scene.svf, rho, ghi)
    q_sw_in[surfaces.covered] = 0.0

    volume = ctx.wind.volume(u10, d10)
    face_air = _local_air(ctx, volume, ctx.face_probe, t2m, rh2m, u10, params)
    ped_air = _local_air(ctx, volume, scene.pedestrian.points, t2m, rh2m, u10, params)
    h = rad.convective_coefficient(face_air.wind_speed_local, params["radiation.h_conv_a"],
                                   params["radiation.h_conv_b"])
    sky = params["radiation.sky_emissivity"] * rad.SIGMA * t_air_k ** 4
    return _Forcing(t_air_k, sky, q_sw_in, (1.0 - albedo) * q_sw_in, h, face_air.t_adj + 273.15, ped_lit,
                    ped_air, dni, dhi, ghi)


def simulate(ctx: SimulationContext, params: ResolvedParams) -> RunResult:
    """Spin-up days plus the run day, hourly forcing, sub-hourly semi-implicit steps."""
    if context_key(params) != ctx.key:
        raise ValueError("parameters change the discretisation; rebuild the SimulationContext")
    surfaces, scene = ctx.surfaces, ctx.scene
    ped = scene.pedestrian
    site = site_from(params)
    albedo = surfaces.material(params, "albedo")
    eps = surfaces.material(params, "emissivity")
    c_areal = surfaces.material(params, "heat_capacity_j_m3k") * params["radiation.d_eff_m"]
    active = surfaces.active
    dt = float(params["time.dt_s"])
    n_sub = max(1, int(round(3600.0 / dt)))
    dt = 3600.0 / n_sub

    hours = list(range(1, HOURS + 1))
    suns = [solar_position(site, hour_midpoint(params, h)) for h in hours]
    forcing = [_forcing(ctx, params, k, albedo, suns[k]) for k in range(HOURS)]

    n = len(surfaces)
    t = np.full(n, forcing[0].t_air_k)
    shape = (HOURS, n)
    t_mean = np.zeros(shape)
    q_lw_in = np.zeros(shape)
    q_lw_out = np.zeros(shape)
    q_conv = np.zeros(shape)
    svf = scene.svf
    view = scene.view
    for day in range(int(params["time.spinup_days"]) + 1):
        last = day == int(params["time.spinup_days"])
        for k, f in enumerate(forcing):
            acc = np.zeros(n)
            for _ in range(n_sub):
                t[~active] = f.t_air_k
                surround = view @ (rad.SIGMA * t ** 4)
                lw_in = svf * f.sky_lw + surround
                t_new = rad.step_surface_temperature(t[active], f.q_sw_abs[active] + eps[active] * lw_in[active],
                                                     eps[active], f.h_conv[active], f.t_face_air[active],
                                                     c_areal[active], dt)
                t[active] = t_new
                t[~active] = f.t_air_k
                acc += t
            if last:
                t_mean[k] = acc / n_sub
                surround = view @ (rad.SIGMA * t_mean[k] ** 4)
                q_lw_in[k] = svf * f.sky_lw + surround
                q_lw_out[k] = eps * rad.SIGMA * t_mean[k] ** 4
                q_conv[k] = f.h_conv * (t_mean[k] - f.t_face_air)

    # pedestrian level
    person = comfort.PersonParams.from_params(params)
    grid_shape = (HOURS,) + ped.valid.shape
    mrt = np.full(grid_shape, np.nan)
    pet = np.full(grid_shape, np.nan)
    t_loc = np.full(grid_shape, np.nan)
    rh_loc = np.full(grid_shape, np.nan)
    w_loc = np.full(grid_shape, np.nan)
    refl = np.full(grid_shape, np.nan)
    lit = np.zeros(grid_shape, dtype=bool)
    ped_albedo = ped.view @ albedo
    sw_kw = dict(sky_emissivity=params["radiation.sky_emissivity"], alpha_sw=params["person.alpha_sw"],
                 alpha_lw=params["person.alpha_lw"], f_p=params["person.f_p"])
    pet_inputs = []
    for k, f in enumerate(forcing):
        surround = ped.view @ (rad.SIGMA * t_mean[k] ** 4)
        reflected = f.ghi * ped_albedo
        m = rad.mean_radiant_temperature(f.dni, f.dhi, f.ped_lit, ped.svf, reflected, f.t_air_k, surround, **sw_kw)
        mrt[k][ped.valid] = m
        refl[k][ped.valid] = reflected
        lit[k][ped.valid] = f.ped_lit
        t_loc[k][ped.valid] = f.ped_air.t_adj
        rh_loc[k][ped.valid] = f.ped_air.rh_adj
        w_loc[k][ped.valid] = f.ped_air.wind_speed_local
        pet_inputs.append((f.ped_air.t_adj, m, f.ped_air.wind_speed_local, f.ped_air.rh_adj))
    cat = [np.concatenate([p[i] for p in pet_inputs]) for i in range(4)]
    pet_all = comfort.pet(*cat, person=person).reshape(HOURS, -1)
    for k in range(HOURS):
        pet[k][ped.valid] = pet_all[k]

    # envelope cooling loads
    weights = tuple(params["energy.ctf_weights"])
    props = energy.WallProps(1.0, params["energy.setpoint_c"], weights)
    u_val = np.zeros(n)
    envelope = ~(surfaces.cls == rad.GROUND)
    for c, name in ((rad.ROOF, "roof"), (rad.WALL, "wall")):
        sel = surfaces.cls == c
        u_val[sel] = params[f"material.{name}.u_value_wm2k"]
    for bi, bid in enumerate(surfaces.building_ids):
        ov = params["material.building_overrides"].get(bid, {})
        for c, name in ((rad.ROOF, "roof"), (rad.WALL, "wall")):
            if f"{name}.u_value_wm2k" in ov:
                u_val[(surfaces.building == bi) & (surfaces.cls == c)] = ov[f"{name}.u_value_wm2k"]
    # periodic history: the run day is preceded by an identical day after spin-up
    lag = len(weights) - 1
    t_c = t_mean - 273.15
    hist = np.concatenate([t_c[HOURS - lag:], t_c]) if lag else t_c
    face_q = energy.face_cooling_flux(hist, props)[lag:] * u_val
    face_q[:, ~envelope] = 0.0
    storey = params["energy.storey_height_m"]
    energies = []
    for bi, b in enumerate(ctx.bset.buildings):
        sel = surfaces.building == bi
        floors = max(1, int(b.height // storey))
        energies.append(energy.building_cooling_load(b.id, surfaces.areas[sel], face_q[:, sel], 3600.0,
                                                     b.footprint_area * floors))

    result = RunResult(params, ctx, hours, [(s.azimuth, s.elevation) for s in suns], t_mean,
                       np.array([f.q_sw_in for f in forcing]), np.array([f.q_sw_abs for f in forcing]),
                       q_lw_in, q_lw_out, q_conv, albedo, mrt, pet, t_loc, rh_loc, w_loc, refl, lit,
                       energies, face_q)
    data = comfort.HotspotInputs(ctx.grid, hours, pet, mrt, w_loc, ped.to_grid(ped.svf_upper), refl)
    result.hotspots = comfort.hotspot_scan(data, ctx.bset, params["hotspot.low_wind_ms"], params["hotspot.high_svf"],
                                           params["hotspot.reflected_wm2"], params["hotspot.count"])
    if len(energies) >= 2:
        result.outliers = energy.energy_outliers(energies, params["energy.outlier_k"])
    else:
        result.outliers = [(e, False) for e in energies]
    return result


def run(bset: BuildingSet, params: ResolvedParams, context: SimulationContext | None = None) -> RunResult:
    if context is None or context.key != context_key(params):
        context = SimulationContext.build(bset, params)
    return simulate(context, params)
