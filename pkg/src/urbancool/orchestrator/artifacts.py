"""Field files, figures and the metrics document for one simulated run."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .. import outputs
from ..params import FIELDS
from ..simulation import RunResult


def _peak_hour(result: RunResult) -> int:
    return result.hotspots[0].hour if result.hotspots else 13


def write_fields(result: RunResult, directory) -> list[Path]:
    """VTK wind slices (peak hour), hourly surfaces, hourly MRT/PET grids, SVF and figures."""
    d = Path(directory)
    ctx = result.context
    grid = ctx.grid
    ped = ctx.pedestrian
    files = []
    hour = _peak_hour(result)
    k = result.hour_index(hour)
    params = result.params
    volume = ctx.wind.volume(params.hour("weather.wind_speed_ms", k), params.hour("weather.wind_dir_deg", k))
    for s in volume.slices:
        fg = outputs.FieldGrid.from_grid(grid, s.height, speed=s.speed, obstacle=s.mask.cells.astype(float))
        fg.vectors["velocity"] = (s.u, s.v)
        files.append(outputs.write_vtk_structured(fg, d / "fields" / f"wind_z{s.height:g}m.vtk",
                                                  f"wind slice z={s.height:g} m hour {hour}"))
    surf = ctx.surfaces
    ints = {"building_id": surf.building, "material_class": surf.cls, "inactive": surf.covered.astype(int)}
    for i, h in enumerate(result.hours):
        arrays = {"T_surf_K": result.t_surf[i], "q_sw_in": result.q_sw_in[i], "q_lw_in": result.q_lw_in[i],
                  "q_lw_out": result.q_lw_out[i], "q_conv": result.q_conv[i], "q_cooling": result.face_cooling[i],
                  "albedo": result.albedo, "svf": ctx.scene.svf}
        files.append(outputs.write_vtk_polydata(surf.corners, arrays, d / "fields" / f"surface_T_{h:02d}.vtk",
                                                f"surfaces hour {h}", ints))
        z = params["grid.pedestrian_height_m"]
        files.append(outputs.write_vtk_structured(
            outputs.FieldGrid.from_grid(grid, z, mrt_c=result.mrt[i]), d / "fields" / f"mrt_{h:02d}.vtk",
            f"mean radiant temperature hour {h}"))
        files.append(outputs.write_vtk_structured(
            outputs.FieldGrid.from_grid(grid, z, pet_c=result.pet[i], t_air_c=result.t_air_local[i],
                                        wind_ms=result.wind_local[i], lit=result.lit[i].astype(float)),
            d / "fields" / f"pet_{h:02d}.vtk", f"PET hour {h}"))
    files.append(outputs.write_vtk_structured(
        outputs.FieldGrid.from_grid(grid, params["grid.pedestrian_height_m"], svf=ped.to_grid(ped.svf_upper),
                                    valid=ped.valid.astype(float)), d / "fields" / "svf.vtk", "sky view factor"))
    files.append(outputs.plot_pet_map(grid, result.pet[k], hour, result.hotspots, d / "figures" / "pet_peak.png"))
    ranked = sorted(result.energies, key=lambda e: (-e.eui, e.building_id))
    if ranked:
        files.append(outputs.plot_eui([e.building_id for e in ranked], [e.eui for e in ranked],
                                      d / "figures" / "eui.png"))
    return files


def parameter_summary(params) -> dict:
    out = {}
    for path in FIELDS:
        p = params.entry(path)
        v = p.value
        if FIELDS[path].kind == "series":
            vals = [x for x in v if x is not None]
            v = {"min": min(vals), "max": max(vals)}
        elif path == "material.building_overrides":
            v = {"buildings": len(v)}
        out[path] = {"value": v, "level": p.level.label, "source": p.source}
    return out


def build_metrics(result: RunResult, files=(), mitigation: dict | None = None) -> dict:
    params = result.params
    ped_valid = result.context.pedestrian.valid
    hourly = []
    for i, h in enumerate(result.hours):
        pet, mrt = result.pet[i][ped_valid], result.mrt[i][ped_valid]
        t_env = result.t_surf[i][~result.context.surfaces.covered] - 273.15
        hourly.append({"hour": h, "max_pet_c": float(pet.max()), "mean_pet_c": float(pet.mean()),
                       "max_mrt_c": float(mrt.max()), "mean_mrt_c": float(mrt.mean()),
                       "mean_t_surf_c": float(t_env.mean()),
                       "cooling_power_w": float(sum(e.hourly_power_w[i] for e in result.energies)),
                       "sun_elevation_deg": result.sun[i][1]})
    outlier = {e.building_id: flag for e, flag in result.outliers}
    ranked = sorted(result.energies, key=lambda e: (-e.eui, e.building_id))
    buildings = []
    for rank, e in enumerate(ranked, start=1):
        rec = e.to_json()
        rec.update({"eui_rank": rank, "outlier": bool(outlier.get(e.building_id, False))})
        buildings.append(rec)
    eui = np.array([e.eui for e in result.energies]) if result.energies else np.zeros(0)
    k = params["energy.outlier_k"]
    hotspots = []
    for rank, h in enumerate(result.hotspots, start=1):
        rec = h.to_json()
        rec["rank"] = rank
        hotspots.append(rec)
    top = result.hotspots[0] if result.hotspots else None
    surfaces = result.context.surfaces
    metrics = {
        "schema_version": outputs.SCHEMA_VERSION,
        "run": {"year": params["run.year"], "month": params["run.month"], "day": params["run.day"],
                "hours": len(result.hours), "n_buildings": len(result.energies),
                "cell_size_m": params["grid.cell_size_m"], "svf_samples": params["radiation.svf_samples"],
                "seed": params["radiation.seed"], "n_surface_faces": int((~surfaces.covered).sum()),
                "n_pedestrian_points": int(ped_valid.sum())},
        "peak": None if top is None else {"pet_c": round(top.pet, 2), "mrt_c": round(top.mrt, 2), "hour": top.hour,
                                          "x_m": top.x, "y_m": top.y},
        "hourly": hourly,
        "hotspots": hotspots,
        "buildings": buildings,
        "totals": {"cooling_energy_kwh": result.total_cooling_kwh(),
                   "envelope_area_m2": float(sum(e.envelope_area_m2 for e in result.energies)),
                   "peak_power_w": float(max((h["cooling_power_w"] for h in hourly), default=0.0)),
                   "mean_eui_kwh_m2": float(eui.mean()) if eui.size else None,
                   "outlier_threshold_kwh_m2": float(eui.mean() + k * eui.std()) if eui.size else None},
        "parameters": parameter_summary(params),
        "files": sorted(str(f) for f in files),
    }
    if mitigation is not None:
        metrics["mitigation"] = mitigation
    return metrics

