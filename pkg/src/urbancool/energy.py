"""Envelope conduction cooling-load proxy and EUI ranking."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class EnergyError(ValueError):
    pass


@dataclass(frozen=True)
class WallProps:
    u_value: float
    setpoint: float = 25.0
    weights: tuple[float, ...] = (1.0,)

    def __post_init__(self):
        if not self.u_value > 0:
            raise EnergyError("U-value must be positive")
        if not self.weights or abs(sum(self.weights) - 1.0) > 1e-9:
            raise EnergyError("response weights must sum to 1")


def face_cooling_flux(t_surf_history, props: WallProps, hour: int | None = None):
    """Conductive heat gain q = U * sum_k w_k (T(h-k) - setpoint), floored at 0.

    ``t_surf_history`` is (n_hours, ...) in deg C.  With ``hour`` given the
    value for that row is returned, otherwise the whole series; rows before
    the start reuse the first row (periodic spin-up is the caller's job).
    """
    t = np.asarray(t_surf_history, dtype=float)
    w = np.asarray(props.weights)
    if t.ndim == 0:
        t = t[None]
    n = t.shape[0]
    idx = np.arange(n)
    acc = np.zeros_like(t)
    for k, wk in enumerate(w):
        acc += wk * (t[np.maximum(idx - k, 0)] - props.setpoint)
    q = np.maximum(props.u_value * acc, 0.0)
    return q if hour is None else q[hour]


@dataclass(frozen=True)
class BuildingEnergy:
    building_id: str
    hourly_power_w: tuple[float, ...]
    energy_kwh: float
    envelope_area_m2: float
    floor_area_m2: float = float("nan")

    @property
    def eui(self) -> float:
        return self.energy_kwh / self.envelope_area_m2

    @property
    def eui_floor(self) -> float:
        return self.energy_kwh / self.floor_area_m2 if self.floor_area_m2 > 0 else float("nan")

    @property
    def peak_power_w(self) -> float:
        return max(self.hourly_power_w) if self.hourly_power_w else 0.0

    def to_json(self) -> dict:
        return {"building_id": self.building_id,
                "cooling_energy_kwh": round(self.energy_kwh, 6),
                "envelope_area_m2": round(self.envelope_area_m2, 6),
                "eui_envelope_kwh_m2": round(self.eui, 6),
                "floor_area_m2": round(self.floor_area_m2, 6),
                "eui_floor_kwh_m2": round(self.eui_floor, 6),
                "peak_power_w": round(self.peak_power_w, 3),
                "hourly_power_w": [round(p, 3) for p in self.hourly_power_w]}


def building_cooling_load(building_id: str, areas, flux_series, dt_s: float = 3600.0,
                          floor_area: float = float("nan")) -> BuildingEnergy:
    """Aggregate per-face fluxes (n_hours, n_faces) W/m2 over face areas."""
    areas = np.asarray(areas, dtype=float)
    total = float(areas.sum())
    if total <= 0:
        raise EnergyError(f"{building_id}: zero envelope area")
    q = np.asarray(flux_series, dtype=float).reshape(-1, len(areas))
    power = q @ areas
    energy = float(power.sum() * dt_s / 3.6e6)
    return BuildingEnergy(building_id, tuple(float(p) for p in power), energy, total, floor_area)


def energy_outliers(energies, k: float = 1.5) -> list[tuple[BuildingEnergy, bool]]:
    """Buildings by EUI descending (ties by id) with an outlier flag (EUI > mean + k std)."""
    energies = list(energies)
    if len(energies) < 2:
        raise EnergyError("need at least two buildings")
    eui = np.array([e.eui for e in energies])
    threshold = eui.mean() + k * eui.std()
    ranked = sorted(energies, key=lambda e: (-e.eui, e.building_id))
    return [(e, bool(e.eui > threshold + 1e-12 * abs(threshold))) for e in ranked]
