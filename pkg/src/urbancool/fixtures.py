"""Synthetic inputs: a tropical climate year, a street canyon and a small district."""
from __future__ import annotations

import math
from datetime import datetime, timedelta
from pathlib import Path

from .geometry import box_mesh, write_stl_binary
from .weather import (CHANGI, SiteLocation, WeatherRecord, decompose_ghi, extraterrestrial_irradiance,
                      solar_position, write_epw)

CANYON_DOMAIN = (0.0, 0.0, 200.0, 200.0)
CANYON_SLABS = {
    "south": (20.0, 70.0, 0.0, 180.0, 90.0, 30.0),
    "north": (20.0, 110.0, 0.0, 180.0, 130.0, 30.0),
}


def synthetic_records(site: SiteLocation = CHANGI, year: int = 2001, kt: float = 0.55,
                      t_min: float = 26.0, t_max: float = 32.0, wind: float = 2.5,
                      wind_dir: float = 160.0) -> list[WeatherRecord]:
    """Smooth, cloud-free-ish tropical year: identical diurnal cycle every day.

    Air temperature follows a cosine peaking at 14:00; RH moves opposite to it
    at constant vapour pressure headroom; GHI is ``kt`` times the horizontal
    extraterrestrial irradiance at the interval midpoint and is split with the
    Erbs correlation.
    """
    out = []
    start = datetime(year, 1, 1)
    n_days = 366 if (year % 4 == 0 and (year % 100 != 0 or year % 400 == 0)) else 365
    for d in range(n_days):
        day = start + timedelta(days=d)
        for hour in range(1, 25):
            mid = day + timedelta(hours=hour - 0.5)
            phase = math.cos(2 * math.pi * (hour - 0.5 - 14.0) / 24.0)
            t = 0.5 * (t_min + t_max) + 0.5 * (t_max - t_min) * phase
            rh = 75.0 - 15.0 * phase
            sun = solar_position(site, mid)
            e0 = extraterrestrial_irradiance(mid.timetuple().tm_yday)
            ghi = max(0.0, kt * e0 * math.cos(math.radians(sun.zenith))) if sun.elevation > 0 else 0.0
            dni, dhi = decompose_ghi(ghi, sun.zenith, e0)
            out.append(WeatherRecord(
                year, day.month, day.day, hour, 0,
                t_air_2m=round(t, 2), rh_2m=round(rh, 1), wind_speed_10m=wind, wind_dir_10m=wind_dir,
                ghi=round(ghi, 1), dni=round(dni, 1), dhi=round(dhi, 1),
            ))
    return out


def write_synthetic_epw(path, site: SiteLocation = CHANGI, **kw) -> Path:
    return write_epw(path, site, synthetic_records(site, **kw))


def write_canyon(directory) -> Path:
    """Two 160 m x 20 m x 30 m slabs flanking a 20 m wide east-west street."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, (x0, y0, z0, x1, y1, z1) in CANYON_SLABS.items():
        write_stl_binary(box_mesh(x0, y0, z0, x1, y1, z1), directory / f"canyon_{name}.stl")
    return directory


def write_district(directory, n_x: int = 2, n_y: int = 2, pitch: float = 60.0, size: float = 30.0) -> Path:
    """Regular grid of blocks with heights cycling through 15..45 m."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    heights = [24.0, 45.0, 15.0, 33.0]
    k = 0
    for i in range(n_x):
        for j in range(n_y):
            x0, y0 = i * pitch, j * pitch
            write_stl_binary(box_mesh(x0, y0, 0.0, x0 + size, y0 + size, heights[k % len(heights)]),
                             directory / f"b{k + 1:03d}.stl")
            k += 1
    return directory
