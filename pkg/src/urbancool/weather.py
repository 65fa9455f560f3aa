"""Hourly climate data: EPW parsing, solar geometry and irradiance decomposition.

Timestamps follow the EPW convention: ``hour`` runs 1..24 and labels the end
of the hour it summarises.  The interval covered by a record therefore starts
at ``hour - 1`` (exposed as :attr:`WeatherRecord.start_hour`, 0..23), and the
radiation model evaluates the sun at the interval midpoint.
"""
from __future__ import annotations

import csv
import io
import logging
import math
import os
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

SOLAR_CONSTANT = 1367.0
EPW_FIELD_COUNT = 35
HEADER_LINES = 8

# 0-based EPW column -> (record attribute, missing sentinel, valid range)
EPW_COLUMNS = {
    6: ("t_air_2m", 99.9, (-70.0, 70.0)),
    8: ("rh_2m", 999.0, (0.0, 100.0)),
    13: ("ghi", 9999.0, (0.0, 2000.0)),
    14: ("dni", 9999.0, (0.0, 2000.0)),
    15: ("dhi", 9999.0, (0.0, 2000.0)),
    20: ("wind_dir_10m", 999.0, (0.0, 360.0)),
    21: ("wind_speed_10m", 999.0, (0.0, 40.0)),
}

# default Erbs correlation: diffuse fraction as a piecewise polynomial in kt
ERBS_BREAKPOINTS = (0.22, 0.80)
ERBS_COEFFICIENTS = (
    (1.0, -0.09),
    (0.9511, -0.1604, 4.388, -16.638, 12.336),
    (0.165,),
)


class WeatherError(ValueError):
    pass


@dataclass(frozen=True)
class SiteLocation:
    latitude: float = 1.37
    longitude: float = 103.98
    altitude: float = 16.0
    utc_offset: float = 8.0
    name: str = "SINGAPORE-CHANGI"

    def __post_init__(self):
        if abs(self.latitude) > 90 or abs(self.longitude) > 180:
            raise WeatherError(f"invalid site coordinates ({self.latitude}, {self.longitude})")


CHANGI = SiteLocation()


@dataclass(frozen=True)
class WeatherRecord:
    year: int
    month: int
    day: int
    hour: int
    minute: int = 0
    t_air_2m: float | None = None
    rh_2m: float | None = None
    wind_speed_10m: float | None = None
    wind_dir_10m: float | None = None
    ghi: float | None = None
    dni: float | None = None
    dhi: float | None = None
    source: str = "climate"
    flags: tuple[str, ...] = ()

    @property
    def start_hour(self) -> int:
        return self.hour - 1

    @property
    def timestamp(self) -> datetime:
        """End-of-interval local civil time (hour 24 rolls into the next day)."""
        return datetime(2001, self.month, self.day) + timedelta(hours=self.hour, minutes=self.minute)

    def midpoint(self, year: int = 2001) -> datetime:
        return datetime(year, self.month, self.day) + timedelta(hours=self.hour - 0.5)

    def sources(self) -> dict[str, str]:
        return {name: self.source for name, *_ in EPW_COLUMNS.values() if getattr(self, name) is not None}


@dataclass(frozen=True)
class SolarPosition:
    azimuth: float
    elevation: float

    @property
    def zenith(self) -> float:
        return 90.0 - self.elevation

    def direction(self) -> np.ndarray:
        """Unit vector pointing from the ground towards the sun (x east, y north, z up)."""
        el, az = math.radians(self.elevation), math.radians(self.azimuth)
        return np.array([math.cos(el) * math.sin(az), math.cos(el) * math.cos(az), math.sin(el)])


# ---------------------------------------------------------------------------
# EPW


def parse_epw(path, strict: bool = True) -> tuple[SiteLocation, list[WeatherRecord]]:
    text = Path(path).read_text(encoding="latin-1")
    return parse_epw_text(text, strict=strict, name=str(path))


def parse_epw_text(text: str, strict: bool = True, name: str = "<epw>"):
    lines = text.splitlines()
    if len(lines) < HEADER_LINES or not lines[0].upper().startswith("LOCATION"):
        raise WeatherError(f"{name}: malformed header (first line must be LOCATION)")
    site = _parse_location(lines[0], name)
    records = []
    for lineno, row in enumerate(csv.reader(lines[HEADER_LINES:]), start=HEADER_LINES + 1):
        if not row:
            continue
        if len(row) != EPW_FIELD_COUNT:
            raise WeatherError(f"{name}: line {lineno}: expected {EPW_FIELD_COUNT} fields, got {len(row)}")
        records.append(_parse_row(row, lineno, name))
    if strict and len(records) not in (8760, 8784):
        raise WeatherError(f"{name}: expected 8760 or 8784 data rows, got {len(records)}")
    return site, records


def _parse_location(line: str, name: str) -> SiteLocation:
    parts = [p.strip() for p in line.split(",")]
    if len(parts) < 10:
        raise WeatherError(f"{name}: LOCATION line has {len(parts)} fields, expected 10")
    try:
        lat, lon, tz, alt = (float(parts[i]) for i in (6, 7, 8, 9))
    except ValueError as exc:
        raise WeatherError(f"{name}: malformed LOCATION values: {exc}") from exc
    return SiteLocation(lat, lon, alt, tz, parts[1])


def _parse_row(row: Sequence[str], lineno: int, name: str) -> WeatherRecord:
    try:
        year, month, day, hour, minute = (int(float(row[i])) for i in range(5))
    except ValueError as exc:
        raise WeatherError(f"{name}: line {lineno}: bad date field: {exc}") from exc
    if not (1 <= month <= 12 and 1 <= day <= 31 and 1 <= hour <= 24):
        raise WeatherError(f"{name}: line {lineno}: date/hour out of range")
    values, flags = {}, []
    for col, (attr, sentinel, (lo, hi)) in EPW_COLUMNS.items():
        try:
            x = float(row[col])
        except ValueError as exc:
            raise WeatherError(f"{name}: line {lineno}: column {col} not numeric: {row[col]!r}") from exc
        if x == sentinel or not math.isfinite(x) or not (lo <= x <= hi):
            values[attr] = None
            flags.append(attr)
            continue
        if attr == "wind_dir_10m":
            x = x % 360.0
        values[attr] = x
    return WeatherRecord(year, month, day, hour, minute if minute != 60 else 0,
                         flags=tuple(flags), **values)


def format_epw(site: SiteLocation, records: Iterable[WeatherRecord]) -> str:
    """Serialise to EPW text; unretained columns get EPW missing markers."""
    loc = (f"LOCATION,{site.name},-,SGP,synthetic,486980,{site.latitude!r},{site.longitude!r},"
           f"{site.utc_offset!r},{site.altitude!r}")
    header = [
        loc,
        "DESIGN CONDITIONS,0",
        "TYPICAL/EXTREME PERIODS,0",
        "GROUND TEMPERATURES,0",
        "HOLIDAYS/DAYLIGHT SAVINGS,No,0,0,0",
        "COMMENTS 1,written by urbancool",
        "COMMENTS 2,",
        "DATA PERIODS,1,1,Data,Sunday, 1/ 1,12/31",
    ]
    filler = ["?9?9?9?9E0?9?9?9?9?9?9?9?9?9?9?9?9?9?9?9?9*9*9?9?9?9", "99.9", "99.9", "999999",
              "9999", "9999", "9999", "9999", "9999", "9999", "9999", "999999", "999999", "999999",
              "9999"]
    buf = io.StringIO()
    buf.write("\n".join(header) + "\n")
    for r in records:
        row = ["99.9"] * EPW_FIELD_COUNT
        row[:5] = [str(r.year), str(r.month), str(r.day), str(r.hour), str(r.minute)]
        row[5] = filler[0]
        for col in range(9, 20):
            row[col] = "9999"
        row[7] = "99.9"
        row[9] = "999999"
        for col in range(22, EPW_FIELD_COUNT):
            row[col] = "0" if col in (27, 28, 29, 30, 31, 33) else "999"
        for col, (attr, sentinel, _) in EPW_COLUMNS.items():
            v = getattr(r, attr)
            row[col] = repr(float(v)) if v is not None else _sentinel_text(sentinel)
        buf.write(",".join(row) + "\n")
    return buf.getvalue()


def _sentinel_text(x: float) -> str:
    return f"{x:.1f}" if x != int(x) else str(int(x))


def write_epw(path, site: SiteLocation, records: Iterable[WeatherRecord]) -> Path:
    path = Path(path)
    path.write_text(format_epw(site, records))
    return path


def select_hour(records: Sequence[WeatherRecord], month, day: int | None = None,
                hour: int | None = None) -> WeatherRecord:
    """Record matching month/day/EPW-hour (1..24); the file's year is ignored.

    ``month`` may also be a ``datetime``, whose clock hour is read as the EPW
    end-of-interval label (00:00 selects hour 24 of the previous day).
    """
    if isinstance(month, datetime):
        ts = month
        if ts.hour == 0:
            ts -= timedelta(days=1)
            month, day, hour = ts.month, ts.day, 24
        else:
            month, day, hour = ts.month, ts.day, ts.hour
    for r in records:
        if r.month == month and r.day == day and r.hour == hour:
            return r
    raise WeatherError(f"no record for {month:02d}-{day:02d} hour {hour}")


def select_day(records: Sequence[WeatherRecord], month: int, day: int) -> list[WeatherRecord]:
    out = sorted((r for r in records if r.month == month and r.day == day), key=lambda r: r.hour)
    if not out:
        raise WeatherError(f"no records for {month:02d}-{day:02d}")
    return out


# ---------------------------------------------------------------------------
# solar geometry


def julian_day(ts: datetime, utc_offset: float) -> float:
    utc = ts - timedelta(hours=utc_offset)
    epoch = datetime(2000, 1, 1, 12)
    return 2451545.0 + (utc - epoch).total_seconds() / 86400.0


def declination_and_eot(jd: float) -> tuple[float, float]:
    """Apparent solar declination (rad) and equation of time (min) from low-precision Meeus series."""
    t = (jd - 2451545.0) / 36525.0
    l0 = math.radians((280.46646 + t * (36000.76983 + 0.0003032 * t)) % 360.0)
    m = math.radians(357.52911 + t * (35999.05029 - 0.0001537 * t))
    ecc = 0.016708634 - t * (0.000042037 + 0.0000001267 * t)
    c = math.radians(math.sin(m) * (1.914602 - t * (0.004817 + 0.000014 * t))
                     + math.sin(2 * m) * (0.019993 - 0.000101 * t) + math.sin(3 * m) * 0.000289)
    omega = math.radians(125.04 - 1934.136 * t)
    lam = l0 + c - math.radians(0.00569 + 0.00478 * math.sin(omega))
    eps0 = 23.0 + (26.0 + (21.448 - t * (46.815 + t * (0.00059 - t * 0.001813))) / 60.0) / 60.0
    eps = math.radians(eps0 + 0.00256 * math.cos(omega))
    decl = math.asin(math.sin(eps) * math.sin(lam))
    y = math.tan(eps / 2) ** 2
    eot = 4.0 * math.degrees(y * math.sin(2 * l0) - 2 * ecc * math.sin(m)
                             + 4 * ecc * y * math.sin(m) * math.cos(2 * l0)
                             - 0.5 * y * y * math.sin(4 * l0) - 1.25 * ecc * ecc * math.sin(2 * m))
    return decl, eot


def solar_position(site: SiteLocation, ts: datetime) -> SolarPosition:
    """Sun azimuth (from north, clockwise) and elevation for local civil time ``ts``.

    Geometric elevation, no refraction correction.
    """
    decl, eot = declination_and_eot(julian_day(ts, site.utc_offset))
    utc = ts - timedelta(hours=site.utc_offset)
    utc_min = utc.hour * 60.0 + utc.minute + utc.second / 60.0
    true_solar_min = (utc_min + eot + 4.0 * site.longitude) % 1440.0
    hour_angle = math.radians(true_solar_min / 4.0 - 180.0)
    lat = math.radians(site.latitude)
    cos_zen = math.sin(lat) * math.sin(decl) + math.cos(lat) * math.cos(decl) * math.cos(hour_angle)
    zen = math.acos(min(1.0, max(-1.0, cos_zen)))
    # azimuth from the (east, north) components of the sun vector
    east = -math.cos(decl) * math.sin(hour_angle)
    north = math.cos(lat) * math.sin(decl) - math.sin(lat) * math.cos(decl) * math.cos(hour_angle)
    az = math.degrees(math.atan2(east, north)) % 360.0
    return SolarPosition(azimuth=az, elevation=90.0 - math.degrees(zen))


def extraterrestrial_irradiance(day_of_year: int, solar_constant: float = SOLAR_CONSTANT) -> float:
    g = 2.0 * math.pi * (day_of_year - 1) / 365.0
    return solar_constant * (1.00011 + 0.034221 * math.cos(g) + 0.00128 * math.sin(g)
                             + 0.000719 * math.cos(2 * g) + 0.000077 * math.sin(2 * g))


def erbs_diffuse_fraction(kt: float, breakpoints=ERBS_BREAKPOINTS, coefficients=ERBS_COEFFICIENTS) -> float:
    seg = sum(kt > b for b in breakpoints)
    return sum(c * kt ** i for i, c in enumerate(coefficients[seg]))


def decompose_ghi(ghi: float, zenith: float, extraterrestrial: float = SOLAR_CONSTANT,
                  breakpoints=ERBS_BREAKPOINTS, coefficients=ERBS_COEFFICIENTS) -> tuple[float, float]:
    """Split global horizontal irradiance into (DNI, DHI) with the Erbs correlation."""
    ghi = max(0.0, float(ghi))
    if ghi == 0.0:
        return 0.0, 0.0
    if zenith >= 90.0:
        return 0.0, ghi
    cz = math.cos(math.radians(zenith))
    kt = min(1.0, ghi / (extraterrestrial * cz))
    kd = min(1.0, max(0.0, erbs_diffuse_fraction(kt, breakpoints, coefficients)))
    dhi = kd * ghi
    dni = min((ghi - dhi) / cz, extraterrestrial)
    return max(0.0, dni), dhi


def complete_irradiance(site: SiteLocation, record: WeatherRecord, year: int = 2001,
                        breakpoints=ERBS_BREAKPOINTS, coefficients=ERBS_COEFFICIENTS,
                        solar_constant: float = SOLAR_CONSTANT) -> tuple[float, float, float, bool]:
    """(ghi, dni, dhi, derived) for a record, decomposing GHI when DNI/DHI are missing."""
    ghi = record.ghi or 0.0
    if record.dni is not None and record.dhi is not None:
        return ghi, record.dni, record.dhi, False
    ts = record.midpoint(year)
    sun = solar_position(site, ts)
    e0 = extraterrestrial_irradiance(ts.timetuple().tm_yday, solar_constant)
    dni, dhi = decompose_ghi(ghi, sun.zenith, e0, breakpoints, coefficients)
    return ghi, dni, dhi, True


# ---------------------------------------------------------------------------
# real-time service


DEFAULT_FIELD_MAP = {
    "air_temperature": "weather.t_air_c",
    "relative_humidity": "weather.rh_pct",
    "wind_speed": "weather.wind_speed_ms",
    "wind_direction": "weather.wind_dir_deg",
}

_RANGES = {
    "weather.t_air_c": (-70.0, 70.0),
    "weather.rh_pct": (0.0, 100.0),
    "weather.wind_speed_ms": (0.0, 60.0),
    "weather.wind_dir_deg": (0.0, 360.0),
    "weather.ghi_wm2": (0.0, 2000.0),
}


@dataclass
class RealtimeClient:
    """Generic JSON-over-HTTP weather client.

    The service is expected to return a flat JSON object; ``field_map`` maps
    the provider's keys onto parameter paths.  Environment variables
    ``URBANCOOL_WEATHER_URL`` and ``URBANCOOL_WEATHER_TIMEOUT`` override the
    endpoint and timeout.
    """

    endpoint: str = ""
    field_map: dict = field(default_factory=lambda: dict(DEFAULT_FIELD_MAP))
    timeout: float = 5.0
    session: object = None

    @classmethod
    def from_env(cls, **kw) -> "RealtimeClient":
        kw.setdefault("endpoint", os.environ.get("URBANCOOL_WEATHER_URL", ""))
        if "URBANCOOL_WEATHER_TIMEOUT" in os.environ:
            kw.setdefault("timeout", float(os.environ["URBANCOOL_WEATHER_TIMEOUT"]))
        return cls(**kw)


def fetch_realtime(client: RealtimeClient | None, site: SiteLocation) -> dict[str, float]:
    """Partial parameter mapping from the live service; ``{}`` on any failure."""
    if client is None or not client.endpoint:
        return {}
    import requests

    session = client.session or requests
    try:
        resp = session.get(client.endpoint, params={"lat": site.latitude, "lon": site.longitude},
                           timeout=client.timeout)
        resp.raise_for_status()
        payload = resp.json()
        if not isinstance(payload, dict):
            raise WeatherError("response is not a JSON object")
    except Exception as exc:  # soft failure by contract
        logger.warning("real-time weather fetch failed (%s); continuing without it", exc)
        return {}
    out = {}
    for key, path in client.field_map.items():
        if key not in payload:
            continue
        try:
            x = float(payload[key])
        except (TypeError, ValueError):
            logger.warning("real-time field %s=%r is not numeric; dropped", key, payload[key])
            continue
        lo, hi = _RANGES.get(path, (-math.inf, math.inf))
        if not (math.isfinite(x) and lo <= x <= hi):
            logger.warning("real-time field %s=%r outside [%g, %g]; dropped", key, x, lo, hi)
            continue
        out[path] = x
    return out
