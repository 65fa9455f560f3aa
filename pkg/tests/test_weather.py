import logging
import math
from datetime import datetime

import pytest
from hypothesis import given, settings, strategies as st

from urbancool.fixtures import synthetic_records
from urbancool.weather import (
    CHANGI, RealtimeClient, SiteLocation, WeatherError, WeatherRecord, decompose_ghi,
    erbs_diffuse_fraction, extraterrestrial_irradiance, fetch_realtime, format_epw, parse_epw,
    parse_epw_text, select_day, select_hour, solar_position, write_epw,
)

# Reference sun positions from the NREL SPA implementation in pvlib 0.15.2
# (spa_python, geometric elevation without refraction), evaluated once and frozen.
SPA_TABLE = [
    # lat, lon, utc offset, local time, elevation, azimuth
    (1.37, 103.98, 8, "2001-04-20 13:00", 79.808, 4.161),
    (1.37, 103.98, 8, "2001-04-15 09:30", 36.123, 78.938),
    (1.37, 103.98, 8, "2001-12-21 16:00", 40.172, 237.254),
    (40.0, -105.0, -7, "2001-06-21 12:00", 73.433, 178.531),
    (-33.9, 151.2, 10, "2001-07-01 10:00", 26.348, 30.605),
]


@pytest.fixture(scope="module")
def year():
    return synthetic_records()


@pytest.fixture(scope="module")
def epw_file(tmp_path_factory, year):
    p = tmp_path_factory.mktemp("w") / "sg.epw"
    write_epw(p, CHANGI, year)
    return p


def test_location_header(epw_file):
    site, records = parse_epw(epw_file)
    assert (site.latitude, site.longitude, site.utc_offset, site.altitude) == (1.37, 103.98, 8.0, 16.0)
    assert len(records) == 8760
    assert sorted({r.hour for r in records}) == list(range(1, 25))


def test_location_header_literal():
    lines = ["LOCATION,SINGAPORE,-,SGP,IWEC,486980,1.37,103.98,8.0,16"] + ["X"] * 7
    site, recs = parse_epw_text("\n".join(lines) + "\n", strict=False)
    assert (site.latitude, site.longitude, site.utc_offset, site.altitude) == (1.37, 103.98, 8.0, 16.0)
    assert recs == []


def test_round_trip_bit_identical(epw_file, year):
    _, recs = parse_epw(epw_file)
    for a, b in zip(recs, year):
        for f in ("t_air_2m", "rh_2m", "wind_speed_10m", "wind_dir_10m", "ghi", "dni", "dhi"):
            assert getattr(a, f) == getattr(b, f)
    site, _ = parse_epw(epw_file)
    assert format_epw(site, recs) == epw_file.read_text()


def test_sentinel_flags_record(year):
    recs = [r if i != 5 else WeatherRecord(r.year, r.month, r.day, r.hour, 0, None, r.rh_2m,
                                           r.wind_speed_10m, r.wind_dir_10m, r.ghi, None, None)
            for i, r in enumerate(year[:48])]
    _, parsed = parse_epw_text(format_epw(CHANGI, recs), strict=False)
    assert parsed[5].t_air_2m is None
    assert "t_air_2m" in parsed[5].flags
    assert parsed[5].dni is None and parsed[5].dhi is None
    assert parsed[4].flags == ()


def test_row_field_count_error(year):
    text = format_epw(CHANGI, year[:24]).splitlines()
    text[10] = text[10] + ",1"
    with pytest.raises(WeatherError, match="line 11"):
        parse_epw_text("\n".join(text), strict=False)


def test_non_numeric_field(year):
    text = format_epw(CHANGI, year[:24]).splitlines()
    parts = text[9].split(",")
    parts[6] = "warm"
    text[9] = ",".join(parts)
    with pytest.raises(WeatherError, match="not numeric"):
        parse_epw_text("\n".join(text), strict=False)


def test_malformed_header():
    with pytest.raises(WeatherError, match="header"):
        parse_epw_text("hello\n", strict=False)


def test_row_count_strict(year):
    with pytest.raises(WeatherError, match="8760"):
        parse_epw_text(format_epw(CHANGI, year[:24]))


def test_select_hour(year):
    r = select_hour(year, 4, 20, 13)
    assert (r.month, r.day, r.hour) == (4, 20, 13)
    r2 = select_hour(year, datetime(2024, 4, 20, 13))
    assert r2 is r
    midnight = select_hour(year, datetime(2001, 4, 21, 0))
    assert (midnight.month, midnight.day, midnight.hour) == (4, 20, 24)
    with pytest.raises(WeatherError):
        select_hour(year, 2, 30, 12)
    assert len(select_day(year, 4, 15)) == 24


def test_hour_convention():
    r = WeatherRecord(2001, 4, 20, 13)
    assert r.start_hour == 12
    assert r.midpoint() == datetime(2001, 4, 20, 12, 30)


@pytest.mark.parametrize("lat,lon,tz,ts,elev,az", SPA_TABLE)
def test_solar_position_against_spa(lat, lon, tz, ts, elev, az):
    s = solar_position(SiteLocation(lat, lon, 0.0, tz), datetime.fromisoformat(ts))
    assert abs(s.elevation - elev) <= 0.5
    assert abs((s.azimuth - az + 180) % 360 - 180) <= 0.5
    assert s.zenith == pytest.approx(90 - s.elevation)


def test_equator_equinox_noon():
    site = SiteLocation(0.0, 0.0, 0.0, 0.0)
    best = max(solar_position(site, datetime(2001, 3, 20, 12, m)).elevation for m in range(0, 20))
    assert best == pytest.approx(90.0, abs=0.5)


def test_midnight_sun_down():
    for site in (CHANGI, SiteLocation(45.0, 7.0, 0, 1.0), SiteLocation(-30.0, -60.0, 0, -4.0)):
        assert solar_position(site, datetime(2001, 6, 1, 0, 30)).elevation < 0


def test_symmetry_about_noon():
    from datetime import timedelta
    start = datetime(2001, 4, 20, 11)
    minutes = max(range(180), key=lambda m: solar_position(CHANGI, start + timedelta(minutes=m)).elevation)
    noon = start + timedelta(minutes=minutes)
    a = solar_position(CHANGI, noon - timedelta(hours=3)).elevation
    b = solar_position(CHANGI, noon + timedelta(hours=3)).elevation
    assert abs(a - b) < 1.0


def test_decompose_trivial():
    assert decompose_ghi(0.0, 30.0) == (0.0, 0.0)
    assert decompose_ghi(50.0, 95.0) == (0.0, 50.0)


def test_decompose_hand_evaluated():
    # kt = 0.5 at zenith 30 deg with I0 = 1367
    z = 30.0
    cz = math.cos(math.radians(z))
    ghi = 0.5 * 1367.0 * cz
    kd = 0.9511 - 0.1604 * 0.5 + 4.388 * 0.25 - 16.638 * 0.125 + 12.336 * 0.0625
    dni, dhi = decompose_ghi(ghi, z, 1367.0)
    assert dhi == pytest.approx(kd * ghi, rel=1e-12)
    assert dni == pytest.approx((ghi - kd * ghi) / cz, rel=1e-12)


def test_erbs_branches():
    assert erbs_diffuse_fraction(0.1) == pytest.approx(1 - 0.009)
    assert erbs_diffuse_fraction(0.9) == 0.165


def test_extraterrestrial_bounds():
    vals = [extraterrestrial_irradiance(d) for d in range(1, 366)]
    assert max(vals) == pytest.approx(1367 * 1.0344, rel=2e-3)
    assert min(vals) == pytest.approx(1367 * 0.9666, rel=2e-3)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1400), st.floats(0, 89.9), st.floats(1300, 1420))
def test_decompose_nonnegative(ghi, z, e0):
    dni, dhi = decompose_ghi(ghi, z, e0)
    assert dni >= 0 and dhi >= 0
    assert dhi <= ghi + 1e-9
    assert dni <= e0 + 1e-9


def test_closure_on_parsed_records(year):
    from urbancool.weather import SolarPosition
    for r in year[24 * 100: 24 * 102]:
        sun = solar_position(CHANGI, r.midpoint())
        if sun.elevation <= 0 or not r.ghi:
            continue
        recon = r.dni * math.cos(math.radians(sun.zenith)) + r.dhi
        assert abs(recon - r.ghi) <= 0.05 * max(r.ghi, 50.0)
    assert SolarPosition(10.0, 30.0).zenith == 60.0


class _Resp:
    def __init__(self, payload, status=200):
        self.payload, self.status = payload, status

    def raise_for_status(self):
        if self.status >= 300:
            raise RuntimeError(f"HTTP {self.status}")

    def json(self):
        return self.payload


class _Session:
    def __init__(self, resp=None, exc=None):
        self.resp, self.exc, self.calls = resp, exc, []

    def get(self, url, params=None, timeout=None):
        self.calls.append((url, params, timeout))
        if self.exc:
            raise self.exc
        return self.resp


def test_realtime_pass_through():
    s = _Session(_Resp({"air_temperature": 31.2, "wind_speed": 3.4}))
    out = fetch_realtime(RealtimeClient("http://x", session=s, timeout=2.0), CHANGI)
    assert out == {"weather.t_air_c": 31.2, "weather.wind_speed_ms": 3.4}
    assert s.calls[0][2] == 2.0


def test_realtime_unreachable(caplog):
    s = _Session(exc=ConnectionError("down"))
    with caplog.at_level(logging.WARNING):
        assert fetch_realtime(RealtimeClient("http://x", session=s), CHANGI) == {}
    assert "failed" in caplog.text


def test_realtime_non_2xx_and_schema():
    assert fetch_realtime(RealtimeClient("http://x", session=_Session(_Resp({}, 503))), CHANGI) == {}
    assert fetch_realtime(RealtimeClient("http://x", session=_Session(_Resp([1, 2]))), CHANGI) == {}


def test_realtime_range_rejection(caplog):
    s = _Session(_Resp({"relative_humidity": 140, "air_temperature": 30.0}))
    with caplog.at_level(logging.WARNING):
        out = fetch_realtime(RealtimeClient("http://x", session=s), CHANGI)
    assert out == {"weather.t_air_c": 30.0}
    assert "outside" in caplog.text


def test_realtime_unconfigured_and_env(monkeypatch):
    assert fetch_realtime(None, CHANGI) == {}
    monkeypatch.setenv("URBANCOOL_WEATHER_URL", "http://svc")
    monkeypatch.setenv("URBANCOOL_WEATHER_TIMEOUT", "1.5")
    c = RealtimeClient.from_env()
    assert (c.endpoint, c.timeout) == ("http://svc", 1.5)


def test_site_validation():
    with pytest.raises(WeatherError):
        SiteLocation(95.0, 0.0)
