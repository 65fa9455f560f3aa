"""Parameter governance: five prioritised sources merged into one provenance-tagged set.

Every solver parameter is addressed by a dotted path (``material.roof.albedo``).
Sources are plain ``{path: value}`` mappings.  Precedence is

    user  >  climate  >  realtime  >  advisor  >  default

where the real-time service only fills what the climate file left unset and
the advisor only fills what both left unset.  ``ProvenanceLevel`` numbers the
sources; the number is a label for reports, not the precedence rule.
"""
from __future__ import annotations

import copy
import enum
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Mapping

HOURS = 24


class ParamError(ValueError):
    pass


class ProvenanceLevel(enum.IntEnum):
    DEFAULT = 1
    CLIMATE = 2
    REALTIME = 3
    ADVISOR = 4
    USER = 5

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, text: str) -> "ProvenanceLevel":
        try:
            return cls[text.upper()]
        except KeyError:
            raise ParamError(f"unknown provenance level {text!r}") from None


# Order in which sources are consulted; the first one that sets a field wins.
RESOLUTION_ORDER = (
    ProvenanceLevel.USER,
    ProvenanceLevel.CLIMATE,
    ProvenanceLevel.REALTIME,
    ProvenanceLevel.ADVISOR,
    ProvenanceLevel.DEFAULT,
)


@dataclass(frozen=True)
class FieldSpec:
    kind: str  # float | int | str | series | floats | weights | bbox | json | choice
    lo: float = -math.inf
    hi: float = math.inf
    lo_open: bool = False
    choices: tuple = ()
    increasing: bool = False
    optional: bool = False


def _f(lo=-math.inf, hi=math.inf, lo_open=False):
    return FieldSpec("float", lo, hi, lo_open)


_MATERIAL = {
    "albedo": _f(0.0, 1.0),
    "emissivity": _f(0.0, 1.0, lo_open=True),
    "heat_capacity_j_m3k": _f(0.0, lo_open=True),
}

FIELDS: dict[str, FieldSpec] = {
    "run.month": FieldSpec("int", 1, 12),
    "run.day": FieldSpec("int", 1, 31),
    "run.year": FieldSpec("int", 1900, 2200),
    "site.latitude": _f(-90, 90),
    "site.longitude": _f(-180, 180),
    "site.altitude_m": _f(-500, 9000),
    "site.utc_offset_h": _f(-14, 14),
    "weather.t_air_c": FieldSpec("series", -60, 60),
    "weather.rh_pct": FieldSpec("series", 0, 100),
    "weather.wind_speed_ms": FieldSpec("series", 0, 60),
    "weather.wind_dir_deg": FieldSpec("series", 0, 360),
    "weather.ghi_wm2": FieldSpec("series", 0, 2000),
    "weather.dni_wm2": FieldSpec("series", 0, 2000),
    "weather.dhi_wm2": FieldSpec("series", 0, 2000),
    "grid.cell_size_m": _f(0.0, 50.0, lo_open=True),
    "grid.buffer_factor": _f(1.0, 5.0),
    "grid.face_size_m": _f(0.0, 100.0, lo_open=True),
    "grid.domain_bbox_m": FieldSpec("bbox", optional=True),
    "grid.pedestrian_height_m": _f(0.0, 10.0, lo_open=True),
    "time.dt_s": _f(0.0, 3600.0, lo_open=True),
    "time.spinup_days": FieldSpec("int", 0, 10),
    "wind.z0_m": _f(0.0, 10.0, lo_open=True),
    "wind.slice_heights_m": FieldSpec("floats", 0.0, 1000.0, lo_open=True, increasing=True),
    "wind.solver": FieldSpec("choice", choices=("direct", "sor")),
    "wind.tolerance": _f(0.0, 1.0, lo_open=True),
    "wind.max_iters": FieldSpec("int", 1, 10**7),
    "wind.sor_omega": _f(1.0, 2.0),
    "wind.k_mix": _f(0.0, 5.0),
    "wind.dt_max_k": _f(0.0, 10.0),
    "radiation.sky_emissivity": _f(0.0, 1.0, lo_open=True),
    "radiation.svf_samples": FieldSpec("int", 16, 100000),
    "radiation.seed": FieldSpec("int", 0, 2**31 - 1),
    "radiation.h_conv_a": _f(0.0, 100.0),
    "radiation.h_conv_b": _f(0.0, 100.0),
    "radiation.d_eff_m": _f(0.0, 5.0, lo_open=True),
    "radiation.solar_constant_wm2": _f(1000.0, 1500.0),
    "radiation.erbs_breakpoints": FieldSpec("floats", 0.0, 1.0, increasing=True),
    "radiation.erbs_coefficients": FieldSpec("json"),
    "material.building_overrides": FieldSpec("json"),
    "person.age_yr": _f(0.0, 120.0, lo_open=True),
    "person.height_m": _f(0.0, 2.5, lo_open=True),
    "person.weight_kg": _f(0.0, 300.0, lo_open=True),
    "person.sex": FieldSpec("choice", choices=("male", "female")),
    "person.work_w": _f(0.0, 1000.0, lo_open=True),
    "person.clo": _f(0.0, 5.0, lo_open=True),
    "person.alpha_sw": _f(0.0, 1.0, lo_open=True),
    "person.alpha_lw": _f(0.0, 1.0, lo_open=True),
    "person.f_p": _f(0.0, 1.0),
    "energy.setpoint_c": _f(10.0, 35.0),
    "energy.ctf_weights": FieldSpec("weights", 0.0, 1.0),
    "energy.storey_height_m": _f(0.0, 10.0, lo_open=True),
    "energy.outlier_k": _f(0.0, 10.0),
    "hotspot.low_wind_ms": _f(0.0, 10.0),
    "hotspot.high_svf": _f(0.0, 1.0),
    "hotspot.reflected_wm2": _f(0.0, 2000.0),
    "hotspot.count": FieldSpec("int", 1, 1000),
    "mitigation.top_n": FieldSpec("int", 0, 1000),
    "mitigation.radius_m": _f(0.0, 10000.0),
    "mitigation.roof_albedo": _f(0.0, 1.0),
    "mitigation.wall_albedo": _f(0.0, 1.0),
    "mitigation.ground_albedo": _f(0.0, 1.0),
}
for _cls in ("roof", "wall", "ground"):
    for _k, _spec in _MATERIAL.items():
        FIELDS[f"material.{_cls}.{_k}"] = _spec
for _cls in ("roof", "wall"):
    FIELDS[f"material.{_cls}.u_value_wm2k"] = _f(0.0, 20.0, lo_open=True)

MATERIAL_CLASSES = ("roof", "wall", "ground")
WEATHER_FIELDS = tuple(k for k, s in FIELDS.items() if s.kind == "series")
OVERRIDABLE_MATERIAL_KEYS = ("albedo", "emissivity", "heat_capacity_j_m3k", "u_value_wm2k")


# ---------------------------------------------------------------------------
# values


def _reject_duplicates(pairs):
    out = {}
    for k, v in pairs:
        if k in out:
            raise ParamError(f"duplicate key {k!r} within one source")
        out[k] = v
    return out


def loads_source(text: str, name: str = "<source>") -> dict:
    """Parse a JSON source, treating duplicate keys as an error."""
    try:
        data = json.loads(text, object_pairs_hook=_reject_duplicates)
    except json.JSONDecodeError as exc:
        raise ParamError(f"{name}: invalid JSON: {exc}") from exc
    except ParamError as exc:
        raise ParamError(f"{name}: {exc}") from None
    if not isinstance(data, dict):
        raise ParamError(f"{name}: expected a JSON object")
    return data.get("params", data) if isinstance(data.get("params"), dict) else data


def load_source(path) -> dict:
    path = Path(path)
    return loads_source(path.read_text(), path.name)


def load_defaults(path=None) -> dict:
    if path is None:
        text = resources.files("urbancool").joinpath("data/defaults.json").read_text()
        return loads_source(text, "defaults.json")
    return load_source(path)


def _normalise(path: str, value: Any) -> Any:
    """Canonical JSON-native form of a value (lists, floats), broadcasting series."""
    spec = FIELDS[path]
    if value is None:
        return None
    if spec.kind == "series":
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return [float(value)] * HOURS
        return [None if v is None else float(v) for v in value]
    if spec.kind == "float":
        return float(value) if isinstance(value, (int, float)) and not isinstance(value, bool) else value
    if spec.kind in ("floats", "weights", "bbox"):
        return [float(v) for v in value]
    return copy.deepcopy(value)


def _check(path: str, value: Any) -> list[str]:
    spec = FIELDS[path]
    short = path.rsplit(".", 1)[-1]
    if value is None:
        return [] if spec.optional else [f"{path}: value is required"]
    if spec.kind in ("float", "int"):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            return [f"{path}: expected a number, got {value!r}"]
        if spec.kind == "int" and int(value) != value:
            return [f"{path}: expected an integer, got {value!r}"]
        return _range(path, short, [value], spec)
    if spec.kind == "choice":
        return [] if value in spec.choices else [f"{path}: {value!r} not one of {list(spec.choices)}"]
    if spec.kind == "json":
        return [] if isinstance(value, (dict, list)) else [f"{path}: expected an object or list"]
    if not isinstance(value, (list, tuple)) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in value if v is not None):
        return [f"{path}: expected a list of numbers"]
    out = []
    if spec.kind == "series":
        if len(value) != HOURS:
            out.append(f"{path}: expected {HOURS} hourly values, got {len(value)}")
        value = [v for v in value if v is not None]
    if spec.kind == "bbox":
        if len(value) != 4 or not (value[0] < value[2] and value[1] < value[3]):
            out.append(f"{path}: bbox must be [xmin, ymin, xmax, ymax] with positive extent")
        return out
    if not value and spec.kind != "series":
        out.append(f"{path}: empty list")
    if spec.increasing and any(b <= a for a, b in zip(value, value[1:])):
        out.append(f"{path}: {short} not strictly increasing")
    if spec.kind == "weights" and value and abs(sum(value) - 1.0) > 1e-9:
        out.append(f"{path}: weights must sum to 1 (sum {sum(value):g})")
    return out + _range(path, short, value, spec)


def _range(path, short, values, spec) -> list[str]:
    for v in values:
        if not math.isfinite(v):
            return [f"{path}: {short} is not finite"]
        below = v <= spec.lo if spec.lo_open else v < spec.lo
        if below or v > spec.hi:
            lb = "(" if spec.lo_open else "["
            return [f"{path}: {short} out of {lb}{spec.lo:g},{spec.hi:g}] (value {v!r})"]
    return []


def _check_overrides(value) -> list[str]:
    out = []
    if not isinstance(value, dict):
        return ["material.building_overrides: expected an object"]
    for bid, entries in value.items():
        if not isinstance(entries, dict):
            out.append(f"material.building_overrides.{bid}: expected an object")
            continue
        for key, v in entries.items():
            cls, _, prop = key.partition(".")
            if cls not in ("roof", "wall") or prop not in OVERRIDABLE_MATERIAL_KEYS:
                out.append(f"material.building_overrides.{bid}: unknown key {key!r}")
                continue
            out.extend(m.replace(f"material.{cls}.{prop}", f"material.building_overrides.{bid}.{key}")
                       for m in _check(f"material.{cls}.{prop}", v))
    return out


# ---------------------------------------------------------------------------
# resolved set


@dataclass(frozen=True)
class Param:
    value: Any
    level: ProvenanceLevel
    source: str = ""
    rationale: str = ""

    def to_json(self) -> dict:
        out = {"value": self.value, "level": self.level.label, "source": self.source}
        if self.rationale:
            out["rationale"] = self.rationale
        return out


class ResolvedParams(Mapping):
    """Read-only mapping ``path -> value`` with per-field provenance."""

    def __init__(self, entries: Mapping[str, Param]):
        self._entries = dict(sorted(entries.items()))

    def __getitem__(self, path: str):
        return self._entries[path].value

    def __iter__(self):
        return iter(self._entries)

    def __len__(self):
        return len(self._entries)

    def __eq__(self, other):
        if not isinstance(other, ResolvedParams):
            return NotImplemented
        return self.to_json() == other.to_json()

    def __hash__(self):
        return hash(json.dumps(self.to_json(), sort_keys=True))

    def entry(self, path: str) -> Param:
        return self._entries[path]

    def level(self, path: str) -> ProvenanceLevel:
        return self._entries[path].level

    def to_json(self) -> dict:
        return {k: p.to_json() for k, p in self._entries.items()}

    def hour(self, path: str, hour_index: int) -> float:
        """Value of a weather series for 0-based interval ``hour_index``."""
        return self[path][hour_index]

    def material(self, cls: str, prop: str, building_id: str | None = None):
        if building_id is not None:
            ov = self["material.building_overrides"].get(building_id, {})
            key = f"{cls}.{prop}"
            if key in ov:
                return ov[key]
        return self[f"material.{cls}.{prop}"]

    def replace_entries(self, changes: Mapping[str, Param]) -> "ResolvedParams":
        entries = dict(self._entries)
        entries.update(changes)
        return ResolvedParams(entries)


@dataclass
class Source:
    """A partial parameter mapping plus a provenance note and optional rationales."""

    values: dict = field(default_factory=dict)
    note: str = ""
    rationale: dict = field(default_factory=dict)


def _as_source(x, default_note: str) -> Source:
    if x is None:
        return Source(note=default_note)
    if isinstance(x, Source):
        return x
    return Source(dict(x), default_note)


def merge(defaults: Mapping, climate=None, realtime=None, advisor=None, user=None) -> ResolvedParams:
    """Resolve every field from the highest-precedence source that sets it.

    Each source may be a mapping or a :class:`Source`.  A value of ``None``
    counts as "not set" (except in the defaults, where it is the explicit
    value of an optional field).
    """
    srcs = {
        ProvenanceLevel.DEFAULT: _as_source(defaults, "defaults.json"),
        ProvenanceLevel.CLIMATE: _as_source(climate, "climate"),
        ProvenanceLevel.REALTIME: _as_source(realtime, "realtime"),
        ProvenanceLevel.ADVISOR: _as_source(advisor, "advisor"),
        ProvenanceLevel.USER: _as_source(user, "user"),
    }
    for level, src in srcs.items():
        unknown = sorted(set(src.values) - set(FIELDS))
        if unknown:
            raise ParamError(f"{level.label} source sets unknown field(s): {', '.join(unknown)}")
    missing = sorted(set(FIELDS) - set(srcs[ProvenanceLevel.DEFAULT].values))
    if missing:
        raise ParamError(f"defaults incomplete: missing {', '.join(missing)}")

    entries = {}
    for path in FIELDS:
        for level in RESOLUTION_ORDER:
            src = srcs[level]
            if path in src.values and (src.values[path] is not None or level == ProvenanceLevel.DEFAULT):
                value = _normalise(path, src.values[path])
                if FIELDS[path].kind == "series" and level != ProvenanceLevel.DEFAULT and value \
                        and any(v is None for v in value):
                    # hourly gaps are filled from lower-precedence sources
                    value = _fill_series(path, value, srcs, level)
                entries[path] = Param(value, level, src.note, src.rationale.get(path, ""))
                break
    params = ResolvedParams(entries)
    problems = validate(params)
    if problems:
        raise ParamError("invalid merged parameters: " + "; ".join(problems))
    return params


def _fill_series(path, value, srcs, level):
    after = RESOLUTION_ORDER[RESOLUTION_ORDER.index(level) + 1:]
    out = list(value)
    for lower in after:
        v = srcs[lower].values.get(path)
        if v is None:
            continue
        lv = _normalise(path, v)
        out = [a if a is not None else b for a, b in zip(out, lv)]
    return out


def validate(params: ResolvedParams) -> list[str]:
    """List of human-readable violations; empty when everything is in range."""
    out = []
    for path in FIELDS:
        if path not in params:
            out.append(f"{path}: missing")
            continue
        p = params.entry(path)
        msgs = _check(path, p.value)
        if path == "material.building_overrides" and not msgs:
            msgs = _check_overrides(p.value)
        out.extend(f"{m} (source {p.level.label}{': ' + p.source if p.source else ''})" for m in msgs)
    if not out:
        bp = params["radiation.erbs_breakpoints"]
        coef = params["radiation.erbs_coefficients"]
        if not (isinstance(coef, list) and len(coef) == len(bp) + 1):
            out.append("radiation.erbs_coefficients: need one polynomial per segment")
        heights = params["wind.slice_heights_m"]
        if heights and params["wind.z0_m"] >= 10.0:
            out.append("wind.z0_m: roughness length must be below the 10 m reference height")
    return out


# ---------------------------------------------------------------------------
# snapshots


def dumps_snapshot(params: ResolvedParams) -> str:
    return json.dumps(params.to_json(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def snapshot(params: ResolvedParams, path) -> Path:
    path = Path(path)
    path.write_text(dumps_snapshot(params))
    return path


def loads_snapshot(text: str) -> ResolvedParams:
    data = loads_source(text, "snapshot")
    entries = {}
    for k, v in data.items():
        if k not in FIELDS:
            raise ParamError(f"snapshot: unknown field {k!r}")
        entries[k] = Param(v["value"], ProvenanceLevel.parse(v["level"]), v.get("source", ""),
                           v.get("rationale", ""))
    return ResolvedParams(entries)


def load_snapshot(path) -> ResolvedParams:
    return loads_snapshot(Path(path).read_text())


# ---------------------------------------------------------------------------
# deltas


@dataclass(frozen=True)
class DeltaEntry:
    path: str
    old: Any
    new: Any
    reason: str = ""
    old_level: ProvenanceLevel | None = None
    old_source: str = ""
    old_rationale: str = ""
    restore: bool = False  # reinstate the recorded old provenance instead of tagging with the delta level

    def to_json(self) -> dict:
        return {"path": self.path, "old": self.old, "new": self.new, "reason": self.reason}


@dataclass(frozen=True)
class ParamDelta:
    entries: tuple[DeltaEntry, ...] = ()
    level: ProvenanceLevel = ProvenanceLevel.ADVISOR
    note: str = "mitigation"

    def __post_init__(self):
        if self.level not in (ProvenanceLevel.ADVISOR, ProvenanceLevel.USER):
            raise ParamError("a delta is either an advisor proposal or a user override")

    def __len__(self):
        return len(self.entries)

    def reversed(self) -> "ParamDelta":
        """Delta that undoes this one, restoring original provenance."""
        return ParamDelta(tuple(
            DeltaEntry(e.path, e.new, e.old, f"revert: {e.reason}", e.old_level, e.old_source, e.old_rationale,
                       restore=True)
            for e in reversed(self.entries)), self.level, f"revert {self.note}")

    def to_json(self) -> dict:
        return {"level": self.level.label, "note": self.note, "changes": [e.to_json() for e in self.entries]}


def make_delta(base: ResolvedParams, changes: Mapping[str, Any] | Iterable[tuple[str, Any, str]],
               level: ProvenanceLevel = ProvenanceLevel.ADVISOR, note: str = "mitigation") -> ParamDelta:
    """Build a delta against ``base`` from ``{path: new}`` or ``(path, new, reason)`` triples."""
    items = [(k, v, "") for k, v in changes.items()] if isinstance(changes, Mapping) else list(changes)
    entries = []
    for path, new, reason in items:
        if path not in FIELDS:
            raise ParamError(f"unknown field path {path!r}")
        p = base.entry(path)
        entries.append(DeltaEntry(path, copy.deepcopy(p.value), _normalise(path, new), reason,
                                  p.level, p.source, p.rationale))
    return ParamDelta(tuple(entries), level, note)


def delta_from_json(base: ResolvedParams, data: Mapping, level=ProvenanceLevel.USER) -> ParamDelta:
    """``{"path": value, ...}`` or ``{"changes": [{"path":..,"new":..,"reason":..}]}``."""
    if "changes" in data:
        triples = [(c["path"], c["new"], c.get("reason", "")) for c in data["changes"]]
    else:
        triples = [(k, v, "") for k, v in data.items()]
    return make_delta(base, triples, level, "user override")


def apply_delta(params: ResolvedParams, delta: ParamDelta) -> ResolvedParams:
    """Copy of ``params`` with the delta applied; the input is untouched."""
    changes = {}
    for e in delta.entries:
        if e.path not in FIELDS:
            raise ParamError(f"unknown field path {e.path!r}")
        value = _normalise(e.path, e.new)
        problems = _check(e.path, value)
        if e.path == "material.building_overrides" and not problems:
            problems = _check_overrides(value)
        if problems:
            raise ParamError("invalid delta value: " + "; ".join(problems))
        if e.restore and e.old_level is not None:
            changes[e.path] = Param(value, e.old_level, e.old_source, e.old_rationale)
        else:
            changes[e.path] = Param(value, delta.level, delta.note, e.reason)
    return params.replace_entries(changes)


# ---------------------------------------------------------------------------
# climate bridge


def climate_partial(site, day_records, complete_irradiance=None) -> Source:
    """Climate-level values for one simulated day (24 EPW records, hours 1..24).

    ``complete_irradiance(record) -> (ghi, dni, dhi, derived)`` fills DNI/DHI
    for records that only carry GHI.
    """
    if len(day_records) != HOURS:
        raise ParamError(f"expected {HOURS} records for the simulated day, got {len(day_records)}")
    names = {
        "weather.t_air_c": "t_air_2m",
        "weather.rh_pct": "rh_2m",
        "weather.wind_speed_ms": "wind_speed_10m",
        "weather.wind_dir_deg": "wind_dir_10m",
        "weather.ghi_wm2": "ghi",
        "weather.dni_wm2": "dni",
        "weather.dhi_wm2": "dhi",
    }
    values: dict[str, Any] = {
        "site.latitude": site.latitude,
        "site.longitude": site.longitude,
        "site.altitude_m": site.altitude,
        "site.utc_offset_h": site.utc_offset,
    }
    for path, attr in names.items():
        series = [getattr(r, attr) for r in day_records]
        if any(v is not None for v in series):
            values[path] = series
    note = "climate"
    if complete_irradiance is not None:
        derived = [complete_irradiance(r) for r in day_records]
        if any(d[3] for d in derived):
            values["weather.dni_wm2"] = [d[1] for d in derived]
            values["weather.dhi_wm2"] = [d[2] for d in derived]
            note = "climate (DNI/DHI from GHI decomposition)"
    return Source(values, note)
