import itertools
import json

import pytest
from hypothesis import given, settings, strategies as st

from urbancool.params import (
    FIELDS, RESOLUTION_ORDER, ParamDelta, ParamError, ProvenanceLevel as L, Source, apply_delta,
    delta_from_json, dumps_snapshot, load_defaults, loads_snapshot, loads_source, make_delta, merge,
    snapshot, load_snapshot, validate,
)

WS = "weather.wind_speed_ms"


@pytest.fixture(scope="module")
def defaults():
    return load_defaults()


def with_default(defaults, path, value):
    d = dict(defaults)
    d[path] = value
    return d


def test_climate_beats_advisor(defaults):
    p = merge(with_default(defaults, WS, 2.0), climate={WS: 3.1}, advisor={WS: 4.5})
    assert p[WS] == [3.1] * 24
    assert p.level(WS) is L.CLIMATE


def test_default_only(defaults):
    p = merge(with_default(defaults, WS, 2.0))
    assert p[WS] == [2.0] * 24
    assert p.level(WS) is L.DEFAULT


def test_user_beats_climate(defaults):
    p = merge(defaults, climate={WS: 3.1}, user={WS: 6.2})
    assert p[WS] == [6.2] * 24
    assert p.level(WS) is L.USER
    snap = json.loads(dumps_snapshot(p))
    assert snap[WS]["value"][0] == 6.2 and snap[WS]["level"] == "user"


def test_realtime_fills_only_unset(defaults):
    p = merge(defaults, climate={WS: 3.1}, realtime={WS: 3.4, "weather.t_air_c": 31.2})
    assert p.level(WS) is L.CLIMATE
    assert p.level("weather.t_air_c") is L.REALTIME


def test_partial_series_gap_filled(defaults):
    series = [3.0] * 24
    series[5] = None
    p = merge(defaults, climate={WS: series}, realtime={WS: 9.0})
    assert p[WS][5] == 9.0 and p[WS][4] == 3.0


def _expected(present):
    for level in RESOLUTION_ORDER:
        if level in present:
            return level
    return None


def test_all_presence_patterns(defaults):
    values = {L.DEFAULT: 1.0, L.CLIMATE: 2.0, L.REALTIME: 3.0, L.ADVISOR: 4.0, L.USER: 5.0}
    base = {k: v for k, v in defaults.items() if k != WS}
    for mask in itertools.product([False, True], repeat=5):
        present = {lvl for lvl, on in zip(L, mask) if on}
        src = {lvl: ({WS: values[lvl]} if lvl in present else {}) for lvl in L}
        d = dict(base, **src[L.DEFAULT])
        if L.DEFAULT not in present:
            with pytest.raises(ParamError, match="defaults incomplete"):
                merge(d, src[L.CLIMATE], src[L.REALTIME], src[L.ADVISOR], src[L.USER])
            continue
        p = merge(d, src[L.CLIMATE], src[L.REALTIME], src[L.ADVISOR], src[L.USER])
        want = _expected(present)
        assert p.level(WS) is want
        assert p[WS] == [values[want]] * 24


def test_validate_messages(defaults):
    with pytest.raises(ParamError, match="albedo out of \\[0,1\\]"):
        merge(defaults, user={"material.roof.albedo": 1.3})
    p = merge(defaults, user={"material.wall.emissivity": 0.9})
    assert validate(p) == []
    with pytest.raises(ParamError, match="not strictly increasing"):
        merge(defaults, user={"wind.slice_heights_m": [2, 10, 10, 20]})
    with pytest.raises(ParamError, match="source user"):
        merge(defaults, user={"grid.cell_size_m": 0.0})


def test_validate_returns_list(defaults):
    from urbancool.params import Param, ResolvedParams
    p = merge(defaults)
    bad = p.replace_entries({"weather.rh_pct": Param([120.0] * 24, L.USER, "x"),
                             "time.dt_s": Param(-1.0, L.USER, "x")})
    problems = validate(bad)
    assert len(problems) == 2
    assert isinstance(bad, ResolvedParams)


def test_unknown_and_incomplete(defaults):
    with pytest.raises(ParamError, match="unknown field"):
        merge(defaults, user={"nonexistent.field": 1})
    d = dict(defaults)
    del d["wind.z0_m"]
    with pytest.raises(ParamError, match="wind.z0_m"):
        merge(d)


def test_duplicate_keys_are_errors():
    with pytest.raises(ParamError, match="duplicate key"):
        loads_source('{"a": 1, "a": 2}')


def test_snapshot_round_trip(tmp_path, defaults):
    p = merge(defaults, climate=Source({WS: [2.5] * 24}, "sg.epw"),
              advisor=Source({"run.day": 15}, "advisor", {"run.day": "inter-monsoon"}), user={"radiation.seed": 7})
    f1 = snapshot(p, tmp_path / "a.json")
    f2 = snapshot(p, tmp_path / "b.json")
    assert f1.read_bytes() == f2.read_bytes()
    q = load_snapshot(f1)
    assert q == p
    assert q.entry("run.day").rationale == "inter-monsoon"
    assert list(json.loads(f1.read_text())) == sorted(FIELDS)


def test_apply_delta(defaults):
    base = merge(defaults)
    d = make_delta(base, {"material.roof.albedo": 0.65})
    out = apply_delta(base, d)
    assert out["material.roof.albedo"] == 0.65
    assert out.level("material.roof.albedo") is L.ADVISOR
    assert base["material.roof.albedo"] == 0.20
    assert apply_delta(base, ParamDelta()) == base
    with pytest.raises(ParamError, match="unknown field"):
        make_delta(base, {"nonexistent.field": 1})
    with pytest.raises(ParamError, match="invalid delta"):
        apply_delta(base, make_delta(base, {"material.roof.albedo": 1.3}))


def test_user_delta_json(defaults):
    base = merge(defaults)
    d = delta_from_json(base, {"changes": [{"path": "material.ground.albedo", "new": 0.4, "reason": "test"}]})
    out = apply_delta(base, d)
    assert out.level("material.ground.albedo") is L.USER
    assert out.entry("material.ground.albedo").rationale == "test"


def test_building_overrides(defaults):
    base = merge(defaults)
    out = apply_delta(base, make_delta(base, {"material.building_overrides": {"b001": {"roof.albedo": 0.65}}}))
    assert out.material("roof", "albedo", "b001") == 0.65
    assert out.material("roof", "albedo", "b002") == 0.20
    with pytest.raises(ParamError):
        apply_delta(base, make_delta(base, {"material.building_overrides": {"b001": {"roof.albedo": 2}}}))
    with pytest.raises(ParamError):
        apply_delta(base, make_delta(base, {"material.building_overrides": {"b001": {"ground.albedo": 0.3}}}))


def test_delta_level_restricted():
    with pytest.raises(ParamError):
        ParamDelta((), L.CLIMATE)


# ---------------------------------------------------------------------------
# properties

LEVELS = [L.CLIMATE, L.REALTIME, L.ADVISOR, L.USER]
value_st = st.one_of(st.none(), st.floats(0.0, 20.0, allow_nan=False))


def _merge_from(defaults, vals):
    srcs = {lvl: ({WS: v} if v is not None else {}) for lvl, v in vals.items()}
    return merge(defaults, srcs[L.CLIMATE], srcs[L.REALTIME], srcs[L.ADVISOR], srcs[L.USER])


@settings(max_examples=60, deadline=None)
@given(st.fixed_dictionaries({lvl: value_st for lvl in LEVELS}))
def test_merge_idempotent(vals):
    d = load_defaults()
    a = _merge_from(d, vals)
    b = _merge_from(d, vals)
    assert a == b
    assert loads_snapshot(dumps_snapshot(a)) == a


@settings(max_examples=80, deadline=None)
@given(st.fixed_dictionaries({lvl: value_st for lvl in LEVELS}), st.sampled_from(LEVELS),
       st.floats(0.0, 20.0, allow_nan=False))
def test_priority_monotone(vals, added, v):
    """Adding a source never lowers the winner's precedence; a source ranked
    below the current winner never changes the value."""
    d = load_defaults()
    rank = {lvl: i for i, lvl in enumerate(RESOLUTION_ORDER)}
    before = _merge_from(d, vals)
    after = _merge_from(d, {**vals, added: v})
    assert rank[after.level(WS)] <= rank[before.level(WS)]
    if rank[added] > rank[before.level(WS)]:
        assert after[WS] == before[WS]


@settings(max_examples=60, deadline=None)
@given(st.floats(0.0, 20.0), st.floats(0.0, 20.0), st.floats(0.0, 20.0), st.booleans())
def test_advisor_suppressed(c, a1, a2, via_realtime):
    d = load_defaults()
    key = L.REALTIME if via_realtime else L.CLIMATE
    vals = {L.CLIMATE: None, L.REALTIME: None, L.USER: None, key: c}
    p1 = _merge_from(d, {**vals, L.ADVISOR: a1})
    p2 = _merge_from(d, {**vals, L.ADVISOR: a2})
    assert p1[WS] == p2[WS] == [float(c)] * 24


@settings(max_examples=40, deadline=None)
@given(st.dictionaries(st.sampled_from(["material.roof.albedo", "material.wall.albedo", "material.ground.albedo",
                                        "person.clo", "radiation.sky_emissivity"]),
                       st.floats(0.05, 0.95), max_size=5),
       st.sampled_from([L.ADVISOR, L.USER]))
def test_delta_reverse_restores(changes, level):
    base = merge(load_defaults(), advisor=Source({"person.clo": 0.5}, "advisor", {"person.clo": "light"}))
    d = make_delta(base, changes, level)
    there = apply_delta(base, d)
    back = apply_delta(there, d.reversed())
    assert back == base
    assert dumps_snapshot(back) == dumps_snapshot(base)
