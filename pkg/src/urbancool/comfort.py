"""Physiological Equivalent Temperature and hotspot extraction.

PET uses the three-node (core, skin, clothing) steady MEMI balance with the
corrected vapour-diffusion treatment.  The actual environment is solved for
the node temperatures; PET is then the air temperature of the reference room
(MRT = T_air, 0.1 m/s, 12 hPa) that balances the same body state.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .geometry import BuildingSet, Grid2D

REF_WIND = 0.1
REF_VAPOUR_HPA = 12.0
REF_CLO = 0.9
MIN_WIND = 0.1
PET_TOL = 0.01

_SIGMA = 5.67e-8
_H_VAP = 2.42e6
_C_BLOOD = 3640.0
_TC_SET = 36.6
_TSK_SET = 34.0


class ComfortError(RuntimeError):
    pass


@dataclass(frozen=True)
class PersonParams:
    age: float = 35.0
    height: float = 1.75
    weight: float = 75.0
    sex: str = "male"
    work: float = 80.0
    clo: float = 0.9

    def __post_init__(self):
        for name in ("age", "height", "weight", "work", "clo"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.sex not in ("male", "female"):
            raise ValueError("sex must be 'male' or 'female'")

    @classmethod
    def from_params(cls, params) -> "PersonParams":
        return cls(params["person.age_yr"], params["person.height_m"], params["person.weight_kg"],
                   params["person.sex"], params["person.work_w"], params["person.clo"])


def _body(person: PersonParams, clo: float) -> np.ndarray:
    """Person constants packed for the numba kernels."""
    w, ht = person.weight, person.height
    a_du = 0.202 * w ** 0.425 * ht ** 0.725
    if person.sex == "male":
        basal = 3.45 * w ** 0.75 * (1 + 0.004 * (30 - person.age) + 0.01 * (ht * 100 / w ** (1 / 3) - 43.4))
    else:
        basal = 3.19 * w ** 0.75 * (1 + 0.004 * (30 - person.age) + 0.018 * (ht * 100 / w ** (1 / 3) - 42.1))
    he = (person.work + basal) / a_du
    fcl = 1 + 0.31 * clo
    fa = (173.51 * clo - 2.36 - 100.76 * clo ** 2 + 19.28 * clo ** 3) / 100
    a_clo = a_du * fa + a_du * (fcl - 1)
    fa = min(fa, 1.0)
    if clo >= 2.0:
        y = 1.0
    elif clo > 0.6:
        y = (ht - 0.2) / ht
    elif clo > 0.3:
        y = 0.5
    else:
        y = 0.1
    r_cl = clo / 6.45
    r2 = a_du * (fcl - 1 + fa) / (2 * math.pi * ht * y)
    r1 = fa * a_du / (2 * math.pi * ht * y)
    htcl = 2 * math.pi * ht * y * (r2 - r1) / (r_cl * math.log(r2 / r1) * a_clo)
    return np.array([a_du, he, fcl, fa, a_clo, r_cl, htcl, 0.725])


@numba.njit(cache=True)
def _psat(t):
    return 6.1078 * math.exp(17.27 * t / (t + 237.3))


@numba.njit(cache=True)
def _fluxes(tc, tsk, tcl, ta, tr, v, vpa, b):
    """Node balances (core, skin, clothing) and their sum, W/m2."""
    a_du, he, fcl, fa, a_clo, r_cl, htcl, f_eff = b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7]
    hc = max(2.67 + 6.5 * v ** 0.67, 3.0)
    # respiration
    t_exp = 0.47 * ta + 21.0
    vent = he * 1.44e-6
    ere = 1010.0 * (ta - t_exp) * vent + 0.623 * _H_VAP / 1013.25 * (vpa - _psat(t_exp)) * vent
    # vasomotion and sweating
    sig_core = max(tc - _TC_SET, 0.0)
    sig_skin = max(_TSK_SET - tsk, 0.0)
    m_blood = min((6.3 + 75.0 * sig_core) / (1.0 + 0.5 * sig_skin), 90.0)
    alpha = 0.0417737 + 0.7451833 / (m_blood + 0.585417)
    t_body = alpha * tsk + (1 - alpha) * tc
    sweat = min(304.94 * max(t_body - (0.1 * _TSK_SET + 0.9 * _TC_SET), 0.0), 500.0)
    esw = _H_VAP / 1000.0 * sweat / 3600.0
    p_sk = _psat(tsk)
    lr = 1.67
    e_max = hc * lr / (1 + 0.92 * hc * r_cl) * (p_sk - vpa)
    if e_max == 0.0:
        e_max = 0.001
    wet = esw / e_max
    if wet > 1.0:
        wet = 1.0
        if esw - e_max < 0:
            esw = e_max
    esw = max(esw, 0.0)
    r_ecl = (1 / (fcl * hc) + r_cl) / (lr * 0.38)
    evap = -((1 - wet) * (p_sk - vpa) / r_ecl + esw)
    # dry exchange
    tr4 = (tr + 273.15) ** 4
    r_bare = a_du * f_eff * (1 - fa) * 0.99 * _SIGMA * (tr4 - (tsk + 273.15) ** 4) / a_du
    r_clo = f_eff * a_clo * 0.95 * _SIGMA * (tr4 - (tcl + 273.15) ** 4) / a_du
    c_bare = hc * (ta - tsk) * (1 - fa)
    c_clo = hc * (ta - tcl) * a_clo / a_du
    k_core = (m_blood / 3600.0 * _C_BLOOD + 5.28) * (tc - tsk)
    core = he + ere - k_core
    skin = r_bare + c_bare + evap + k_core - htcl * (tsk - tcl)
    clo = c_clo + r_clo + htcl * (tsk - tcl)
    return core, skin, clo, he + ere + r_bare + r_clo + c_bare + c_clo + evap


@numba.njit(cache=True)
def _solve_body(ta, tr, v, vpa, b):
    """Damped Newton on the three node balances; returns (tc, tsk, tcl, ok)."""
    x = np.array([36.7, 34.0, 0.5 * (ta + tr)])
    f = np.empty(3)
    jac = np.empty((3, 3))
    for _ in range(200):
        f[0], f[1], f[2], _t = _fluxes(x[0], x[1], x[2], ta, tr, v, vpa, b)
        norm = abs(f[0]) + abs(f[1]) + abs(f[2])
        if norm < 1e-8:
            return x[0], x[1], x[2], True
        for k in range(3):
            xp = x.copy()
            step = 1e-6 * max(1.0, abs(x[k]))
            xp[k] += step
            g0, g1, g2, _t = _fluxes(xp[0], xp[1], xp[2], ta, tr, v, vpa, b)
            jac[0, k] = (g0 - f[0]) / step
            jac[1, k] = (g1 - f[1]) / step
            jac[2, k] = (g2 - f[2]) / step
        dx = np.linalg.solve(jac, -f)
        lam = 1.0
        for _k in range(30):
            xn = x + lam * dx
            h0, h1, h2, _t = _fluxes(xn[0], xn[1], xn[2], ta, tr, v, vpa, b)
            if abs(h0) + abs(h1) + abs(h2) < norm or lam < 1e-6:
                break
            lam *= 0.5
        x = xn
    f[0], f[1], f[2], _t = _fluxes(x[0], x[1], x[2], ta, tr, v, vpa, b)
    return x[0], x[1], x[2], abs(f[0]) + abs(f[1]) + abs(f[2]) < 1e-4


@numba.njit(cache=True)
def _reference_temperature(tc, tsk, tcl, b_ref, lo, hi, tol):
    """Air temperature of the reference room that balances the given body state."""
    flo = _fluxes(tc, tsk, tcl, lo, lo, 0.1, 12.0, b_ref)[3]
    fhi = _fluxes(tc, tsk, tcl, hi, hi, 0.1, 12.0, b_ref)[3]
    if flo * fhi > 0:
        return np.nan
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = _fluxes(tc, tsk, tcl, mid, mid, 0.1, 12.0, b_ref)[3]
        if (fm > 0) == (fhi > 0):
            hi, fhi = mid, fm
        else:
            lo, flo = mid, fm
    return 0.5 * (lo + hi)


@numba.njit(cache=True, parallel=True)
def _pet_batch(ta, tr, v, vpa, b, b_ref, tol):
    n = ta.shape[0]
    out = np.empty(n)
    ok = np.zeros(n, dtype=np.bool_)
    for i in numba.prange(n):
        tc, tsk, tcl, conv = _solve_body(ta[i], tr[i], v[i], vpa[i], b)
        if not conv:
            out[i] = np.nan
            continue
        out[i] = _reference_temperature(tc, tsk, tcl, b_ref, -60.0, 100.0, tol)
        ok[i] = not np.isnan(out[i])
    return out, ok


def pet(t_air, mrt, wind, rh, person: PersonParams | None = None, tol: float = PET_TOL):
    """PET in deg C; array inputs broadcast.  Wind below 0.1 m/s is floored."""
    person = person or PersonParams()
    ta, tr, v, rh_ = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (t_air, mrt, wind, rh)))
    shape = ta.shape
    if np.any((rh_ < 0) | (rh_ > 100)):
        raise ValueError("rh must be within [0, 100]")
    ta, tr, rh_ = ta.ravel(), tr.ravel(), rh_.ravel()
    v = np.maximum(v.ravel(), MIN_WIND)
    vpa = rh_ / 100.0 * 6.1078 * np.exp(17.27 * ta / (ta + 237.3))
    body = _body(person, person.clo)
    ref = _body(person, REF_CLO)
    out, ok = _pet_batch(ta, tr, v, vpa, body, ref, tol * 0.1)
    if not ok.all():
        i = int(np.flatnonzero(~ok)[0])
        raise ComfortError(f"PET did not converge for t_air={ta[i]:.2f} C, mrt={tr[i]:.2f} C, "
                           f"wind={v[i]:.2f} m/s, rh={rh_[i]:.1f} %")
    return float(out[0]) if shape == () else out.reshape(shape)


# ---------------------------------------------------------------------------
# hotspots


@dataclass(frozen=True)
class Hotspot:
    x: float
    y: float
    hour: int
    pet: float
    mrt: float
    nearest: tuple[str, ...] = ()
    causes: tuple[str, ...] = ()
    wind: float = float("nan")
    svf: float = float("nan")
    reflected: float = float("nan")
    kind: str = "hourly"

    def to_json(self) -> dict:
        return {"kind": self.kind, "hour": self.hour, "x_m": round(self.x, 3), "y_m": round(self.y, 3),
                "pet_c": round(self.pet, 2), "mrt_c": round(self.mrt, 2), "nearest_buildings": list(self.nearest),
                "causes": list(self.causes), "wind_ms": round(self.wind, 3), "svf": round(self.svf, 3),
                "reflected_sw_wm2": round(self.reflected, 1)}


@dataclass
class HotspotInputs:
    """Hourly pedestrian fields, each (n_hours, ny, nx); NaN marks invalid points."""
    grid: Grid2D
    hours: list[int]
    pet: np.ndarray
    mrt: np.ndarray
    wind: np.ndarray | None = None
    svf: np.ndarray | None = None       # (ny, nx)
    reflected: np.ndarray | None = None
    extra: dict = field(default_factory=dict)


def _cause_tags(wind, svf, reflected, low_wind, high_svf, reflected_threshold):
    tags = []
    if wind < low_wind:
        tags.append("low wind")
    if svf > high_svf:
        tags.append("high svf")
    if reflected > reflected_threshold:
        tags.append("reflected gain")
    return tuple(tags)


def _ranked(cand, values, hours, xs, ys):
    """Candidate flat indices sorted by PET desc, then hour, then x, then y (NaN dropped)."""
    cand = cand[~np.isnan(values[cand])]
    return cand[np.lexsort((ys[cand], xs[cand], hours[cand], -values[cand]))]


def hotspot_scan(data: HotspotInputs, bset: BuildingSet | None = None, low_wind: float = 1.0,
                 high_svf: float = 0.7, reflected_threshold: float = 100.0, count: int = 10,
                 traversal=None) -> list[Hotspot]:
    """Global maximum first, then the per-hour maxima sorted by PET.

    Ties are broken by earlier hour, then smaller x, then smaller y, so the
    result does not depend on ``traversal``, the order in which flat
    (hour, row, column) cells are visited.
    """
    pet_ = np.asarray(data.pet, dtype=float)
    if pet_.ndim != 3 or pet_.shape[0] != len(data.hours) or pet_.shape[0] == 0:
        raise ValueError("pet must be (n_hours, ny, nx) with one grid per hour")
    if np.all(np.isnan(pet_)):
        raise ValueError("all PET grid points are invalid")
    nh, ny, nx = pet_.shape
    cand = np.arange(pet_.size)
    if traversal is not None:
        cand = np.asarray(traversal, dtype=np.int64)
        if cand.shape != (pet_.size,) or not np.array_equal(np.sort(cand), np.arange(pet_.size)):
            raise ValueError("traversal must be a permutation of the flat grid indices")
    cx, cy = data.grid.centres()
    hour_of = np.repeat(np.arange(nh), ny * nx)
    hours = np.asarray(data.hours)[hour_of]
    xs = np.broadcast_to(cx, pet_.shape).ravel()
    ys = np.broadcast_to(cy, pet_.shape).ravel()
    flat = pet_.ravel()

    def record(k, kind):
        h, j, i = np.unravel_index(k, pet_.shape)
        wind = float(data.wind[h, j, i]) if data.wind is not None else float("nan")
        svf = float(data.svf[j, i]) if data.svf is not None else float("nan")
        refl = float(data.reflected[h, j, i]) if data.reflected is not None else float("nan")
        x, y = float(cx[j, i]), float(cy[j, i])
        near = tuple(bset.nearest(x, y, 2)) if bset is not None and len(bset) else ()
        return Hotspot(x, y, int(data.hours[h]), float(flat[k]), float(data.mrt[h, j, i]), near,
                       _cause_tags(wind, svf, refl, low_wind, high_svf, reflected_threshold),
                       wind, svf, refl, kind)

    order = _ranked(cand, flat, hours, xs, ys)
    out = [record(int(order[0]), "global")]
    per_hour = []
    for h in range(nh):
        local = _ranked(cand[hour_of[cand] == h], flat, hours, xs, ys)
        if local.size:
            per_hour.append(int(local[0]))
    per_hour = np.asarray(per_hour, dtype=np.int64)
    per_hour = per_hour[np.lexsort((ys[per_hour], xs[per_hour], hours[per_hour], -flat[per_hour]))]
    out.extend(record(int(k), "hourly") for k in per_hour[:max(0, count)])
    return out
