"""Material proposal heuristic and baseline-versus-mitigated comparison."""
from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field

import numpy as np
import shapely

from ..params import ParamDelta, ProvenanceLevel, ResolvedParams, make_delta
from ..simulation import RunResult

logger = logging.getLogger(__name__)

PENALTY_THRESHOLD_C = 0.1


class MitigationError(ValueError):
    pass


@dataclass
class MaterialPlan:
    targets: list[str]
    delta: ParamDelta
    rationale: dict[str, str] = field(default_factory=dict)
    values: dict[str, float] = field(default_factory=dict)
    rejected: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {"targets": list(self.targets), "albedo_targets": dict(self.values),
                "rationale": dict(self.rationale), "rejected": list(self.rejected),
                "delta": self.delta.to_json()}


def select_targets(result: RunResult) -> dict[str, str]:
    """Top-N buildings by EUI plus those within the radius of any reported hotspot."""
    params = result.params
    if not result.energies:
        raise MitigationError("baseline has no building energy metrics")
    reasons: dict[str, list[str]] = {}
    ranked = sorted(result.energies, key=lambda e: (-e.eui, e.building_id))
    for rank, e in enumerate(ranked[:int(params["mitigation.top_n"])], start=1):
        reasons.setdefault(e.building_id, []).append(f"EUI rank {rank}")
    radius = float(params["mitigation.radius_m"])
    bset = result.context.bset
    for h in result.hotspots:
        pt = shapely.Point(h.x, h.y)
        for b in bset.buildings:
            if b.footprint.distance(pt) <= radius:
                tag = f"near {h.kind} hotspot at hour {h.hour}"
                if tag not in reasons.setdefault(b.id, []):
                    reasons[b.id].append(tag)
    order = {e.building_id: i for i, e in enumerate(ranked)}
    return {bid: "; ".join(reasons[bid]) for bid in sorted(reasons, key=lambda b: (order.get(b, 1e9), b))}


def propose_materials(result: RunResult, consultant=None, note: str = "mitigation") -> MaterialPlan:
    params = result.params
    targets = select_targets(result)
    defaults = {"roof": params["mitigation.roof_albedo"], "wall": params["mitigation.wall_albedo"],
                "ground": params["mitigation.ground_albedo"]}
    values = dict(defaults)
    rejected = []
    level = ProvenanceLevel.ADVISOR
    if consultant is not None:
        request = {"targets": list(targets), "defaults": defaults,
                   "current": {c: params[f"material.{c}.albedo"] for c in ("roof", "wall", "ground")}}
        reply = consultant.ask("materials", request)
        for c in ("roof", "wall", "ground"):
            v = reply[f"{c}_albedo"]
            if not (isinstance(v, (int, float)) and 0.0 <= v <= 1.0):
                msg = f"advisor {c} albedo {v!r} rejected (outside [0, 1]); keeping {defaults[c]}"
                logger.warning(msg)
                rejected.append(msg)
            else:
                values[c] = float(v)

    overrides = copy.deepcopy(params["material.building_overrides"])
    for bid in targets:
        ov = overrides.setdefault(bid, {})
        for c in ("roof", "wall"):
            if params.material(c, "albedo", bid) != values[c]:
                ov[f"{c}.albedo"] = values[c]
        if not ov:
            overrides.pop(bid)
    changes = []
    if overrides != params["material.building_overrides"]:
        changes.append(("material.building_overrides", overrides,
                        f"roof/wall albedo to {values['roof']}/{values['wall']} on {len(targets)} target buildings"))
    if params["material.ground.albedo"] != values["ground"]:
        changes.append(("material.ground.albedo", values["ground"], "brighter ground paving"))
    delta = make_delta(params, changes, level, note)
    return MaterialPlan(list(targets), delta, targets, values, rejected)


def _pct(before: float, after: float):
    return (before - after) / before * 100.0 if before > 0 else None


def _peak_power(result: RunResult) -> float:
    if not result.energies:
        return 0.0
    return float(np.sum([e.hourly_power_w for e in result.energies], axis=0).max())


def compare_runs(baseline: RunResult, mitigated: RunResult) -> dict:
    """Per-building and per-hotspot deltas plus the albedo-penalty flag."""
    ids0 = [e.building_id for e in baseline.energies]
    ids1 = [e.building_id for e in mitigated.energies]
    if ids0 != ids1:
        raise MitigationError("runs cover different building sets")
    if baseline.hours != mitigated.hours or baseline.pet.shape != mitigated.pet.shape:
        raise MitigationError("runs cover different grids or hours")
    buildings = []
    for e0, e1 in zip(baseline.energies, mitigated.energies):
        buildings.append({"building_id": e0.building_id, "cooling_before_kwh": e0.energy_kwh,
                          "cooling_after_kwh": e1.energy_kwh, "reduction_pct": _pct(e0.energy_kwh, e1.energy_kwh),
                          "peak_before_w": e0.peak_power_w, "peak_after_w": e1.peak_power_w})
    hotspots, lit_deltas = [], []
    for h in baseline.hotspots:
        after = mitigated.point_value("pet", h.hour, h.x, h.y)
        lit = bool(baseline.point_value("lit", h.hour, h.x, h.y))
        d = after - h.pet
        hotspots.append({"kind": h.kind, "hour": h.hour, "x_m": h.x, "y_m": h.y, "pet_before_c": h.pet,
                         "pet_after_c": after, "delta_pet_c": d, "sun_exposed": lit})
        if lit:
            lit_deltas.append(d)
    total0, total1 = baseline.total_cooling_kwh(), mitigated.total_cooling_kwh()
    mean_lit = float(np.mean(lit_deltas)) if lit_deltas else None
    penalty = bool(mean_lit is not None and mean_lit > PENALTY_THRESHOLD_C and total1 < total0)
    p0, p1 = _peak_power(baseline), _peak_power(mitigated)
    return {
        "buildings": buildings,
        "hotspots": hotspots,
        "totals": {"cooling_before_kwh": total0, "cooling_after_kwh": total1,
                   "reduction_pct": _pct(total0, total1),
                   "peak_demand_before_w": p0, "peak_demand_after_w": p1,
                   "peak_demand_change_w": p1 - p0},
        "mean_delta_pet_sun_exposed_c": mean_lit,
        "flags": {"albedo_penalty": penalty},
    }


def changed_fields(a: ResolvedParams, b: ResolvedParams) -> list[str]:
    return sorted(k for k in a if a[k] != b[k])
