"""Five-stage pipeline: intent, geometry, params, solve, [mitigate], report."""
from __future__ import annotations

import json
import logging
from pathlib import Path

from .. import geometry, outputs, params as P, weather
from ..simulation import SimulationContext, simulate
from . import artifacts
from .advisor import Consultant
from .mitigation import compare_runs, propose_materials
from .recorder import InteractionRecorder
from .report import check_report, draft_report
from .state import IntentPlan, PipelineConfig, PipelineError, PipelineState

logger = logging.getLogger(__name__)


def analyze_intent(query: str, consultant: Consultant, mode: str = "audit") -> IntentPlan:
    if not query or not query.strip():
        raise PipelineError("intent", "empty query")
    reply = consultant.ask("intent", {"query": query, "mode": mode})
    ts = reply.get("timestamp") or {}
    try:
        return IntentPlan(frozenset(reply["analyses"]), dict(reply.get("parameters") or {}),
                          ts.get("month"), ts.get("day"), reply.get("rationale", ""))
    except ValueError as exc:
        raise PipelineError("intent", str(exc)) from exc


def _pre_source(config: PipelineConfig) -> tuple[dict, dict]:
    defaults = P.load_defaults(config.defaults_path)
    user = P.load_source(config.overrides_path) if config.overrides_path else {}
    if config.seed is not None:
        user["radiation.seed"] = int(config.seed)
    if config.domain_bbox is not None:
        user["grid.domain_bbox_m"] = list(config.domain_bbox)
    return defaults, user


def _stage_geometry(state: PipelineState, defaults: dict, user: dict) -> None:
    cfg = state.config
    if cfg.geometry_dir is None:
        raise PipelineError("geometry", "no geometry directory configured")

    def pick(path):
        return user.get(path, defaults[path])

    gcfg = geometry.GeometryConfig(buffer_factor=pick("grid.buffer_factor"), cell_size=pick("grid.cell_size_m"),
                                   domain_bbox=pick("grid.domain_bbox_m"))
    try:
        bset = geometry.build_index(cfg.geometry_dir, gcfg)
    except geometry.GeometryError as exc:
        raise PipelineError("geometry", str(exc)) from exc
    state.buildings = bset
    out = state.out_dir
    state.add_file("geometry", geometry.write_building_index(bset, out / "building_index.json"))
    state.add_file("geometry", geometry.render_index_map(bset, out / "building_index.svg"))
    state.manifest("geometry").summary = {"n_buildings": len(bset), "domain_bbox_m": list(bset.domain_bbox),
                                          "load_errors": list(bset.load_errors)}


def _resolve_date(plan: IntentPlan, defaults: dict, user: dict):
    if "run.month" in user or "run.day" in user:
        return user.get("run.month", defaults["run.month"]), user.get("run.day", defaults["run.day"]), "user"
    if plan.month is not None:
        return plan.month, plan.day, "advisor"
    return defaults["run.month"], defaults["run.day"], "default"


def _stage_params(state: PipelineState, defaults: dict, user: dict, realtime_client=None) -> None:
    cfg = state.config
    plan = state.plan
    month, day, _ = _resolve_date(plan, defaults, user)
    state.month, state.day = month, day
    advisor_vals = dict(plan.parameters)
    if plan.month is not None:
        advisor_vals.update({"run.month": plan.month, "run.day": plan.day})
    advisor = P.Source(advisor_vals, "advisor", {k: plan.rationale for k in advisor_vals})
    if cfg.climate_path is None or not Path(cfg.climate_path).is_file():
        raise PipelineError("params", f"climate file not found: {cfg.climate_path}")
    try:
        site, records = weather.parse_epw(cfg.climate_path)
        day_records = weather.select_day(records, month, day)
        year = user.get("run.year", defaults["run.year"])
        climate = P.climate_partial(site, day_records,
                                    lambda r: weather.complete_irradiance(site, r, year))
        realtime = weather.fetch_realtime(realtime_client, site)
        state.params = P.merge(defaults, climate, realtime, advisor, user)
    except (weather.WeatherError, P.ParamError) as exc:
        raise PipelineError("params", str(exc)) from exc
    state.add_file("params", P.snapshot(state.params, state.out_dir / "params_snapshot.json"))
    levels = {}
    for k in state.params:
        lab = state.params.level(k).label
        levels[lab] = levels.get(lab, 0) + 1
    state.manifest("params").summary = {"month": month, "day": day, "fields_by_level": levels}


def _partial_snapshot(state: PipelineState, defaults, user) -> str | None:
    """Best-effort provenance without the climate source, for diagnostics."""
    try:
        plan = state.plan
        adv = {}
        if plan is not None:
            adv = dict(plan.parameters)
            if plan.month is not None:
                adv.update({"run.month": plan.month, "run.day": plan.day})
        params = P.merge(defaults, None, None, adv, user)
        path = state.out_dir / "params_snapshot.partial.json"
        P.snapshot(params, path)
        return state.add_file("params", path)
    except Exception as exc:  # diagnostics only
        logger.warning("could not write partial snapshot: %s", exc)
        return None


def _stage_solve(state: PipelineState):
    try:
        ctx = SimulationContext.build(state.buildings, state.params)
        result = simulate(ctx, state.params)
    except Exception as exc:
        raise PipelineError("solve", f"{type(exc).__name__}: {exc}") from exc
    state.baseline = result
    files = []
    if state.config.write_fields:
        files = artifacts.write_fields(result, state.out_dir)
    for f in files:
        state.add_file("solve", f)
    for name, obj in (("building_energy.json", [e.to_json() for e in result.energies]),
                      ("hotspots.json", [h.to_json() for h in result.hotspots])):
        state.add_file("solve", outputs.write_json(obj, state.out_dir / name))
    state.manifest("solve").summary = {"total_cooling_kwh": round(result.total_cooling_kwh(), 3),
                                       "peak_pet_c": round(result.hotspots[0].pet, 2) if result.hotspots else None}
    return ctx


def _stage_mitigate(state: PipelineState, ctx, consultant: Consultant) -> None:
    cfg = state.config
    current = state.baseline
    for rnd in range(1, int(cfg.rounds) + 1):
        try:
            if cfg.delta_path is not None and rnd == 1:
                data = json.loads(Path(cfg.delta_path).read_text())
                delta = P.delta_from_json(current.params, data, P.ProvenanceLevel.USER)
                plan = {"targets": sorted({k for c in delta.entries if c.path == "material.building_overrides"
                                           for k in c.new}), "delta": delta.to_json(), "source": "user delta file"}
            else:
                mp = propose_materials(current, consultant, note=f"mitigation round {rnd}")
                delta, plan = mp.delta, mp.to_json()
            if len(delta) == 0:
                logger.info("round %d: no further material changes proposed", rnd)
                break
            params = P.apply_delta(current.params, delta)
            result = simulate(ctx, params)
        except (P.ParamError, ValueError, OSError) as exc:
            raise PipelineError("mitigate", str(exc)) from exc
        d = compare_runs(state.baseline, result)
        sub = state.out_dir / f"mitigation_round{rnd}"
        sub.mkdir(parents=True, exist_ok=True)
        state.add_file("mitigate", P.snapshot(params, sub / "params_snapshot.json"))
        files = artifacts.write_fields(result, sub) if cfg.write_fields else []
        for f in files:
            state.add_file("mitigate", f)
        rel = [Path(f).resolve().relative_to(sub.resolve()).as_posix() for f in files]
        state.add_file("mitigate", outputs.write_metrics(artifacts.build_metrics(result, rel), sub / "metrics.json"))
        state.mitigated.append(result)
        state.plans.append(plan)
        state.deltas.append(d)
        current = result
    if state.deltas:
        state.add_file("mitigate", outputs.write_json({"rounds": [
            {"round": i + 1, "plan": p, "delta": d} for i, (p, d) in enumerate(zip(state.plans, state.deltas))]},
            state.out_dir / "delta_metrics.json"))
        last = state.deltas[-1]
        state.manifest("mitigate").summary = {"rounds": len(state.deltas),
                                              "albedo_penalty": last["flags"]["albedo_penalty"]}


def _recommendation_request(state: PipelineState) -> dict:
    causes, outliers, sunlit = set(), [], False
    if state.baseline is not None:
        for h in state.baseline.hotspots:
            causes.update(h.causes)
            sunlit = sunlit or bool(state.baseline.point_value("lit", h.hour, h.x, h.y))
        outliers = [e.building_id for e, flag in state.baseline.outliers if flag]
    penalty = bool(state.deltas and state.deltas[-1]["flags"]["albedo_penalty"])
    return {"hotspot_causes": sorted(causes), "outliers": outliers, "sunlit_hotspots": sunlit,
            "albedo_penalty": penalty, "mitigated": bool(state.deltas)}


def _stage_report(state: PipelineState, consultant: Consultant, partial: str | None) -> Path:
    out = state.out_dir
    metrics = None
    if state.baseline is not None:
        mitigation = None
        if state.deltas:
            plan = state.plans[-1]
            mitigation = {"rounds": len(state.deltas), "targets": plan["targets"], "delta": state.deltas[-1]}
        files = [f for s in ("geometry", "params", "solve", "mitigate") if s in state.manifests
                 for f in state.manifests[s].files]
        metrics = artifacts.build_metrics(state.baseline, files, mitigation)
        outputs.write_metrics(metrics, out / "metrics.json")
        state.add_file("report", out / "metrics.json")
        metrics = json.loads((out / "metrics.json").read_text())
    recs = []
    if state.baseline is not None:
        try:
            recs = consultant.ask("report", _recommendation_request(state))["recommendations"]
        except Exception as exc:  # the report must still be written
            logger.warning("recommendations unavailable: %s", exc)
    state.add_file("report", out / "llm_interactions.json")
    state.add_file("report", out / "llm_interactions.log")
    files = sorted({f for m in state.manifests.values() for f in m.files} | {"run_manifest.json"})
    text = draft_report(metrics, query=state.config.query,
                        analyses=state.plan.analyses if state.plan else (),
                        stages=state.completed, error=state.error, recommendations=recs, files=files,
                        partial_snapshot=partial, warnings=consultant.warnings)
    path = out / "report.md"
    path.write_text(text, encoding="utf-8")
    state.add_file("report", path)
    return path


def run_pipeline(config: PipelineConfig, advisor=None, realtime_client=None) -> PipelineState:
    """Run every stage; failures are captured in ``state.error`` and still produce a report."""
    state = PipelineState(config)
    out = state.out_dir
    out.mkdir(parents=True, exist_ok=True)
    recorder = InteractionRecorder(out)
    consultant = Consultant(advisor, recorder)
    partial = None
    defaults, user = {}, {}
    ctx = None
    try:
        mode = "mitigation" if config.force_mitigation else "audit"
        state.plan = analyze_intent(config.query, consultant, mode)
        state.completed.append("intent")
        try:
            defaults, user = _pre_source(config)
        except (P.ParamError, OSError) as exc:
            raise PipelineError("params", str(exc)) from exc
        _stage_geometry(state, defaults, user)
        state.completed.append("geometry")
        try:
            _stage_params(state, defaults, user, realtime_client)
        except PipelineError:
            partial = _partial_snapshot(state, defaults, user)
            raise
        state.completed.append("params")
        ctx = _stage_solve(state)
        state.completed.append("solve")
        if config.rounds > 0 and (config.force_mitigation or state.plan.wants("mitigation")):
            _stage_mitigate(state, ctx, consultant)
            state.completed.append("mitigate")
    except PipelineError as exc:
        state.error = exc
        logger.error("%s", exc)
    _stage_report(state, consultant, partial)
    state.completed.append("report")
    state.advisor_calls = consultant.calls
    manifest = {"query": config.query, "completed_stages": state.completed,
                "error": None if state.error is None else {"stage": state.error.stage, "message": state.error.message},
                "plan": state.plan.to_json() if state.plan else None,
                "stages": {k: m.to_json() for k, m in state.manifests.items()},
                "advisor_calls": consultant.calls, "advisor_warnings": consultant.warnings}
    outputs.write_json(manifest, out / "run_manifest.json")
    # the manifest is listed in the report, so check only once it exists
    metrics_path = out / "metrics.json"
    manifest["report_check"] = check_report((out / "report.md").read_text(),
                                            json.loads(metrics_path.read_text()) if metrics_path.exists() else None,
                                            out)
    if manifest["report_check"]:
        logger.warning("report check: %s", "; ".join(manifest["report_check"]))
    outputs.write_json(manifest, out / "run_manifest.json")
    return state
