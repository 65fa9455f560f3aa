"""Markdown report drafted from the metrics document.

Every number in the report is formatted from a value in metrics.json with a
fixed precision (PET and temperatures 0.01, energy 0.1, percent 0.1), so
:func:`check_report` can verify each one by exact string match.  Advisor
free text is quoted (``>`` lines) and exempt from that check.
"""
from __future__ import annotations

import re
from pathlib import Path

MONTH_NAMES = ("January", "February", "March", "April", "May", "June", "July", "August", "September",
               "October", "November", "December")
CATEGORIES = ("materials", "shading", "ventilation")


def _f(x, nd):
    return "n/a" if x is None else f"{x:.{nd}f}"


def _value(v):
    if isinstance(v, dict):
        if "min" in v:
            return f"series {v['min']} to {v['max']}"
        if "buildings" in v:
            return f"overrides for {v['buildings']} buildings"
    if isinstance(v, list):
        return ", ".join(str(x) for x in v)
    return "none" if v is None else str(v)


def _table(header, rows):
    out = ["| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
    out += ["| " + " | ".join(str(c) for c in r) + " |" for r in rows]
    return out


def draft_report(metrics: dict | None, *, query: str, analyses=(), stages=(), error=None,
                 recommendations=(), files=(), partial_snapshot: str | None = None,
                 warnings=()) -> str:
    lines = ["# Urban microclimate report", "", "## Run summary", "", f"> Query: {query}", ""]
    if analyses:
        lines.append("Analyses: " + ", ".join(sorted(analyses)) + ".")
    if stages:
        lines.append("Completed stages: " + ", ".join(stages) + ".")
    if metrics is not None:
        r = metrics["run"]
        lines += [f"Simulated day: {r['day']} {MONTH_NAMES[r['month'] - 1]} {r['year']}, {r['hours']} hourly steps, "
                  f"{r['n_buildings']} buildings, {r['cell_size_m']} m grid, seed {r['seed']}."]
        if metrics.get("peak"):
            p = metrics["peak"]
            lines.append(f"Peak pedestrian PET {_f(p['pet_c'], 2)} C (MRT {_f(p['mrt_c'], 2)} C) at hour {p['hour']}, "
                         f"x {_f(p['x_m'], 1)} m, y {_f(p['y_m'], 1)} m.")
    for w in warnings:
        lines.append(f"> Warning: {w}")
    if error is not None:
        lines += ["", "## Failure diagnostics", "", f"Failed stage: {error.stage}", "", f"> Error: {error.message}"]
        if partial_snapshot:
            lines.append(f"Partial provenance snapshot: `{partial_snapshot}`")
    if metrics is None:
        lines += _manifest(files)
        return "\n".join(lines) + "\n"

    lines += ["", "## Parameter provenance", ""]
    rows = [(f"`{k}`", f"`{_value(v['value'])}`", v["level"], v["source"])
            for k, v in metrics["parameters"].items()]
    lines += _table(("parameter", "value", "level", "source"), rows)

    if metrics["hotspots"]:
        lines += ["", "## Thermal hotspots", "",
                  "Global maximum first, then hourly maxima by PET; nearest buildings by footprint distance.", ""]
        rows = [(h["rank"], h["kind"], h["hour"], _f(h["x_m"], 1), _f(h["y_m"], 1), _f(h["pet_c"], 2),
                 _f(h["mrt_c"], 2), ", ".join(h["nearest_buildings"]) or "-", ", ".join(h["causes"]) or "-")
                for h in metrics["hotspots"]]
        lines += _table(("rank", "kind", "hour", "x (m)", "y (m)", "PET (C)", "MRT (C)", "nearest", "causes"), rows)

    if metrics["buildings"]:
        t = metrics["totals"]
        lines += ["", "## Building energy", "",
                  f"Total envelope cooling energy {_f(t['cooling_energy_kwh'], 1)} kWh; peak envelope gain "
                  f"{_f(t['peak_power_w'], 1)} W. EUI uses envelope area; outliers exceed "
                  f"{_f(t['outlier_threshold_kwh_m2'], 3)} kWh/m2.", ""]
        rows = [(b["eui_rank"], b["building_id"], _f(b["cooling_energy_kwh"], 1), _f(b["eui_envelope_kwh_m2"], 3),
                 _f(b["eui_floor_kwh_m2"], 3), "yes" if b["outlier"] else "no") for b in metrics["buildings"]]
        lines += _table(("rank", "building", "cooling (kWh)", "EUI envelope (kWh/m2)", "EUI floor (kWh/m2)",
                         "outlier"), rows)

    mit = metrics.get("mitigation")
    if mit:
        lines += ["", "## Mitigation", "", "Targets: " + (", ".join(mit["targets"]) or "none") + "."]
        d = mit["delta"]
        lines += ["", "Reduction in daily cooling energy per building:", ""]
        rows = [(b["building_id"], _f(b["cooling_before_kwh"], 1), _f(b["cooling_after_kwh"], 1),
                 _f(b["reduction_pct"], 1)) for b in d["buildings"]]
        lines += _table(("building", "before (kWh)", "after (kWh)", "reduction (%)"), rows)
        t = d["totals"]
        lines += ["", f"Total cooling energy {_f(t['cooling_before_kwh'], 1)} kWh to {_f(t['cooling_after_kwh'], 1)} kWh "
                      f"({_f(t['reduction_pct'], 1)} % reduction); peak envelope gain "
                      f"{_f(t['peak_demand_before_w'], 1)} W to {_f(t['peak_demand_after_w'], 1)} W.", ""]
        rows = [(h["kind"], h["hour"], _f(h["x_m"], 1), _f(h["y_m"], 1), _f(h["pet_before_c"], 2),
                 _f(h["pet_after_c"], 2), _f(h["delta_pet_c"], 2), "yes" if h["sun_exposed"] else "no")
                for h in d["hotspots"]]
        lines += _table(("kind", "hour", "x (m)", "y (m)", "PET before (C)", "PET after (C)", "change (C)",
                         "sun-exposed"), rows)
        lines.append("")
        mean = d["mean_delta_pet_sun_exposed_c"]
        if d["flags"]["albedo_penalty"]:
            lines.append(f"Albedo penalty: yes. Envelope cooling fell, but PET at sun-exposed hotspots rose by "
                         f"{_f(mean, 2)} C on average because brighter ground and walls reflect more shortwave "
                         f"onto pedestrians.")
        else:
            lines.append("Albedo penalty: no. Sun-exposed hotspot PET did not rise beyond the threshold "
                         f"(mean change {_f(mean, 2)} C).")

    if recommendations:
        lines += ["", "## Recommendations", ""]
        for cat in CATEGORIES:
            items = [r["text"] for r in recommendations if r["category"] == cat]
            if items:
                lines.append(f"### {cat.capitalize()}")
                lines += [f"> {t}" for t in items]
                lines.append("")
    lines += _manifest(files)
    return "\n".join(lines) + "\n"


def _manifest(files):
    out = ["", "## Reference output files", ""]
    out += [f"- `{f}`" for f in sorted(files)]
    return out


_NUM = re.compile(r"(?<![\w.])-?\d+(?:\.\d+)?(?![\w.]*\w)")


def _allowed(metrics) -> set[str]:
    allowed = set()

    def walk(v):
        if isinstance(v, dict):
            for x in v.values():
                walk(x)
        elif isinstance(v, list):
            for x in v:
                walk(x)
        elif isinstance(v, bool) or v is None:
            return
        elif isinstance(v, int):
            allowed.add(str(v))
        elif isinstance(v, float):
            allowed.add(str(v))
            for nd in range(4):
                allowed.add(f"{v:.{nd}f}")

    walk(metrics)
    return allowed


def check_report(text: str, metrics: dict | None, out_dir) -> list[str]:
    """Numbers not traceable to metrics.json and referenced files that do not exist."""
    problems = []
    allowed = _allowed(metrics) if metrics is not None else set()
    out_dir = Path(out_dir)
    for path in re.findall(r"`([^`]+\.(?:vtk|json|md|log|png|svg|stl|epw))`", text):
        if not (out_dir / path).exists():
            problems.append(f"missing file: {path}")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if line.startswith(">") or line.startswith("#"):
            continue
        stripped = re.sub(r"`[^`]*`", "", line)
        for tok in _NUM.findall(stripped):
            if tok not in allowed:
                problems.append(f"line {lineno}: {tok} not found in metrics")
    return problems
