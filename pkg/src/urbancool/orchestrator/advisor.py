"""Pluggable advisors.

An advisor turns a structured request into a JSON reply for one of three
stages (intent, materials, report).  Replies are schema-checked; an invalid
reply is retried once and then replaced by the deterministic advisor.  The
advisor only ever proposes: its parameters enter the merge at advisor level
and its material values pass the same validation as any other delta.
"""
from __future__ import annotations

import json
import logging
import os
import re
import time
from typing import Protocol

import jsonschema

from .recorder import InteractionRecorder
from .state import ANALYSES

logger = logging.getLogger(__name__)

MONTHS = ("january", "february", "march", "april", "may", "june", "july", "august", "september",
          "october", "november", "december")

# representative days: season keyword -> (audit day, mitigation day)
SEASON_TABLE = {
    "inter-monsoon": ((4, 20), (4, 15)),
    "intermonsoon": ((4, 20), (4, 15)),
    "northeast monsoon": ((1, 15), (1, 15)),
    "southwest monsoon": ((7, 15), (7, 15)),
}

KEYWORDS = {
    "comfort": ("comfort", "pet", "hotspot", "heat stress", "thermal", "pedestrian"),
    "energy": ("energy", "cooling", "inefficient", "eui", "load"),
    "mitigation": ("material", "albedo", "emissivity", "mitigat", "retrofit", "intervention"),
    "wind": ("wind", "cfd", "airflow", "ventilation"),
    "radiation": ("solar", "radiation", "sun", "shade", "mrt"),
}

INTENT_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["analyses", "parameters", "timestamp", "rationale"],
    "properties": {
        "analyses": {"type": "array", "items": {"enum": list(ANALYSES)}, "uniqueItems": True},
        "parameters": {"type": "object"},
        "timestamp": {"oneOf": [
            {"type": "null"},
            {"type": "object", "additionalProperties": False, "required": ["month", "day"],
             "properties": {"month": {"type": "integer", "minimum": 1, "maximum": 12},
                            "day": {"type": "integer", "minimum": 1, "maximum": 31}}},
        ]},
        "rationale": {"type": "string"},
    },
}

MATERIALS_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["roof_albedo", "wall_albedo", "ground_albedo", "rationale"],
    "properties": {
        "roof_albedo": {"type": "number"},
        "wall_albedo": {"type": "number"},
        "ground_albedo": {"type": "number"},
        "rationale": {"type": "string"},
    },
}

REPORT_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["recommendations"],
    "properties": {
        "recommendations": {"type": "array", "items": {
            "type": "object", "additionalProperties": False, "required": ["category", "text"],
            "properties": {"category": {"enum": ["materials", "shading", "ventilation"]},
                           "text": {"type": "string"}}}},
    },
}

SCHEMAS = {"intent": INTENT_SCHEMA, "materials": MATERIALS_SCHEMA, "report": REPORT_SCHEMA}

INSTRUCTIONS = {
    "intent": ("You plan an urban microclimate study. From the user query decide which analyses are needed "
               "(wind, radiation, comfort, energy, mitigation), an optional representative day, and optional "
               "parameter suggestions keyed by dotted parameter path. Free text only in 'rationale'."),
    "materials": ("Propose target albedos for roofs, walls and ground of the listed buildings. Emissivity is "
                  "held fixed. Values must lie in [0, 1]."),
    "report": ("Suggest design recommendations grouped as materials, shading or ventilation, based on the "
               "hotspot causes and energy outliers given. Do not quote numbers."),
}


class AdvisorError(RuntimeError):
    pass


class Advisor(Protocol):
    name: str

    def respond(self, stage: str, request: dict, prompt: str) -> str: ...


def render_prompt(stage: str, request: dict) -> str:
    return (f"{INSTRUCTIONS[stage]}\n\nREQUEST:\n{json.dumps(request, sort_keys=True, indent=2)}\n\n"
            f"Reply with one JSON object matching this schema:\n{json.dumps(SCHEMAS[stage], sort_keys=True)}")


def _find_date(text: str):
    m = re.search(r"\b(" + "|".join(MONTHS) + r")\s+(\d{1,2})\b", text)
    if m:
        return MONTHS.index(m.group(1)) + 1, int(m.group(2))
    m = re.search(r"\b(\d{1,2})\s+(" + "|".join(MONTHS) + r")\b", text)
    if m:
        return MONTHS.index(m.group(2)) + 1, int(m.group(1))
    return None


class DeterministicAdvisor:
    """Keyword and table rules; replies are pure functions of the request."""

    name = "deterministic"

    def respond(self, stage: str, request: dict, prompt: str = "") -> str:
        handler = getattr(self, f"_{stage}", None)
        if handler is None:
            raise AdvisorError(f"unknown advisor stage {stage!r}")
        return json.dumps(handler(request), sort_keys=True)

    @staticmethod
    def _intent(request: dict) -> dict:
        q = request["query"].lower()
        words = set(re.findall(r"[a-z0-9-]+", q))
        flags = set()
        for name, keys in KEYWORDS.items():
            for k in keys:
                if (k in q) if " " in k else any(w.startswith(k) for w in words):
                    flags.add(name)
        if flags & {"comfort"}:
            flags |= {"wind", "radiation"}
        if flags & {"energy"}:
            flags |= {"radiation"}
        mitigation = "mitigation" in flags or request.get("mode") == "mitigation"
        timestamp, why = None, []
        date = _find_date(q)
        if date:
            timestamp = {"month": date[0], "day": date[1]}
            why.append("explicit date in query")
        else:
            for season, (audit, mitig) in SEASON_TABLE.items():
                if season in q:
                    m, d = mitig if mitigation else audit
                    timestamp = {"month": m, "day": d}
                    why.append(f"representative day for '{season}'")
                    break
        if flags:
            why.insert(0, "keyword rules matched: " + ", ".join(sorted(flags)))
        return {"analyses": sorted(flags), "parameters": {}, "timestamp": timestamp,
                "rationale": "; ".join(why) or "no keywords matched"}

    @staticmethod
    def _materials(request: dict) -> dict:
        t = request["defaults"]
        return {"roof_albedo": t["roof"], "wall_albedo": t["wall"], "ground_albedo": t["ground"],
                "rationale": "configured high-reflectance targets; emissivity unchanged"}

    @staticmethod
    def _report(request: dict) -> dict:
        causes = set(request.get("hotspot_causes", []))
        recs = []
        if request.get("outliers") or "reflected gain" in causes or request.get("mitigated"):
            recs.append({"category": "materials",
                         "text": "Favour high-albedo roofs on the flagged buildings; they cut envelope gains "
                                 "without adding reflected load at street level."})
        if request.get("albedo_penalty") or "reflected gain" in causes:
            recs.append({"category": "materials",
                         "text": "Avoid bright ground and lower wall finishes where pedestrians gather; "
                                 "reflected shortwave raises radiant load there."})
        if "high svf" in causes or request.get("sunlit_hotspots"):
            recs.append({"category": "shading",
                         "text": "Add canopies or tree cover over sun-exposed hotspots to cut direct and "
                                 "reflected radiation at pedestrian height."})
        if "low wind" in causes:
            recs.append({"category": "ventilation",
                         "text": "Open breezeways or setbacks aligned with the prevailing wind to relieve "
                                 "stagnant pockets."})
        if not recs:
            recs.append({"category": "shading", "text": "No dominant cause detected; prioritise shading of "
                                                        "the highest-PET locations."})
        return {"recommendations": recs}


class RemoteAdvisor:
    """Chat-completion style HTTP client; credentials only from the environment."""

    name = "remote"

    def __init__(self, endpoint: str | None = None, model: str | None = None, timeout: float | None = None,
                 api_key: str | None = None, session=None):
        self.endpoint = endpoint or os.environ.get("URBANCOOL_ADVISOR_URL", "https://api.openai.com/v1/chat/completions")
        self.model = model or os.environ.get("URBANCOOL_ADVISOR_MODEL", "gpt-4o-mini")
        self.timeout = timeout or float(os.environ.get("URBANCOOL_ADVISOR_TIMEOUT", "60"))
        self.api_key = api_key if api_key is not None else os.environ.get("URBANCOOL_ADVISOR_KEY", "")
        self.session = session

    def respond(self, stage: str, request: dict, prompt: str) -> str:
        if self.session is None:
            import requests
            self.session = requests.Session()
        body = {"model": self.model, "temperature": 0,
                "response_format": {"type": "json_object"},
                "messages": [{"role": "system", "content": "Reply with JSON only."},
                             {"role": "user", "content": prompt}]}
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        resp = self.session.post(self.endpoint, json=body, headers=headers, timeout=self.timeout)
        resp.raise_for_status()
        return resp.json()["choices"][0]["message"]["content"]


def parse_reply(stage: str, text: str) -> dict:
    data = json.loads(text)
    jsonschema.validate(data, SCHEMAS[stage])
    return data


class Consultant:
    """Calls the advisor, records every exchange, retries once, then falls back."""

    def __init__(self, advisor: Advisor | None, recorder: InteractionRecorder | None):
        self.advisor = advisor
        self.recorder = recorder
        self.fallback = DeterministicAdvisor()
        self.calls = 0
        self.warnings: list[str] = []

    def _call(self, advisor, stage, request, prompt):
        t0 = time.perf_counter()
        try:
            text = advisor.respond(stage, request, prompt)
        except Exception as exc:  # transport errors count as invalid replies
            text = f"<error: {exc}>"
        latency = (time.perf_counter() - t0) * 1000.0
        self.calls += 1
        if self.recorder is not None:
            self.recorder.record(stage if advisor is self.advisor else f"{stage}:fallback", prompt, text, latency)
        return text

    def ask(self, stage: str, request: dict) -> dict:
        if self.advisor is None:
            return json.loads(self.fallback.respond(stage, request))
        prompt = render_prompt(stage, request)
        for attempt in (1, 2):
            text = self._call(self.advisor, stage, request, prompt)
            try:
                return parse_reply(stage, text)
            except (ValueError, jsonschema.ValidationError) as exc:
                msg = f"{stage}: advisor reply rejected (attempt {attempt}): {str(exc).splitlines()[0]}"
                logger.warning(msg)
                self.warnings.append(msg)
            if isinstance(self.advisor, DeterministicAdvisor):
                break
        msg = f"{stage}: falling back to the deterministic advisor"
        logger.warning(msg)
        self.warnings.append(msg)
        return parse_reply(stage, self._call(self.fallback, stage, request, prompt))


def make_advisor(mode: str) -> Advisor | None:
    if mode == "deterministic":
        return DeterministicAdvisor()
    if mode == "remote":
        return RemoteAdvisor()
    if mode == "none":
        return None
    raise ValueError(f"unknown advisor mode {mode!r}")
