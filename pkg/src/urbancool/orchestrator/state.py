"""State threaded through the pipeline stages."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

ANALYSES = ("wind", "radiation", "comfort", "energy", "mitigation")
STAGES = ("intent", "geometry", "params", "solve", "mitigate", "report")


class PipelineError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.message = message


@dataclass(frozen=True)
class IntentPlan:
    analyses: frozenset
    parameters: dict = field(default_factory=dict)
    month: int | None = None
    day: int | None = None
    rationale: str = ""

    def __post_init__(self):
        bad = set(self.analyses) - set(ANALYSES)
        if bad:
            raise ValueError(f"unknown analyses: {sorted(bad)}")
        if not self.analyses:
            raise ValueError("no analysis derivable from the query")
        if "mitigation" in self.analyses and not {"comfort", "energy"} <= set(self.analyses):
            object.__setattr__(self, "analyses", frozenset(self.analyses | {"comfort", "energy"}))

    def wants(self, name: str) -> bool:
        return name in self.analyses

    def to_json(self) -> dict:
        return {"analyses": sorted(self.analyses), "parameters": dict(sorted(self.parameters.items())),
                "timestamp": None if self.month is None else {"month": self.month, "day": self.day},
                "rationale": self.rationale}


@dataclass
class PipelineConfig:
    query: str
    geometry_dir: Path | None = None
    climate_path: Path | None = None
    out_dir: Path = Path("run")
    defaults_path: Path | None = None
    overrides_path: Path | None = None
    delta_path: Path | None = None
    seed: int | None = None
    rounds: int = 1
    force_mitigation: bool = False
    domain_bbox: tuple | None = None
    write_fields: bool = True


@dataclass
class StageManifest:
    stage: str
    files: list[str] = field(default_factory=list)
    summary: dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"stage": self.stage, "files": sorted(self.files), "summary": self.summary}


@dataclass
class PipelineState:
    config: PipelineConfig
    plan: IntentPlan | None = None
    month: int | None = None
    day: int | None = None
    buildings: Any = None
    params: Any = None
    baseline: Any = None
    mitigated: list = field(default_factory=list)
    plans: list = field(default_factory=list)
    deltas: list = field(default_factory=list)
    manifests: dict[str, StageManifest] = field(default_factory=dict)
    completed: list[str] = field(default_factory=list)
    error: PipelineError | None = None
    advisor_calls: int = 0

    @property
    def out_dir(self) -> Path:
        return Path(self.config.out_dir)

    def manifest(self, stage: str) -> StageManifest:
        return self.manifests.setdefault(stage, StageManifest(stage))

    def add_file(self, stage: str, path) -> str:
        rel = Path(path).resolve().relative_to(self.out_dir.resolve()).as_posix()
        m = self.manifest(stage)
        if rel not in m.files:
            m.files.append(rel)
        return rel

    @property
    def ok(self) -> bool:
        return self.error is None
