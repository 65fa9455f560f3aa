"""Durable log of every advisor exchange (JSON array plus a readable text log)."""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path


@dataclass(frozen=True)
class InteractionRecord:
    stage: str
    prompt: str
    response: str
    latency_ms: float
    timestamp: str


class InteractionRecorder:
    """Appends records and fsyncs both files before returning."""

    def __init__(self, directory, json_name: str = "llm_interactions.json",
                 log_name: str = "llm_interactions.log"):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.json_path = self.directory / json_name
        self.log_path = self.directory / log_name
        self.records: list[InteractionRecord] = []
        self._write_json()
        self._sync_write(self.log_path, "", "w")

    def __len__(self):
        return len(self.records)

    @staticmethod
    def _sync_write(path: Path, text: str, mode: str) -> None:
        with open(path, mode, encoding="utf-8") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())

    def _write_json(self) -> None:
        tmp = self.json_path.with_suffix(".json.tmp")
        self._sync_write(tmp, json.dumps([asdict(r) for r in self.records], indent=2) + "\n", "w")
        os.replace(tmp, self.json_path)

    def record(self, stage: str, prompt: str, response: str, latency_ms: float) -> InteractionRecord:
        rec = InteractionRecord(stage, prompt, response, round(float(latency_ms), 3),
                                datetime.now(timezone.utc).isoformat(timespec="milliseconds"))
        self.records.append(rec)
        self._write_json()
        block = (f"=== [{len(self.records)}] stage={stage} latency_ms={rec.latency_ms} at {rec.timestamp}\n"
                 f"--- prompt\n{prompt}\n--- response\n{response}\n\n")
        self._sync_write(self.log_path, block, "a")
        return rec


def record_interaction(recorder: InteractionRecorder, stage: str, prompt: str, response: str,
                       latency_ms: float) -> InteractionRecord:
    return recorder.record(stage, prompt, response, latency_ms)
