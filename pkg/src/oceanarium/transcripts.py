"""Append-only JSONL transcript persistence with deterministic replay support.

One record per pipeline run, one JSON object per line, so appends are
crash-safe. Replay comparisons use a canonical byte form that drops wall-clock
measurements (stage timings) but keeps every pipeline output.
"""

from __future__ import annotations

import json
from pathlib import Path

# measurement fields excluded from determinism comparisons
_MEASUREMENT_KEYS = {"timings"}


def canonical_bytes(record: dict) -> bytes:
    """Stable byte serialization of a pipeline record, without measurements."""
    trimmed = {k: v for k, v in record.items() if k not in _MEASUREMENT_KEYS}
    return json.dumps(trimmed, sort_keys=True, ensure_ascii=False, separators=(",", ":")).encode(
        "utf-8"
    )


class TranscriptStore:
    """Per-session JSONL logs under one directory."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def _path(self, session_id: str) -> Path:
        safe = "".join(c if c.isalnum() or c in "-_." else "_" for c in session_id)
        return self.directory / f"{safe}.jsonl"

    def append(self, session_id: str, record: dict) -> None:
        line = json.dumps(record, ensure_ascii=False, sort_keys=True)
        with open(self._path(session_id), "a", encoding="utf-8") as fh:
            fh.write(line + "\n")

    def read(self, session_id: str) -> list[dict]:
        path = self._path(session_id)
        if not path.exists():
            return []
        return read_transcript(path)


def read_transcript(path: str | Path) -> list[dict]:
    records = []
    for i, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines()):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: line {i + 1} is not valid JSON: {exc}") from exc
    return records


def diff_records(recorded: dict, replayed: dict) -> list[str]:
    """Human-readable field-level differences between two canonical records."""
    a = json.loads(canonical_bytes(recorded))
    b = json.loads(canonical_bytes(replayed))
    differences = []
    for key in sorted(set(a) | set(b)):
        if a.get(key) != b.get(key):
            differences.append(f"{key}: recorded={a.get(key)!r} replayed={b.get(key)!r}")
    return differences
