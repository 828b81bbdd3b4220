"""Call journal: a JSONL record of every backend call in a run.

Each success row holds {ts, role_tag, prompt_hash, reply, attempts,
latency_ms}; failure rows carry reply null plus an error string. Because
prompt hashes use the same FNV-1a keys the scripted backend accepts, any
journal can be turned back into a scripted backend and the run replayed
without touching the original service.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable

from .backends import ScriptedBackend

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class JournalEntry:
    ts: float
    role_tag: str
    prompt_hash: str
    reply: str | None
    attempts: int
    latency_ms: float
    error: str | None = None


class CallJournal:
    """Appends call records to a JSONL file (or keeps them in memory only)."""

    def __init__(self, path: str | Path | None = None) -> None:
        self.path = Path(path) if path is not None else None
        self.entries: list[JournalEntry] = []
        self._handle: IO[str] | None = None

    def _write(self, entry: JournalEntry) -> None:
        self.entries.append(entry)
        if self.path is None:
            return
        if self._handle is None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._handle = open(self.path, "a", encoding="utf-8")
        record = {
            "ts": entry.ts,
            "role_tag": entry.role_tag,
            "prompt_hash": entry.prompt_hash,
            "reply": entry.reply,
            "attempts": entry.attempts,
            "latency_ms": entry.latency_ms,
        }
        if entry.error is not None:
            record["error"] = entry.error
        self._handle.write(json.dumps(record, sort_keys=True) + "\n")
        self._handle.flush()

    def record(
        self, role_tag: str, prompt_hash: str, reply: str, attempts: int, latency_ms: float
    ) -> None:
        self._write(
            JournalEntry(time.time(), role_tag, prompt_hash, reply, attempts, latency_ms)
        )

    def record_failure(
        self, role_tag: str, prompt_hash: str, attempts: int, latency_ms: float, error: str
    ) -> None:
        self._write(
            JournalEntry(
                time.time(), role_tag, prompt_hash, None, attempts, latency_ms, error
            )
        )

    def close(self) -> None:
        if self._handle is not None:
            self._handle.close()
            self._handle = None

    def __enter__(self) -> CallJournal:
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.close()


def read_journal(path: str | Path) -> list[JournalEntry]:
    entries = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        raw = json.loads(line)
        entries.append(
            JournalEntry(
                ts=raw["ts"],
                role_tag=raw["role_tag"],
                prompt_hash=raw["prompt_hash"],
                reply=raw["reply"],
                attempts=raw["attempts"],
                latency_ms=raw["latency_ms"],
                error=raw.get("error"),
            )
        )
    return entries


def scripted_from_journal(
    source: str | Path | Iterable[JournalEntry], *, default: str | None = None
) -> ScriptedBackend:
    """Build a scripted backend whose script is a journal's prompt->reply map.

    Failure rows are skipped. If one prompt hash appears with two different
    replies (possible when the original backend was not deterministic), the
    earliest reply wins and the conflict is logged.
    """
    entries = read_journal(source) if isinstance(source, (str, Path)) else source
    script: dict[str, str] = {}
    for entry in entries:
        if entry.reply is None:
            continue
        key = "h:" + entry.prompt_hash
        if key in script:
            if script[key] != entry.reply:
                logger.warning(
                    "journal holds conflicting replies for %s; keeping the first", key
                )
            continue
        script[key] = entry.reply
    return ScriptedBackend(script, default=default)
