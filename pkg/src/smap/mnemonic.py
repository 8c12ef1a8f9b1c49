"""Persistent memo of past scenario assignments, keyed by a canonical fingerprint.

A cached assignment is only valid at the registry revision it was stored
under; any registry mutation invalidates it (reported as a stale miss).
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterator

from .registry import Scenario

FIELD_SEPARATOR = "\x1f"

_ENTRY_FIELDS = ("scenario_key", "dataset_id", "model_id", "score", "registry_revision", "stored_at")


class CacheLoadError(ValueError):
    """The cache file is unreadable; ``byte_offset`` points at the first bad record."""

    def __init__(self, message: str, byte_offset: int):
        super().__init__(f"{message} (byte offset {byte_offset})")
        self.byte_offset = byte_offset


def canonical_scenario(scenario: Scenario) -> str:
    """Canonical serialization: type, then constraint pairs sorted by key.

    Values are whitespace-trimmed and the scenario id is excluded, so two
    scenarios with equal semantics serialize identically.
    """
    parts = [scenario.scenario_type]
    for key in sorted(scenario.constraints):
        parts.append(key)
        parts.append(scenario.constraints[key].strip())
    return FIELD_SEPARATOR.join(parts)


def scenario_key(scenario: Scenario) -> str:
    return hashlib.sha256(canonical_scenario(scenario).encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class MnemonicEntry:
    scenario_key: str
    dataset_id: str
    model_id: str
    score: float
    registry_revision: int
    stored_at: str

    @classmethod
    def create(
        cls,
        scenario_key: str,
        dataset_id: str,
        model_id: str,
        score: float,
        registry_revision: int,
        stored_at: str | None = None,
    ) -> "MnemonicEntry":
        if stored_at is None:
            stored_at = datetime.now(timezone.utc).isoformat()
        return cls(scenario_key, dataset_id, model_id, float(score), registry_revision, stored_at)


@dataclass(frozen=True)
class LookupResult:
    status: str  # "hit", "miss", or "stale-miss"
    entry: MnemonicEntry | None = None

    @property
    def hit(self) -> bool:
        return self.status == "hit"


@dataclass
class MnemonicCenter:
    """In-memory view of the memo; single-writer, many-reader."""

    entries: dict[str, MnemonicEntry] = field(default_factory=dict)

    def lookup(self, key: str, current_revision: int) -> LookupResult:
        entry = self.entries.get(key)
        if entry is None:
            return LookupResult("miss")
        if entry.registry_revision != current_revision:
            return LookupResult("stale-miss", entry)
        return LookupResult("hit", entry)

    def store(self, entry: MnemonicEntry) -> "MnemonicCenter":
        """Upsert by scenario key; the latest entry wins."""
        self.entries[entry.scenario_key] = entry
        return self

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[MnemonicEntry]:
        return iter(self.entries.values())


def _entry_to_line(entry: MnemonicEntry) -> str:
    payload = {name: getattr(entry, name) for name in _ENTRY_FIELDS}
    return json.dumps(payload, ensure_ascii=False)


def persist(center: MnemonicCenter, path: str | os.PathLike) -> None:
    """Write one JSON line per entry, atomically (write temp, then rename)."""
    directory = os.path.dirname(os.fspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            for entry in center.entries.values():
                fh.write(_entry_to_line(entry) + "\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load(path: str | os.PathLike) -> MnemonicCenter:
    """Read a cache file; a missing file yields an empty center."""
    center = MnemonicCenter()
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except FileNotFoundError:
        return center
    offset = 0
    for raw_line in blob.split(b"\n"):
        if raw_line.strip():
            try:
                payload = json.loads(raw_line.decode("utf-8"))
                entry = MnemonicEntry(
                    scenario_key=payload["scenario_key"],
                    dataset_id=payload["dataset_id"],
                    model_id=payload["model_id"],
                    score=float(payload["score"]),
                    registry_revision=int(payload["registry_revision"]),
                    stored_at=str(payload["stored_at"]),
                )
            except (ValueError, KeyError, TypeError, UnicodeDecodeError) as exc:
                raise CacheLoadError(f"malformed cache record in {os.fspath(path)!r}: {exc}", byte_offset=offset) from exc
            center.store(entry)
        offset += len(raw_line) + 1
    return center
