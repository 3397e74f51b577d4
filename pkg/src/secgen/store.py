"""Durable keyed persistence for benchmark runs and generation traces.

The backend is an append-only JSON-lines file per record kind under a single
directory: desk-scale durability with zero external services. Reads refresh
from disk incrementally, so records appended by another process (e.g. a CLI
benchmark run next to a running service) become visible. The on-disk layout
is private; the public contract is put/get, latest_ranking, and the
JSON-lines export.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Any, Iterator

from .errors import DuplicateKey, NotFound, StorageUnavailable
from .model import format_timestamp, parse_timestamp

__all__ = ["RecordKind", "StoredRecord", "RecordStore"]


class RecordKind(Enum):
    BENCHMARK_RUN = "benchmark_run"
    GENERATION_TRACE = "generation_trace"


@dataclass(frozen=True)
class StoredRecord:
    """One durable record; payload is a JSON-serializable document."""

    key: str
    kind: RecordKind
    created_at: datetime
    payload: dict[str, Any]

    def __post_init__(self) -> None:
        if not self.key.strip():
            raise ValueError("record key must be non-empty")


class RecordStore:
    """Append-oriented record store over a local directory.

    Writers serialize on an internal lock and fsync each append. The reader
    index only ever consumes whole lines, so a torn trailing write is skipped
    rather than corrupting the store; the next append re-terminates it.
    """

    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)
        self._lock = threading.Lock()
        self._records: dict[tuple[RecordKind, str], StoredRecord] = {}
        self._offsets: dict[RecordKind, int] = {}
        try:
            self.root.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise StorageUnavailable(
                f"cannot create store directory {self.root}: {exc}"
            ) from None
        with self._lock:
            self._refresh_locked()

    def _file_for(self, kind: RecordKind) -> Path:
        return self.root / f"{kind.value}.jsonl"

    def _refresh_locked(self) -> None:
        """Index every complete line appended since the last refresh."""
        for kind in RecordKind:
            path = self._file_for(kind)
            offset = self._offsets.get(kind, 0)
            try:
                size = path.stat().st_size
            except FileNotFoundError:
                continue
            except OSError as exc:
                raise StorageUnavailable(f"cannot stat {path}: {exc}") from None
            if size <= offset:
                continue
            try:
                with open(path, "rb") as handle:
                    handle.seek(offset)
                    chunk = handle.read(size - offset)
            except OSError as exc:
                raise StorageUnavailable(f"cannot read {path}: {exc}") from None
            end = chunk.rfind(b"\n")
            if end < 0:
                continue  # only a torn tail so far
            consumed = chunk[: end + 1]
            self._offsets[kind] = offset + len(consumed)
            for line in consumed.decode("utf-8", errors="replace").splitlines():
                if not line.strip():
                    continue
                try:
                    record = self._decode_line(line)
                except (ValueError, KeyError):
                    continue  # a previously torn line; whole records are intact
                self._records[(record.kind, record.key)] = record

    @staticmethod
    def _decode_line(line: str) -> StoredRecord:
        data = json.loads(line)
        return StoredRecord(
            key=str(data["key"]),
            kind=RecordKind(data["kind"]),
            created_at=parse_timestamp(data["created_at"]),
            payload=data["payload"],
        )

    @staticmethod
    def _encode(record: StoredRecord) -> str:
        return json.dumps(
            {
                "key": record.key,
                "kind": record.kind.value,
                "created_at": format_timestamp(record.created_at),
                "payload": record.payload,
            },
            separators=(",", ":"),
        )

    def put_record(self, record: StoredRecord) -> str:
        """Append the record durably; overwriting an existing key is an error."""
        with self._lock:
            self._refresh_locked()
            index_key = (record.kind, record.key)
            if index_key in self._records:
                raise DuplicateKey(
                    f"{record.kind.value} record {record.key!r} already exists"
                )
            data = (self._encode(record) + "\n").encode()
            path = self._file_for(record.kind)
            offset = self._offsets.get(record.kind, 0)
            try:
                with open(path, "ab") as handle:
                    size = handle.tell()
                    if size > offset:
                        # terminate a torn tail so our line parses on reload
                        handle.write(b"\n")
                        size += 1
                    handle.write(data)
                    handle.flush()
                    os.fsync(handle.fileno())
            except OSError as exc:
                raise StorageUnavailable(f"cannot append to {path}: {exc}") from None
            self._offsets[record.kind] = size + len(data)
            self._records[index_key] = record
            return record.key

    def get_record(self, kind: RecordKind, key: str) -> StoredRecord:
        with self._lock:
            self._refresh_locked()
            try:
                return self._records[(kind, key)]
            except KeyError:
                raise NotFound(f"no {kind.value} record with key {key!r}") from None

    def records(self, kind: RecordKind | None = None) -> list[StoredRecord]:
        """All records (optionally one kind), ordered by (created_at, key)."""
        with self._lock:
            self._refresh_locked()
            selected = [
                record
                for record in self._records.values()
                if kind is None or record.kind is kind
            ]
        selected.sort(key=lambda r: (r.created_at, r.key))
        return selected

    def latest_ranking(self):
        """Decode the most recent benchmark run, or None when none exists.

        Recency is greatest created_at; ties break toward the lexicographically
        greater key so the choice is deterministic.
        """
        from .benchmark_agent import Ranking, ranking_from_json  # avoids an import cycle

        runs = self.records(RecordKind.BENCHMARK_RUN)
        if not runs:
            return None
        latest = max(runs, key=lambda r: (r.created_at, r.key))
        ranking: Ranking = ranking_from_json(latest.payload)
        return ranking

    def export_lines(self) -> Iterator[str]:
        """Every record as one JSON line, ordered by (created_at, key)."""
        for record in self.records():
            yield self._encode(record)
