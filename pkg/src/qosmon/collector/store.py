"""Durable record storage: append-only log with idempotent ingestion.

Records are deduplicated by (agent_id, battery_id, probe_kind, target,
timestamp), so agents can retry uploads without coordination.  Analysis
operations read immutable snapshots, never the live tail.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from ..records import RecordParseError, TransferSample, parse_record


@dataclass(frozen=True)
class IngestReceipt:
    accepted: int
    duplicates: int
    rejected: tuple[tuple[int, str], ...]  # (1-based line number, reason)


@dataclass
class RttRecord:
    """Stored echo-series summary used as secondary latency evidence."""

    agent_id: str
    target: str
    backend: str
    rtts_ms: tuple[float, ...]
    lost: int


class RecordStore:
    """Append-only transfer-record log plus an in-memory dedup index.

    ``path`` may be None for an ephemeral in-memory store.
    """

    def __init__(self, path: str | os.PathLike | None = None):
        self._path = Path(path) if path is not None else None
        self._records: list[TransferSample] = []
        self._keys: set[tuple] = set()
        self._rtt: list[RttRecord] = []
        if self._path is not None and self._path.exists():
            self._load()

    def _load(self) -> None:
        with open(self._path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                try:
                    sample = parse_record(line)
                except RecordParseError:
                    continue  # quarantined corrupt line
                if sample.dedup_key not in self._keys:
                    self._keys.add(sample.dedup_key)
                    self._records.append(sample)

    def ingest_batch(self, lines: list[str]) -> IngestReceipt:
        """Parse and store each line; malformed lines are rejected
        individually, never the whole batch.  Storage is flushed to disk
        before the receipt is returned."""
        accepted: list[tuple[TransferSample, str]] = []
        duplicates = 0
        rejected: list[tuple[int, str]] = []
        for i, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            try:
                sample = parse_record(line)
            except RecordParseError as exc:
                rejected.append((i, str(exc)))
                continue
            if sample.dedup_key in self._keys:
                duplicates += 1
                continue
            self._keys.add(sample.dedup_key)
            accepted.append((sample, line))
        if accepted and self._path is not None:
            with open(self._path, "a", encoding="utf-8") as fh:
                for _, line in accepted:
                    fh.write(line.rstrip("\n") + "\n")
                fh.flush()
                os.fsync(fh.fileno())
        self._records.extend(sample for sample, _ in accepted)
        return IngestReceipt(accepted=len(accepted), duplicates=duplicates,
                             rejected=tuple(rejected))

    def ingest_rtt(self, record: RttRecord) -> None:
        self._rtt.append(record)

    def snapshot(self) -> list[TransferSample]:
        return list(self._records)

    def rtt_snapshot(self) -> list[RttRecord]:
        return list(self._rtt)

    def __len__(self) -> int:
        return len(self._records)


def parse_rtt_line(line: str) -> RttRecord:
    try:
        doc = json.loads(line)
        return RttRecord(
            agent_id=str(doc["agent_id"]),
            target=str(doc["target"]),
            backend=str(doc["backend"]),
            rtts_ms=tuple(float(v) for v in doc["rtts_ms"]),
            lost=int(doc["lost"]),
        )
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise RecordParseError(f"bad rtt record: {exc}") from None
