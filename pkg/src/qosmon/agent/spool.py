"""Append-only record spool with acknowledged-line tracking.

Records are spooled to disk before any upload attempt, one JSON record per
line, so a crash at any point loses at most the in-flight line.  A sidecar
state file records how many leading lines the collector has acknowledged.
Single-writer semantics: one agent process owns a spool.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

from ..records import RecordParseError, TransferSample, parse_record, serialize_record


class Spool:
    def __init__(self, path: str | os.PathLike):
        self._path = Path(path)
        self._state_path = self._path.with_suffix(self._path.suffix + ".state")
        self._path.parent.mkdir(parents=True, exist_ok=True)
        self._path.touch(exist_ok=True)

    @property
    def acked(self) -> int:
        try:
            return int(json.loads(self._state_path.read_text())["acked"])
        except (OSError, ValueError, KeyError, json.JSONDecodeError):
            return 0

    def _write_acked(self, n: int) -> None:
        tmp = self._state_path.with_suffix(".tmp")
        tmp.write_text(json.dumps({"acked": n}))
        tmp.replace(self._state_path)

    def append(self, records: list[TransferSample]) -> None:
        with open(self._path, "a", encoding="utf-8") as fh:
            for record in records:
                fh.write(serialize_record(record) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def pending(self) -> list[str]:
        """Unacknowledged record lines, in spool order.

        Corrupt lines are quarantined (skipped and reported via
        ``quarantined``); the rest proceed.
        """
        self.quarantined = 0
        lines = self._all_lines()
        out = []
        for line in lines[self.acked:]:
            try:
                parse_record(line)
            except RecordParseError:
                self.quarantined += 1
                continue
            out.append(line)
        return out

    def _all_lines(self) -> list[str]:
        with open(self._path, encoding="utf-8") as fh:
            return [line.rstrip("\n") for line in fh if line.strip()]

    def mark_acked(self, count: int) -> None:
        """Advance the acknowledged-line cursor past ``count`` pending lines
        (quarantined lines in that range are skipped over as well)."""
        lines = self._all_lines()
        position = self.acked
        remaining = count
        while remaining > 0 and position < len(lines):
            try:
                parse_record(lines[position])
                remaining -= 1
            except RecordParseError:
                pass
            position += 1
        # Also skip any trailing quarantined lines already passed over.
        while position < len(lines):
            try:
                parse_record(lines[position])
                break
            except RecordParseError:
                position += 1
        self._write_acked(position)

    def pending_count(self) -> int:
        return len(self.pending())
