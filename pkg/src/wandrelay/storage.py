"""Durable state for the delivery service.

Per-recipient queues persist as an append-only event log plus a snapshot, both
in the canonical JSON encoding. Every event is flushed and fsynced when
appended, so a process killed right after acknowledging a submit loses
nothing. ``snapshot()`` (called on graceful shutdown) folds the log into the
snapshot file and truncates it; recovery is snapshot + replay.

Reaction capture buffers are deliberately NOT stored here; only consented,
composed reaction records ever reach disk.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Any, Iterable

from .errors import DataDirUnwritable, ParseError


class MemoryStore:
    """No-op persistence; used by the simulator unless a data dir is given."""

    def record_principal(self, principal: str) -> None:
        pass

    def record_event(self, recipient_id: str, event: dict[str, Any]) -> None:
        pass

    def recover(self) -> tuple[set[str], dict[str, list[dict[str, Any]]]]:
        return set(), {}

    def snapshot(self, states: dict[str, list[dict[str, Any]]]) -> None:
        pass

    def close(self) -> None:
        pass


class FileStore:
    """Append-only log + snapshot per recipient queue under ``data_dir``."""

    def __init__(self, data_dir: str | Path):
        self.root = Path(data_dir)
        try:
            (self.root / "queues").mkdir(parents=True, exist_ok=True)
            probe = self.root / ".writable"
            probe.write_text("ok")
            probe.unlink()
        except OSError as exc:
            raise DataDirUnwritable(f"{self.root}: {exc}") from None

    # -- paths --

    def _principals_path(self) -> Path:
        return self.root / "principals.log"

    def _log_path(self, recipient_id: str) -> Path:
        return self.root / "queues" / f"{recipient_id}.log"

    def _snap_path(self, recipient_id: str) -> Path:
        return self.root / "queues" / f"{recipient_id}.snap.json"

    # -- writes --

    @staticmethod
    def _append_line(path: Path, obj: dict[str, Any]) -> None:
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(obj, separators=(",", ":")) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def record_principal(self, principal: str) -> None:
        self._append_line(self._principals_path(), {"principal": principal})

    def record_event(self, recipient_id: str, event: dict[str, Any]) -> None:
        self._append_line(self._log_path(recipient_id), event)

    def snapshot(self, states: dict[str, list[dict[str, Any]]]) -> None:
        """Write each recipient's folded event list and truncate its log."""
        for recipient_id, events in states.items():
            snap = self._snap_path(recipient_id)
            tmp = snap.with_suffix(".tmp")
            tmp.write_text(json.dumps({"v": 1, "events": events}, separators=(",", ":")))
            tmp.replace(snap)
            log = self._log_path(recipient_id)
            if log.exists():
                log.unlink()

    def close(self) -> None:
        pass

    # -- recovery --

    @staticmethod
    def _read_lines(path: Path) -> Iterable[dict[str, Any]]:
        if not path.exists():
            return
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    yield json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ParseError(f"{path}:{lineno}: {exc}") from None

    def recover(self) -> tuple[set[str], dict[str, list[dict[str, Any]]]]:
        """Return (principals, per-recipient ordered event lists)."""
        principals = {entry["principal"] for entry in self._read_lines(self._principals_path())}
        states: dict[str, list[dict[str, Any]]] = {}
        queues_dir = self.root / "queues"
        for snap in sorted(queues_dir.glob("*.snap.json")):
            recipient_id = snap.name[: -len(".snap.json")]
            states[recipient_id] = json.loads(snap.read_text())["events"]
        for log in sorted(queues_dir.glob("*.log")):
            recipient_id = log.stem
            states.setdefault(recipient_id, []).extend(self._read_lines(log))
        return principals, states
