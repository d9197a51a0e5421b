"""Append-only audit store: every perception, action, and message of the
platform lands here, keyed by distribution instance.

Records are held in memory and, when a path is configured, mirrored to a
newline-delimited JSON file (`audit.log.jsonl` schema: seq, ts, agent,
action, distribution_id, case_number, location, payload). The store offers
per-distribution trace views, rule statistics, and deterministic replay
verification of recorded outcomes against their own justifications.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Any, Callable, Iterable

__all__ = [
    "StorageFailure",
    "UnknownDistribution",
    "CorruptJustification",
    "AuditRecord",
    "TraceView",
    "AuditStore",
    "system_clock",
    "TickClock",
    "format_timestamp",
    "replay_outcome",
]


class StorageFailure(RuntimeError):
    """The log could not be written or read; distribution intake must halt."""


class UnknownDistribution(LookupError):
    pass


class CorruptJustification(ValueError):
    """Recorded draw picks do not fit the recorded candidate lists."""


Clock = Callable[[], datetime]


def system_clock() -> datetime:
    return datetime.now(timezone.utc)


class TickClock:
    """Deterministic clock for tests: a fixed start plus a fixed step per call."""

    def __init__(self, start: str = "2016-06-24T10:57:25.723Z", step_ms: int = 1):
        self._current = datetime.strptime(start, "%Y-%m-%dT%H:%M:%S.%f%z")
        self._step = timedelta(milliseconds=step_ms)

    def __call__(self) -> datetime:
        now = self._current
        self._current = now + self._step
        return now


def format_timestamp(dt: datetime) -> str:
    """ISO-8601 UTC with millisecond precision, Z suffix."""
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    dt = dt.astimezone(timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%S.") + f"{dt.microsecond // 1000:03d}Z"


@dataclass(slots=True)
class AuditRecord:
    seq: int
    ts: str
    agent: str
    action: str
    distribution_id: str | None
    case_number: str | None
    location: str
    payload: dict | None

    def to_json_obj(self) -> dict[str, Any]:
        return {
            "seq": self.seq,
            "ts": self.ts,
            "agent": self.agent,
            "action": self.action,
            "distribution_id": self.distribution_id,
            "case_number": self.case_number,
            "location": self.location,
            "payload": self.payload,
        }


@dataclass(frozen=True)
class TraceView:
    """All records of one distribution instance, plus its redistribution links."""

    distribution_id: str
    records: tuple[AuditRecord, ...]
    outcome: dict | None
    predecessor: str | None
    successors: tuple[str, ...]


class AuditStore:
    """Single appender; concurrent producers serialize through one lock.

    Appends are durable (written and flushed) before return when a path is
    configured; any I/O failure raises StorageFailure and poisons the store.
    """

    def __init__(self, path: str | Path | None = None, clock: Clock = system_clock,
                 location: str = "local"):
        self.clock = clock
        self.location = location
        self.records: list[AuditRecord] = []
        self.failed = False
        self._lock = threading.Lock()
        self._positions: dict[str, list[int]] = {}
        self._outcome_pos: dict[str, int] = {}
        self._predecessor: dict[str, str] = {}
        self._successors: dict[str, list[str]] = {}
        self._rule_counts: dict[int, int] = {1: 0, 2: 0, 3: 0, 4: 0}
        self._path = Path(path) if path is not None else None
        self._fh = None
        if self._path is not None:
            try:
                self._path.parent.mkdir(parents=True, exist_ok=True)
                self._fh = self._path.open("a", encoding="utf-8")
            except OSError as e:
                self.failed = True
                raise StorageFailure(f"cannot open audit log {self._path}: {e}") from e

    # -- writing ----------------------------------------------------------

    def append(self, agent: str, action: str, *, distribution_id: str | None = None,
               case_number: str | None = None, payload: dict | None = None) -> int:
        """Append one record, assigning the next sequence number.

        Raises StorageFailure if the store is poisoned or the write fails.
        """
        with self._lock:
            if self.failed:
                raise StorageFailure("audit store is failed; intake halted")
            record = AuditRecord(
                seq=len(self.records) + 1,
                ts=format_timestamp(self.clock()),
                agent=agent,
                action=action,
                distribution_id=distribution_id,
                case_number=case_number,
                location=self.location,
                payload=payload,
            )
            if self._fh is not None:
                try:
                    self._fh.write(json.dumps(record.to_json_obj(), ensure_ascii=False,
                                              separators=(",", ":")))
                    self._fh.write("\n")
                    self._fh.flush()
                except (OSError, ValueError) as e:
                    self.failed = True
                    raise StorageFailure(f"audit append failed: {e}") from e
            self._index(record)
            self.records.append(record)
            return record.seq

    def _index(self, record: AuditRecord) -> None:
        if record.distribution_id is not None:
            self._positions.setdefault(record.distribution_id, []).append(len(self.records))
        if record.action == "record-outcome" and record.payload:
            dist_id = record.payload.get("distribution_id")
            if dist_id:
                self._outcome_pos[dist_id] = len(self.records)
                rule = record.payload.get("rule_number")
                if rule in self._rule_counts:
                    self._rule_counts[rule] += 1
                superseded = (record.payload.get("justification") or {}).get(
                    "superseded_distribution_id"
                )
                if superseded:
                    self._predecessor[dist_id] = superseded
                    self._successors.setdefault(superseded, []).append(dist_id)

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __enter__(self) -> "AuditStore":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- reading ----------------------------------------------------------

    @classmethod
    def load(cls, path: str | Path, clock: Clock = system_clock) -> "AuditStore":
        """Rebuild a store (records plus indexes) from its JSONL file.

        The loaded store stays attached to the file: further appends extend it.
        """
        path = Path(path)
        store = cls.__new__(cls)
        store.clock = clock
        store.location = "local"
        store.records = []
        store.failed = False
        store._lock = threading.Lock()
        store._positions = {}
        store._outcome_pos = {}
        store._predecessor = {}
        store._successors = {}
        store._rule_counts = {1: 0, 2: 0, 3: 0, 4: 0}
        store._path = path
        store._fh = None
        try:
            with path.open("r", encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, start=1):
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        obj = json.loads(line)
                        record = AuditRecord(
                            seq=int(obj["seq"]),
                            ts=str(obj["ts"]),
                            agent=str(obj["agent"]),
                            action=str(obj["action"]),
                            distribution_id=obj.get("distribution_id"),
                            case_number=obj.get("case_number"),
                            location=str(obj.get("location", "local")),
                            payload=obj.get("payload"),
                        )
                    except (KeyError, TypeError, ValueError) as e:
                        raise StorageFailure(f"{path}:{lineno}: malformed audit record: {e}") from e
                    if record.seq != len(store.records) + 1:
                        raise StorageFailure(
                            f"{path}:{lineno}: sequence gap (expected {len(store.records) + 1}, "
                            f"got {record.seq})"
                        )
                    store._index(record)
                    store.records.append(record)
            store._fh = path.open("a", encoding="utf-8")
        except OSError as e:
            raise StorageFailure(f"cannot read audit log {path}: {e}") from e
        return store

    def distribution_ids(self) -> list[str]:
        """Distribution ids in first-seen order."""
        return list(self._positions)

    def outcome_ids(self) -> list[str]:
        """Ids of completed distributions, in completion order."""
        return sorted(self._outcome_pos, key=self._outcome_pos.get)

    def outcome(self, distribution_id: str) -> dict:
        pos = self._outcome_pos.get(distribution_id)
        if pos is None:
            raise UnknownDistribution(distribution_id)
        return self.records[pos].payload

    def trace(self, distribution_id: str) -> TraceView:
        """All and only the records of one distribution, in sequence order."""
        positions = self._positions.get(distribution_id)
        if not positions:
            raise UnknownDistribution(distribution_id)
        records = tuple(self.records[i] for i in positions)
        outcome_pos = self._outcome_pos.get(distribution_id)
        return TraceView(
            distribution_id=distribution_id,
            records=records,
            outcome=self.records[outcome_pos].payload if outcome_pos is not None else None,
            predecessor=self._predecessor.get(distribution_id),
            successors=tuple(self._successors.get(distribution_id, ())),
        )

    def verify_replay(self, distribution_id: str) -> bool:
        """Re-execute the recorded directive over the recorded candidate lists
        and draw picks; True iff it reproduces the recorded outcome."""
        outcome = self.outcome(distribution_id)
        body, magistrate, rule_number = replay_outcome(outcome)
        return (
            body == outcome.get("body")
            and magistrate == outcome.get("magistrate")
            and rule_number == outcome.get("rule_number")
        )

    def verify_all(self) -> tuple[list[str], list[str]]:
        """(ok ids, failed ids) over every recorded outcome; corrupt
        justifications count as failures."""
        ok, failed = [], []
        for dist_id in self.outcome_ids():
            try:
                good = self.verify_replay(dist_id)
            except CorruptJustification:
                good = False
            (ok if good else failed).append(dist_id)
        return ok, failed

    def rule_stats(self) -> dict[int, tuple[int, float]]:
        """Outcome counts and frequencies per rule number (always four rows)."""
        total = sum(self._rule_counts.values())
        return {
            rule: (count, (count / total) if total else 0.0)
            for rule, count in sorted(self._rule_counts.items())
        }

    def trace_sizes(self) -> dict[str, int]:
        """Record count per distribution id."""
        return {dist_id: len(pos) for dist_id, pos in self._positions.items()}


# --------------------------------------------------------------------------
# Replay


def _picks(justification: dict, expected: int) -> list[tuple[int, int]]:
    raw = justification.get("draw_picks")
    if raw is None or len(raw) != expected:
        raise CorruptJustification(
            f"expected {expected} draw pick(s), found {None if raw is None else len(raw)}"
        )
    picks = []
    for entry in raw:
        try:
            size, idx = int(entry[0]), int(entry[1])
        except (TypeError, ValueError, IndexError) as e:
            raise CorruptJustification(f"malformed draw pick {entry!r}") from e
        if not 0 <= idx < size:
            raise CorruptJustification(f"drawn index {idx} out of range for {size} candidates")
        picks.append((size, idx))
    return picks


def _pick_from(candidates: Iterable[str] | None, pick: tuple[int, int], what: str) -> str:
    if candidates is None:
        raise CorruptJustification(f"missing candidate list for {what}")
    candidates = list(candidates)
    size, idx = pick
    if size != len(candidates):
        raise CorruptJustification(
            f"recorded candidate count {size} != stored list size {len(candidates)} for {what}"
        )
    return candidates[idx]


def replay_outcome(outcome: dict) -> tuple[str, str, int]:
    """Recompute (body, magistrate, rule_number) from a recorded outcome's
    justification alone. Raises CorruptJustification on impossible records."""
    justification = outcome.get("justification")
    if not isinstance(justification, dict):
        raise CorruptJustification("outcome has no justification")
    rule_number = outcome.get("rule_number")
    if rule_number not in (1, 2, 3, 4):
        raise CorruptJustification(f"rule number {rule_number!r} out of range")
    members = justification.get("eligible_members") or {}

    if rule_number == 4:
        picks = _picks(justification, 2)
        body = _pick_from(justification.get("eligible_bodies"), picks[0], "eligible bodies")
        magistrate = _pick_from(members.get(body), picks[1], f"members of {body}")
        return body, magistrate, 4

    if rule_number == 3:
        body = justification.get("divergence_body")
        if not body:
            raise CorruptJustification("embargo outcome without divergence body")
        picks = _picks(justification, 1)
        magistrate = _pick_from(members.get(body), picks[0], f"members of {body}")
        return body, magistrate, 3

    source_key = "dependency_source" if rule_number == 1 else "prevention_source"
    override_key = "dependency_override" if rule_number == 1 else "prevention_override"
    source = justification.get(source_key)
    if not isinstance(source, dict):
        raise CorruptJustification(f"rule {rule_number} outcome without {source_key}")
    body = source.get("body")
    if not body:
        raise CorruptJustification(f"{source_key} lacks a body")
    if justification.get(override_key):
        picks = _picks(justification, 1)
        magistrate = _pick_from(members.get(body), picks[0], f"members of {body}")
    else:
        _picks(justification, 0)
        magistrate = source.get("magistrate")
        if not magistrate:
            raise CorruptJustification(f"{source_key} lacks a magistrate")
    return body, magistrate, rule_number
