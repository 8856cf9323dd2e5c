"""Invocation/response logs of update processes and the linearizability checker.

A record is one of invoke / respond / aborted, stamped with a strictly
increasing logical timestamp. Real-time precedence is timestamp order: if P
responded before Q was invoked, every admissible sequential order puts P first.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace

from .errors import LogMalformed

INVOKE = "invoke"
RESPOND = "respond"
ABORTED = "aborted"

_BYTES_FIELDS = ("args_hash", "loaded_digest", "output_digest", "emitted_evidence_digest")


@dataclass(frozen=True)
class Record:
    pid: str
    ts: int
    event: str
    # invoke fields
    cohort: tuple | None = None
    round_index: int | None = None
    args_hash: bytes | None = None
    loaded_digest: bytes | None = None
    # respond fields
    output_digest: bytes | None = None
    emitted_evidence_digest: bytes | None = None
    participants: tuple | None = None
    # aborted field
    reason: str | None = None
    # list-history fields (abstract append-register histories)
    op: str | None = None
    result: tuple | None = None

    def to_dict(self) -> dict:
        out = {"pid": self.pid, "ts": self.ts, "event": self.event}
        for name in ("cohort", "round_index", "participants", "reason", "op", "result"):
            value = getattr(self, name)
            if value is not None:
                out[name] = list(value) if isinstance(value, tuple) else value
        for name in _BYTES_FIELDS:
            value = getattr(self, name)
            if value is not None:
                out[name] = value.hex()
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "Record":
        try:
            kwargs = {"pid": d["pid"], "ts": d["ts"], "event": d["event"]}
        except (KeyError, TypeError) as exc:
            raise LogMalformed(f"record missing required field: {exc}") from exc
        if kwargs["event"] not in (INVOKE, RESPOND, ABORTED):
            raise LogMalformed(f"unknown event {kwargs['event']!r}")
        for name in ("round_index", "reason", "op"):
            kwargs[name] = d.get(name)
        for name in ("cohort", "participants", "result"):
            kwargs[name] = tuple(d[name]) if d.get(name) is not None else None
        for name in _BYTES_FIELDS:
            kwargs[name] = bytes.fromhex(d[name]) if d.get(name) is not None else None
        return cls(**kwargs)


class EventLog:
    def __init__(self, records: list[Record] | None = None):
        self.records: list[Record] = list(records or [])

    def _next_ts(self) -> int:
        return self.records[-1].ts + 1 if self.records else 0

    def invoke(self, pid: str, **fields) -> Record:
        rec = Record(pid=pid, ts=self._next_ts(), event=INVOKE, **fields)
        self.records.append(rec)
        return rec

    def respond(self, pid: str, **fields) -> Record:
        rec = Record(pid=pid, ts=self._next_ts(), event=RESPOND, **fields)
        self.records.append(rec)
        return rec

    def aborted(self, pid: str, reason: str) -> Record:
        rec = Record(pid=pid, ts=self._next_ts(), event=ABORTED, reason=reason)
        self.records.append(rec)
        return rec

    def __len__(self) -> int:
        return len(self.records)

    def __eq__(self, other) -> bool:
        return isinstance(other, EventLog) and self.records == other.records

    def to_jsonl(self) -> str:
        return "\n".join(json.dumps(r.to_dict(), sort_keys=True) for r in self.records)

    @classmethod
    def from_jsonl(cls, text: str) -> "EventLog":
        records = []
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise LogMalformed(f"bad JSON line: {exc}") from exc
            records.append(Record.from_dict(doc))
        return cls(records)


@dataclass
class ProcessView:
    pid: str
    invoke: Record | None = None
    terminal: Record | None = None

    @property
    def completed(self) -> bool:
        return self.terminal is not None and self.terminal.event == RESPOND


def group_processes(log: EventLog) -> dict[str, ProcessView]:
    """Validate log shape and index records per process id."""
    procs: dict[str, ProcessView] = {}
    last_ts = None
    for rec in log.records:
        if last_ts is not None and rec.ts <= last_ts:
            raise LogMalformed("timestamps must strictly increase")
        last_ts = rec.ts
        view = procs.setdefault(rec.pid, ProcessView(rec.pid))
        if rec.event == INVOKE:
            if view.invoke is not None:
                raise LogMalformed(f"process {rec.pid} invoked twice")
            view.invoke = rec
        else:
            if view.invoke is None:
                raise LogMalformed(f"process {rec.pid} responded before invoking")
            if view.terminal is not None:
                raise LogMalformed(f"process {rec.pid} has two terminal events")
            view.terminal = rec
    return procs


def _precedence(completed: list[ProcessView]) -> dict[str, set[str]]:
    """before[q] = pids that must come before q (responded before q invoked)."""
    before = {p.pid: set() for p in completed}
    for p in completed:
        for q in completed:
            if p.pid != q.pid and p.terminal.ts < q.invoke.ts:
                before[q.pid].add(p.pid)
    return before


def _replay_digest(order: list[ProcessView]) -> bool:
    """Sequential spec for update processes: each process loads the digest its
    predecessor emitted, and round indices increment."""
    prev_digest = None
    prev_round = None
    for p in order:
        if prev_digest is not None:
            if p.invoke.loaded_digest != prev_digest:
                return False
            if p.invoke.round_index != prev_round + 1:
                return False
        prev_digest = p.terminal.emitted_evidence_digest
        prev_round = p.invoke.round_index
    return True


def _replay_list(order: list[ProcessView]) -> bool:
    """Sequential spec for an append register: each append returns the list
    contents immediately after its own append."""
    state: list = []
    for p in order:
        state.append(p.invoke.op)
        if list(p.terminal.result or ()) != state:
            return False
    return True


def check_linearizable(log: EventLog) -> tuple[bool, list[str] | None]:
    """Search for a total order of the completed processes that extends the
    real-time precedence order and replays against the sequential spec.

    Returns (True, witness order of pids) or (False, None). Brute-force with
    replay pruning; intended for instances of at most ~8 processes.
    """
    procs = group_processes(log)
    completed = [p for p in procs.values() if p.completed]
    if not completed:
        return True, []
    list_model = any(p.invoke.op is not None for p in completed)
    replay_ok = _replay_list if list_model else _replay_digest
    before = _precedence(completed)
    by_pid = {p.pid: p for p in completed}

    order: list[ProcessView] = []

    def search(remaining: set[str]) -> bool:
        if not remaining:
            return True
        for pid in sorted(remaining):
            if before[pid] & remaining:
                continue  # a mandatory predecessor is still unplaced
            order.append(by_pid[pid])
            if replay_ok(order) and search(remaining - {pid}):
                return True
            order.pop()
        return False

    if search({p.pid for p in completed}):
        return True, [p.pid for p in order]
    return False, None


def make_list_history(events: list[tuple]) -> EventLog:
    """Build an append-register history from (kind, pid, payload) tuples, where
    kind is "invoke" (payload = appended value) or "respond" (payload = result
    list). Convenience for hand-encoded histories."""
    log = EventLog()
    for kind, pid, payload in events:
        if kind == INVOKE:
            log.invoke(pid, op=payload)
        elif kind == RESPOND:
            log.respond(pid, result=tuple(payload))
        else:
            log.aborted(pid, payload)
    return log


def mutate_record(log: EventLog, index: int, **changes) -> EventLog:
    """Copy of the log with record `index` field-mutated (test/attack helper)."""
    records = list(log.records)
    records[index] = replace(records[index], **changes)
    return EventLog(records)
