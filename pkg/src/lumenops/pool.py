"""Shared pool: the permissioned blackboard between orchestration roles.

Entries are immutable once posted except for their status field; every
access attempt, allowed or not, lands in an append-only audit trail
whose Put and StatusChange records are sufficient to replay the pool
state. There is no wall clock anywhere: the audit sequence number is
the logical timestamp, which keeps dumps byte-identical across runs.
"""

from __future__ import annotations

import copy
import dataclasses
import json
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .errors import PermissionDeniedError, TransitionError
from .roles import DIRECTOR, AgentRole, is_division, is_expert


class EntryStatus(str, Enum):
    POSTED = "Posted"
    CLAIMED = "Claimed"
    COMPLETED = "Completed"
    FAILED = "Failed"


class ContentKind(str, Enum):
    WORKFLOW_PLAN = "WorkflowPlan"
    TELEMETRY_SNAPSHOT = "TelemetrySnapshot"
    QOT_REPORT = "QotReport"
    CALIBRATION_REPORT = "CalibrationReport"
    REHEARSAL_RESULT = "RehearsalResult"
    MARGIN_REPORT = "MarginReport"
    INSTRUCTION_SET = "InstructionSet"
    ANALYSIS_REPORT = "AnalysisReport"
    SECURITY_VERDICT = "SecurityVerdict"
    FINAL_REPORT = "FinalReport"


_TRANSITIONS = {
    EntryStatus.POSTED: {EntryStatus.CLAIMED},
    EntryStatus.CLAIMED: {EntryStatus.COMPLETED, EntryStatus.FAILED},
    EntryStatus.COMPLETED: set(),
    EntryStatus.FAILED: set(),
}


@dataclass(frozen=True)
class PoolEntry:
    entry_id: int
    task_id: str
    instruction: str
    kind: ContentKind
    content: dict
    sender: str
    receiver: str
    status: EntryStatus


@dataclass(frozen=True)
class AuditRecord:
    seq: int  # doubles as the logical timestamp
    actor: str
    action: str  # Put | Get | StatusChange | Denied
    entry_id: int | None
    detail: dict


def _role_name(role) -> str:
    if isinstance(role, AgentRole):
        return role.value
    return str(role)


def entry_to_dict(entry: PoolEntry) -> dict:
    return {
        "entry_id": entry.entry_id,
        "task_id": entry.task_id,
        "instruction": entry.instruction,
        "kind": entry.kind.value,
        "content": copy.deepcopy(entry.content),
        "sender": entry.sender,
        "receiver": entry.receiver,
        "status": entry.status.value,
    }


def entry_from_dict(doc: dict) -> PoolEntry:
    return PoolEntry(
        entry_id=int(doc["entry_id"]),
        task_id=str(doc["task_id"]),
        instruction=str(doc["instruction"]),
        kind=ContentKind(doc["kind"]),
        content=copy.deepcopy(doc["content"]),
        sender=str(doc["sender"]),
        receiver=str(doc["receiver"]),
        status=EntryStatus(doc["status"]),
    )


def audit_to_dict(record: AuditRecord) -> dict:
    return {
        "seq": record.seq,
        "actor": record.actor,
        "action": record.action,
        "entry_id": record.entry_id,
        "detail": copy.deepcopy(record.detail),
    }


class SharedPool:
    """Director reads and writes everything; division agents write and
    read what is addressed to them or posted by them; experts have no
    access at all."""

    def __init__(self) -> None:
        self._entries: dict[int, PoolEntry] = {}
        self._audit: list[AuditRecord] = []
        self._next_id = 1

    # --- internals ------------------------------------------------------

    def _record(self, actor: str, action: str, entry_id: int | None,
                detail: dict) -> None:
        self._audit.append(AuditRecord(
            seq=len(self._audit) + 1, actor=actor, action=action,
            entry_id=entry_id, detail=detail))

    def _deny(self, actor: str, reason: str) -> None:
        self._record(actor, "Denied", None, {"reason": reason})
        raise PermissionDeniedError(reason)

    def _require_principal(self, actor: str, verb: str) -> None:
        if actor == DIRECTOR.value or is_division(actor):
            return
        if is_expert(actor):
            self._deny(actor, f"expert role {actor} may not {verb} the pool")
        self._deny(actor, f"unknown role {actor} may not {verb} the pool")

    # --- operations -------------------------------------------------------

    def put(self, actor, *, task_id: str, instruction: str,
            kind, content: dict, receiver) -> int:
        actor = _role_name(actor)
        receiver = _role_name(receiver)
        self._require_principal(actor, "write")
        if receiver != DIRECTOR.value and not is_division(receiver):
            self._deny(actor, f"receiver {receiver} is not a pool principal")
        entry = PoolEntry(
            entry_id=self._next_id,
            task_id=str(task_id),
            instruction=str(instruction),
            kind=ContentKind(kind),
            content=copy.deepcopy(content),
            sender=actor,
            receiver=receiver,
            status=EntryStatus.POSTED,
        )
        self._entries[entry.entry_id] = entry
        self._next_id += 1
        self._record(actor, "Put", entry.entry_id,
                     {"entry": entry_to_dict(entry)})
        return entry.entry_id

    def query(self, actor, *, task_id: str | None = None,
              kind=None, status=None, sender=None,
              receiver=None, entry_id: int | None = None) -> list[PoolEntry]:
        actor = _role_name(actor)
        self._require_principal(actor, "read")
        if receiver is not None:
            receiver = _role_name(receiver)
            if actor != DIRECTOR.value and receiver != actor:
                self._deny(actor,
                           f"{actor} may not read entries addressed to "
                           f"{receiver}")
        if sender is not None:
            sender = _role_name(sender)
        if kind is not None:
            kind = ContentKind(kind)
        if status is not None:
            status = EntryStatus(status)

        out = []
        for eid in sorted(self._entries):
            entry = self._entries[eid]
            if actor != DIRECTOR.value and not (
                    entry.receiver == actor or entry.sender == actor):
                continue
            if task_id is not None and entry.task_id != task_id:
                continue
            if kind is not None and entry.kind != kind:
                continue
            if status is not None and entry.status != status:
                continue
            if sender is not None and entry.sender != sender:
                continue
            if receiver is not None and entry.receiver != receiver:
                continue
            if entry_id is not None and entry.entry_id != entry_id:
                continue
            out.append(entry)
        filters = {}
        for name, value in (("task_id", task_id), ("kind", kind),
                            ("status", status), ("sender", sender),
                            ("receiver", receiver), ("entry_id", entry_id)):
            if value is not None:
                filters[name] = (value.value if isinstance(value, Enum)
                                 else value)
        self._record(actor, "Get", None,
                     {"filters": filters, "matched": len(out)})
        return out

    def update_status(self, actor, entry_id: int, new_status) -> None:
        actor = _role_name(actor)
        self._require_principal(actor, "update")
        entry = self._entries.get(entry_id)
        if entry is None:
            self._deny(actor, f"no entry {entry_id}")
        if actor != DIRECTOR.value and actor != entry.receiver:
            self._deny(actor,
                       f"{actor} is not the receiver of entry {entry_id}")
        new_status = EntryStatus(new_status)
        if new_status not in _TRANSITIONS[entry.status]:
            self._record(actor, "Denied", entry_id,
                         {"reason": f"illegal transition "
                                    f"{entry.status.value}->"
                                    f"{new_status.value}"})
            raise TransitionError(
                f"illegal transition {entry.status.value}->"
                f"{new_status.value} on entry {entry_id}")
        self._entries[entry_id] = dataclasses.replace(entry,
                                                      status=new_status)
        self._record(actor, "StatusChange", entry_id,
                     {"status": new_status.value})

    # --- inspection -------------------------------------------------------

    def entries(self) -> list[PoolEntry]:
        return [self._entries[eid] for eid in sorted(self._entries)]

    def entry(self, entry_id: int) -> PoolEntry | None:
        return self._entries.get(entry_id)

    def audit(self) -> list[AuditRecord]:
        return list(self._audit)

    def dump_lines(self) -> list[str]:
        """Line-delimited records, entries first, then the audit trail.
        Field order and content are stable, so dumps are byte-exact."""
        lines = []
        for entry in self.entries():
            doc = {"record": "entry"}
            doc.update(entry_to_dict(entry))
            lines.append(json.dumps(doc, sort_keys=True,
                                    separators=(",", ":")))
        for rec in self._audit:
            doc = {"record": "audit"}
            doc.update(audit_to_dict(rec))
            lines.append(json.dumps(doc, sort_keys=True,
                                    separators=(",", ":")))
        return lines


def replay_audit(records: Sequence[AuditRecord]) -> dict[int, dict]:
    """Fold Put and StatusChange records into the pool state they imply.
    Denied and Get records must have no effect, which is exactly what a
    replay equivalence test checks."""
    state: dict[int, dict] = {}
    for rec in records:
        if rec.action == "Put":
            doc = copy.deepcopy(rec.detail["entry"])
            state[doc["entry_id"]] = doc
        elif rec.action == "StatusChange":
            state[rec.entry_id]["status"] = rec.detail["status"]
    return state
