"""Agent framework: messages, expert dispatch, review, intent
classification, and workflow planning.

Division agents receive task messages, hand them to exactly one expert
tool binding, and review the result before anything reaches the shared
pool. Dispatch itself never touches the pool; inputs arrive as payload
snapshots inside the message and outputs travel back in the result.
"""

from __future__ import annotations

import dataclasses
import json
import math
import re
import urllib.error
import urllib.request
from dataclasses import dataclass
from dataclasses import field as dc_field
from typing import Callable, Sequence

from .errors import LumenopsError, PlanError, UnrecognizedIntent
from .field import (FieldNetwork, TelemetrySnapshot, Telemetry,
                    ChannelReading, OmsReading, make_command,
                    service_from_payload, service_to_payload,
                    services_from_telemetry)
from .pool import ContentKind, SharedPool
from .qot import REQUIRED_GSNR_DB, MarginReport, QotReport
from .roles import AgentRole, division_of, is_division
from .rsa import OccupancyMap, ServiceRequest, plan_service
from .security import (SecurityPolicy, SecurityVerdict, PolicyCheck,
                       instruction_set_from_payload,
                       instruction_set_to_payload, make_instruction_set,
                       security_gate, verdict_to_payload)
from .topology import NetworkTopology
from .twin import CalibrationReport, DigitalTwin, RehearsalResult

TEMPLATE_IDS = ("PLAN_QOT", "OP_RECONFIG", "UPGRADE")

DEFAULT_BATCH_SIZE = 8
DEFAULT_MIN_MARGIN_DB = 1.0


# ---------------------------------------------------------------------------
# payload codecs
#
# Pool entries carry plain JSON-able dicts. Values are copied exactly,
# never rounded, so a number cited in a report can be traced back to the
# entry it came from by equality.

def telemetry_to_payload(snapshot: TelemetrySnapshot) -> dict:
    return {
        "records": [
            {
                "sequence": rec.sequence,
                "noise_sigma_db": rec.noise_sigma_db,
                "channels": [
                    {
                        "service_id": ch.service_id,
                        "path": list(ch.path),
                        "center_frequency_thz": ch.center_frequency_thz,
                        "width_slices": ch.width_slices,
                        "rate_gbps": ch.rate_gbps,
                        "launch_power_dbm": ch.launch_power_dbm,
                        "protected": ch.protected,
                        "received_power_dbm": ch.received_power_dbm,
                        "gsnr_db": ch.gsnr_db,
                    }
                    for ch in rec.channels
                ],
                "oms_outputs": [
                    {"source": row.source, "target": row.target,
                     "total_power_dbm": row.total_power_dbm}
                    for row in rec.oms_outputs
                ],
            }
            for rec in snapshot.records
        ],
    }


def telemetry_from_payload(payload: dict) -> TelemetrySnapshot:
    records = []
    for rec in payload["records"]:
        channels = tuple(
            ChannelReading(
                service_id=ch["service_id"],
                path=tuple(ch["path"]),
                center_frequency_thz=ch["center_frequency_thz"],
                width_slices=ch["width_slices"],
                rate_gbps=ch["rate_gbps"],
                launch_power_dbm=ch["launch_power_dbm"],
                protected=ch["protected"],
                received_power_dbm=ch["received_power_dbm"],
                gsnr_db=ch["gsnr_db"],
            )
            for ch in rec["channels"])
        oms = tuple(
            OmsReading(source=row["source"], target=row["target"],
                       total_power_dbm=row["total_power_dbm"])
            for row in rec["oms_outputs"])
        records.append(Telemetry(sequence=rec["sequence"],
                                 noise_sigma_db=rec["noise_sigma_db"],
                                 channels=channels, oms_outputs=oms))
    return TelemetrySnapshot(records=tuple(records))


def qot_report_to_payload(report: QotReport) -> dict:
    return {
        "channels": [
            {
                "service_id": ch.service_id,
                "path": list(ch.path),
                "center_frequency_thz": ch.center_frequency_thz,
                "rate_gbps": ch.rate_gbps,
                "width_slices": ch.width_slices,
                "launch_power_dbm": ch.launch_power_dbm,
                "signal_power_mw": ch.signal_power_mw,
                "ase_power_mw": ch.ase_power_mw,
                "nli_power_mw": ch.nli_power_mw,
                "gsnr_db": ch.gsnr_db,
            }
            for ch in report.channels
        ],
        "min_gsnr_db": report.min_gsnr_db,
        "max_gsnr_db": report.max_gsnr_db,
        "mean_gsnr_db": report.mean_gsnr_db,
    }


def margin_report_to_payload(report: MarginReport) -> dict:
    return {
        "channels": [
            {
                "service_id": ch.service_id,
                "rate_gbps": ch.rate_gbps,
                "gsnr_db": ch.gsnr_db,
                "required_gsnr_db": ch.required_gsnr_db,
                "margin_db": ch.margin_db,
            }
            for ch in report.channels
        ],
        "min_margin_db": report.min_margin_db,
        "all_positive": report.all_positive,
    }


def calibration_report_to_payload(report: CalibrationReport) -> dict:
    return {
        "stages": [
            {
                "name": st.name,
                "round_index": st.round_index,
                "parameters": st.parameters,
                "residual_before_db": st.residual_before_db,
                "residual_after_db": st.residual_after_db,
                "iterations": st.iterations,
                "reverted": st.reverted,
                "skipped": st.skipped,
                "pinned": st.pinned,
            }
            for st in report.stages
        ],
        "gsnr_error_before_db": report.gsnr_error_before_db,
        "final_max_gsnr_error_db": report.final_max_gsnr_error_db,
        "stopped_early": report.stopped_early,
    }


def rehearsal_to_payload(result: RehearsalResult) -> dict:
    return {
        "feasible": result.feasible,
        "min_margin_db": result.margins.min_margin_db,
        "required_margin_db": result.required_margin_db,
        "before": qot_report_to_payload(result.before),
        "after": qot_report_to_payload(result.after),
        "margins": margin_report_to_payload(result.margins),
        "command_digests": list(result.command_digests),
    }


# ---------------------------------------------------------------------------
# messages

@dataclass(frozen=True)
class InputRef:
    """A pool entry snapshot handed to an expert as input."""

    entry_id: int
    kind: ContentKind
    step_id: str
    payload: dict


@dataclass(frozen=True)
class TaskMessage:
    task_id: str
    step_id: str
    instruction: str
    expected_output_kind: ContentKind
    issuer: str
    inputs: tuple[InputRef, ...] = ()
    params: dict = dc_field(default_factory=dict)


@dataclass(frozen=True)
class TaskResult:
    task_id: str
    step_id: str
    expert: str
    status: str  # Ok | Error
    output_kind: ContentKind | None = None
    output: dict | None = None
    reason: str | None = None
    notes: str = ""


@dataclass(frozen=True)
class ReviewOutcome:
    accepted: bool
    reason: str = ""


@dataclass
class Environment:
    """Shared runtime handed to expert handlers at dispatch time."""

    field: FieldNetwork
    twin: DigitalTwin
    pool: SharedPool
    topology: NetworkTopology
    policy: SecurityPolicy
    params: dict = dc_field(default_factory=dict)
    batch_size: int = DEFAULT_BATCH_SIZE
    # test hook: rewrites a result payload before it is posted
    tamper: Callable[[str, ContentKind, dict], dict] | None = None


# ---------------------------------------------------------------------------
# expert handlers

def _latest(msg: TaskMessage, kind: ContentKind,
            step_id: str | None = None) -> InputRef | None:
    found = [ref for ref in msg.inputs
             if ref.kind is kind and (step_id is None
                                      or ref.step_id == step_id)]
    return max(found, key=lambda r: r.entry_id) if found else None


def _require(msg: TaskMessage, kind: ContentKind,
             step_id: str | None = None) -> InputRef:
    ref = _latest(msg, kind, step_id)
    if ref is None:
        where = f" from step {step_id!r}" if step_id else ""
        raise LumenopsError(f"missing {kind.value} input{where}")
    return ref


def _resolve_path_services(labels: Sequence[str], env: Environment
                           ) -> list[str]:
    table = env.params.get("path_services")
    if not isinstance(table, dict):
        raise LumenopsError("no path_services table in environment")
    ids: list[str] = []
    for label in labels:
        if label not in table:
            raise LumenopsError(f"unknown path label {label!r}")
        ids.extend(table[label])
    return sorted(ids)


def _collect(msg: TaskMessage, env: Environment):
    count = int(msg.params.get("batch_size", env.batch_size))
    snapshot = env.field.collect_snapshot(count=count)
    notes = (f"{len(snapshot.records)} frames, "
             f"{len(snapshot.channel_ids)} channels")
    return ContentKind.TELEMETRY_SNAPSHOT, telemetry_to_payload(snapshot), notes


def _calibrate(msg: TaskMessage, env: Environment):
    telem = _require(msg, ContentKind.TELEMETRY_SNAPSHOT)
    snapshot = telemetry_from_payload(telem.payload)
    report = env.twin.calibrate(snapshot)
    notes = (f"gsnr error {report.gsnr_error_before_db:.3f} -> "
             f"{report.final_max_gsnr_error_db:.3f} dB")
    return (ContentKind.CALIBRATION_REPORT,
            calibration_report_to_payload(report), notes)


def _validate(msg: TaskMessage, env: Environment):
    action = msg.params.get("action", "estimate")
    telem = _require(msg, ContentKind.TELEMETRY_SNAPSHOT)
    services = services_from_telemetry(telemetry_from_payload(telem.payload))
    if action == "estimate":
        report = env.twin.estimate_qot(services)
        return (ContentKind.QOT_REPORT, qot_report_to_payload(report),
                f"{len(report.channels)} channels")
    floor = float(msg.params.get("min_margin_db", DEFAULT_MIN_MARGIN_DB))
    if action == "rehearse_drop":
        drop_ids = _resolve_path_services(
            msg.params.get("drop_paths", ()), env)
        if not drop_ids:
            raise LumenopsError("nothing to drop")
        commands = [make_command("DropService", {"service_id": sid})
                    for sid in drop_ids]
        result = env.twin.rehearse(commands, services, min_margin_db=floor)
        notes = (f"drop {len(drop_ids)}, min margin "
                 f"{result.margins.min_margin_db:.3f} dB")
    elif action == "rehearse_add":
        strategy = _require(msg, ContentKind.ANALYSIS_REPORT,
                            step_id="upgrade_strategy")
        if not strategy.payload.get("feasible"):
            raise LumenopsError("upgrade strategy found no feasible channel")
        payload = strategy.payload.get("service")
        if not isinstance(payload, dict):
            raise LumenopsError("strategy carries no service payload")
        commands = [make_command("AddService", payload)]
        result = env.twin.rehearse(commands, services, min_margin_db=floor)
        notes = f"add 1, min margin {result.margins.min_margin_db:.3f} dB"
    else:
        raise LumenopsError(f"unknown validation action {action!r}")
    return ContentKind.REHEARSAL_RESULT, rehearsal_to_payload(result), notes


def _coordinate(msg: TaskMessage, env: Environment):
    rehearsal = _require(msg, ContentKind.REHEARSAL_RESULT)
    margins = rehearsal.payload.get("margins", {})
    floor = float(msg.params.get("min_margin_db", DEFAULT_MIN_MARGIN_DB))
    feasible = bool(rehearsal.payload.get("feasible"))
    decision = "proceed" if feasible else "abort"
    drop_ids = _resolve_path_services(msg.params.get("drop_paths", ()), env)
    payload = {
        "channels": margins.get("channels", []),
        "min_margin_db": margins.get("min_margin_db"),
        "min_required_margin_db": floor,
        "decision": decision,
        "drop_service_ids": drop_ids,
    }
    return (ContentKind.MARGIN_REPORT, payload,
            f"decision {decision}, {len(drop_ids)} drops")


def _deploy(msg: TaskMessage, env: Environment):
    action = msg.params.get("action", "generate")
    if action == "generate":
        return _deploy_generate(msg, env)
    if action == "apply":
        return _deploy_apply(msg, env)
    raise LumenopsError(f"unknown deployer action {action!r}")


def _deploy_generate(msg: TaskMessage, env: Environment):
    change = msg.params.get("change", "drop")
    if change == "drop":
        margin = _require(msg, ContentKind.MARGIN_REPORT)
        if margin.payload.get("decision") != "proceed":
            raise LumenopsError("change aborted by resource analysis")
        drop_ids = margin.payload.get("drop_service_ids") or ()
        if not drop_ids:
            raise LumenopsError("margin report lists no services to drop")
        commands = [make_command("DropService", {"service_id": sid})
                    for sid in drop_ids]
        notes = f"{len(commands)} drop commands"
    elif change == "add":
        strategy = _require(msg, ContentKind.ANALYSIS_REPORT,
                            step_id="upgrade_strategy")
        rehearsal = _latest(msg, ContentKind.REHEARSAL_RESULT)
        if not strategy.payload.get("feasible"):
            raise LumenopsError("upgrade strategy found no feasible channel")
        if rehearsal is not None and not rehearsal.payload.get("feasible"):
            raise LumenopsError("rehearsal rejected the upgrade")
        payload = strategy.payload.get("service")
        if not isinstance(payload, dict):
            raise LumenopsError("strategy carries no service payload")
        commands = [make_command("AddService", payload)]
        notes = "1 add command"
    else:
        raise LumenopsError(f"unknown change type {change!r}")
    instr = make_instruction_set(commands)
    return ContentKind.INSTRUCTION_SET, instruction_set_to_payload(instr), notes


def _deploy_apply(msg: TaskMessage, env: Environment):
    instr_ref = _require(msg, ContentKind.INSTRUCTION_SET)
    verdict_ref = _require(msg, ContentKind.SECURITY_VERDICT)
    verdict = verdict_ref.payload
    digest = instr_ref.payload.get("digest")
    if not verdict.get("approved"):
        raise LumenopsError("instruction set not approved by security gate")
    if verdict.get("instruction_digest") != digest:
        raise LumenopsError("security verdict covers a different "
                            "instruction set")
    instr = instruction_set_from_payload(instr_ref.payload)
    for cmd in instr.commands:
        env.field.apply_command(cmd)
    payload = {
        "type": "apply_change",
        "applied": True,
        "instruction_digest": instr.digest,
        "command_count": len(instr.commands),
        "command_digests": [c.digest for c in instr.commands],
        "active_services": sorted(s.service_id
                                  for s in env.field.list_services()),
        "dropped_services": sorted(s.service_id
                                   for s in env.field.dropped_services()),
    }
    return (ContentKind.ANALYSIS_REPORT, payload,
            f"applied {len(instr.commands)} commands")


def _guard(msg: TaskMessage, env: Environment):
    instr_ref = _require(msg, ContentKind.INSTRUCTION_SET)
    try:
        instr = instruction_set_from_payload(instr_ref.payload)
        verdict = security_gate(instr, env.policy)
    except LumenopsError as exc:
        # the gate is total: a payload too mangled to parse is denied
        verdict = SecurityVerdict(
            approved=False,
            authenticity=PolicyCheck("authenticity", False,
                                     "unparseable instruction set"),
            integrity=PolicyCheck("integrity", False, str(exc)),
            policy=(),
            instruction_digest=str(instr_ref.payload.get("digest", "")),
        )
    word = "approved" if verdict.approved else "denied"
    return ContentKind.SECURITY_VERDICT, verdict_to_payload(verdict), word


def _plan_upgrade(msg: TaskMessage, env: Environment):
    telem = _require(msg, ContentKind.TELEMETRY_SNAPSHOT)
    services = services_from_telemetry(telemetry_from_payload(telem.payload))
    src = msg.params.get("src") or env.params.get("upgrade_src")
    dst = msg.params.get("dst") or env.params.get("upgrade_dst")
    rate = msg.params.get("rate_gbps") or env.params.get("upgrade_rate_gbps")
    if not (src and dst and rate):
        raise LumenopsError("upgrade endpoints or rate not specified")
    request = ServiceRequest(src=str(src), dst=str(dst), rate_gbps=int(rate),
                             service_id=msg.params.get("service_id"))
    occupancy = OccupancyMap.from_services(env.topology, services)
    plan = plan_service(env.topology, occupancy, env.twin, request, services,
                        min_margin_db=float(msg.params.get(
                            "min_margin_db", DEFAULT_MIN_MARGIN_DB)))
    payload = {
        "type": "upgrade_strategy",
        "feasible": plan.feasible,
        "path": list(plan.path) if plan.path else None,
        "start_slice": plan.start_slice,
        "center_frequency_thz": plan.center_frequency_thz,
        "service": (service_to_payload(plan.service)
                    if plan.service else None),
        "min_margin_db": (plan.rehearsal.margins.min_margin_db
                          if plan.rehearsal else None),
        "considered": [
            {"path": list(c.path), "start_slice": c.start_slice,
             "center_frequency_thz": c.center_frequency_thz,
             "feasible": c.feasible, "worst_margin_db": c.worst_margin_db,
             "reason": c.reason}
            for c in plan.considered
        ],
    }
    notes = ("feasible" if plan.feasible else "infeasible")
    if plan.feasible:
        notes += (f" at {plan.center_frequency_thz} THz on "
                  f"{'-'.join(plan.path)}")
    return ContentKind.ANALYSIS_REPORT, payload, notes


def _mean_maps(payload: dict) -> tuple[dict, dict]:
    """Per-service mean GSNR and the first frame's channel rows."""
    snapshot = telemetry_from_payload(payload)
    means = {sid: snapshot.mean_gsnr_db(sid)
             for sid in snapshot.channel_ids}
    rows = {ch.service_id: ch for ch in snapshot.records[0].channels}
    return means, rows


def _analyze(msg: TaskMessage, env: Environment):
    action = msg.params.get("action", "qot")
    if action == "qot":
        return _analyze_qot(msg)
    if action == "reconfig":
        return _analyze_reconfig(msg)
    if action == "upgrade":
        return _analyze_upgrade(msg)
    raise LumenopsError(f"unknown analysis action {action!r}")


def _analyze_qot(msg: TaskMessage):
    telem = _require(msg, ContentKind.TELEMETRY_SNAPSHOT)
    calib = _require(msg, ContentKind.CALIBRATION_REPORT)
    qot = _require(msg, ContentKind.QOT_REPORT)
    means, _ = _mean_maps(telem.payload)
    channels = []
    errors = []
    for ch in qot.payload["channels"]:
        sid = ch["service_id"]
        required = REQUIRED_GSNR_DB.get(ch["rate_gbps"])
        measured = means.get(sid)
        err = abs(ch["gsnr_db"] - measured) if measured is not None else None
        if err is not None:
            errors.append(err)
        channels.append({
            "service_id": sid,
            "center_frequency_thz": ch["center_frequency_thz"],
            "rate_gbps": ch["rate_gbps"],
            "gsnr_db": ch["gsnr_db"],
            "required_gsnr_db": required,
            "margin_db": (ch["gsnr_db"] - required
                          if required is not None else None),
            "measured_gsnr_db": measured,
            "abs_error_db": err,
        })
    payload = {
        "type": "qot",
        "channel_count": len(channels),
        "channels": channels,
        "min_gsnr_db": qot.payload.get("min_gsnr_db"),
        "mean_gsnr_db": qot.payload.get("mean_gsnr_db"),
        "calibration": {
            "gsnr_error_before_db": calib.payload["gsnr_error_before_db"],
            "final_max_gsnr_error_db":
                calib.payload["final_max_gsnr_error_db"],
            "stage_count": len(calib.payload["stages"]),
            "stopped_early": calib.payload["stopped_early"],
        },
        "prediction": {
            "max_abs_error_db": max(errors) if errors else None,
            "mean_abs_error_db": (sum(errors) / len(errors)
                                  if errors else None),
        },
        "cites": {"telemetry": telem.entry_id, "calibration": calib.entry_id,
                  "qot": qot.entry_id},
    }
    return (ContentKind.ANALYSIS_REPORT, payload,
            f"{len(channels)} channels analyzed")


def _analyze_reconfig(msg: TaskMessage):
    pre = _require(msg, ContentKind.TELEMETRY_SNAPSHOT, step_id="collect")
    post = _require(msg, ContentKind.TELEMETRY_SNAPSHOT, step_id="recollect")
    rehearsal = _require(msg, ContentKind.REHEARSAL_RESULT)
    margin = _latest(msg, ContentKind.MARGIN_REPORT)
    applied_ref = _latest(msg, ContentKind.ANALYSIS_REPORT,
                          step_id="apply_change")
    pre_means, _ = _mean_maps(pre.payload)
    post_means, post_rows = _mean_maps(post.payload)
    predicted = {ch["service_id"]: ch["gsnr_db"]
                 for ch in rehearsal.payload["after"]["channels"]}
    survivors = []
    errors = []
    for sid in sorted(post_means):
        row = {
            "service_id": sid,
            "gsnr_before_db": pre_means.get(sid),
            "gsnr_after_db": post_means[sid],
            "delta_db": (post_means[sid] - pre_means[sid]
                         if sid in pre_means else None),
            "predicted_gsnr_db": predicted.get(sid),
        }
        if sid in predicted:
            err = abs(predicted[sid] - post_means[sid])
            row["abs_prediction_error_db"] = err
            errors.append(err)
        survivors.append(row)
    dropped = sorted(set(pre_means) - set(post_means))
    deltas = [r["delta_db"] for r in survivors if r["delta_db"] is not None]
    post_margins = [
        post_means[sid] - REQUIRED_GSNR_DB[post_rows[sid].rate_gbps]
        for sid in sorted(post_means)
        if post_rows[sid].rate_gbps in REQUIRED_GSNR_DB
    ]
    payload = {
        "type": "reconfig",
        "decision": (margin.payload.get("decision")
                     if margin is not None else None),
        "applied": bool(applied_ref is not None
                        and applied_ref.payload.get("applied")),
        "dropped_service_ids": dropped,
        "dropped_count": len(dropped),
        "retained_service_ids": sorted(post_means),
        "retained_count": len(survivors),
        "survivors": survivors,
        "min_delta_db": min(deltas) if deltas else None,
        "post_min_margin_db": min(post_margins) if post_margins else None,
        "prediction": {
            "max_abs_error_db": max(errors) if errors else None,
            "mean_abs_error_db": (sum(errors) / len(errors)
                                  if errors else None),
        },
        "cites": {"telemetry_before": pre.entry_id,
                  "telemetry_after": post.entry_id,
                  "rehearsal": rehearsal.entry_id},
    }
    return (ContentKind.ANALYSIS_REPORT, payload,
            f"{len(dropped)} dropped, {len(survivors)} retained")


def _analyze_upgrade(msg: TaskMessage):
    pre = _require(msg, ContentKind.TELEMETRY_SNAPSHOT, step_id="collect")
    post = _require(msg, ContentKind.TELEMETRY_SNAPSHOT, step_id="recollect")
    rehearsal = _require(msg, ContentKind.REHEARSAL_RESULT)
    applied_ref = _latest(msg, ContentKind.ANALYSIS_REPORT,
                          step_id="apply_change")
    pre_means, _ = _mean_maps(pre.payload)
    post_means, post_rows = _mean_maps(post.payload)
    new_ids = sorted(set(post_means) - set(pre_means))
    existing = []
    degradations = []
    for sid in sorted(set(post_means) & set(pre_means)):
        delta = post_means[sid] - pre_means[sid]
        degradations.append(-delta)
        existing.append({
            "service_id": sid,
            "gsnr_before_db": pre_means[sid],
            "gsnr_after_db": post_means[sid],
            "delta_db": delta,
        })
    new_rows = []
    for sid in new_ids:
        row = post_rows[sid]
        required = REQUIRED_GSNR_DB.get(row.rate_gbps)
        new_rows.append({
            "service_id": sid,
            "center_frequency_thz": row.center_frequency_thz,
            "path": list(row.path),
            "rate_gbps": row.rate_gbps,
            "gsnr_db": post_means[sid],
            "required_gsnr_db": required,
            "margin_db": (post_means[sid] - required
                          if required is not None else None),
        })
    payload = {
        "type": "upgrade",
        "applied": bool(applied_ref is not None
                        and applied_ref.payload.get("applied")),
        "rehearsal_feasible": bool(rehearsal.payload.get("feasible")),
        "predicted_min_margin_db": rehearsal.payload.get("min_margin_db"),
        "new_services": new_rows,
        "existing": existing,
        "max_existing_degradation_db": (max(degradations)
                                        if degradations else None),
        "cites": {"telemetry_before": pre.entry_id,
                  "telemetry_after": post.entry_id,
                  "rehearsal": rehearsal.entry_id},
    }
    return (ContentKind.ANALYSIS_REPORT, payload,
            f"{len(new_rows)} added, {len(existing)} existing")


def _stub(msg: TaskMessage, env: Environment):
    return msg.expected_output_kind, {}, "no-op"


_HANDLERS: dict[AgentRole, Callable] = {
    AgentRole.DATA_COLLECTOR: _collect,
    AgentRole.MODELING_ENGINEER: _calibrate,
    AgentRole.VALIDATION_SPECIALIST: _validate,
    AgentRole.RESOURCE_COORDINATOR: _coordinate,
    AgentRole.CONFIGURATION_DEPLOYER: _deploy,
    AgentRole.SECURITY_SUPPORTER: _guard,
    AgentRole.STATISTICAL_ANALYST: _analyze,
    AgentRole.FULL_LIFECYCLE_MANAGER: _plan_upgrade,
}


def dispatch(division, expert, message: TaskMessage,
             env: Environment) -> TaskResult:
    """Run one expert tool binding on a task message.

    Tool failures come back as Error results; handing an expert to the
    wrong division is a caller bug and raises instead.
    """
    division = AgentRole(division)
    expert = AgentRole(expert)
    if not is_division(division):
        raise LumenopsError(f"{division.value} is not a division")
    if division_of(expert) is not division:
        raise LumenopsError(
            f"expert {expert.value} not in division {division.value}")
    handler = _HANDLERS.get(expert, _stub)
    try:
        kind, payload, notes = handler(message, env)
    except Exception as exc:  # total: any tool failure becomes a result
        return TaskResult(task_id=message.task_id, step_id=message.step_id,
                          expert=expert.value, status="Error",
                          reason=f"{type(exc).__name__}: {exc}")
    return TaskResult(task_id=message.task_id, step_id=message.step_id,
                      expert=expert.value, status="Ok", output_kind=kind,
                      output=payload, notes=notes)


# ---------------------------------------------------------------------------
# review

def _finite(value) -> bool:
    return isinstance(value, (int, float)) and math.isfinite(value)


def review(message: TaskMessage, result: TaskResult) -> ReviewOutcome:
    """Division-side acceptance check before a result reaches the pool."""
    if result.status != "Ok":
        return ReviewOutcome(False, result.reason or "expert reported error")
    if result.output_kind is not message.expected_output_kind:
        got = result.output_kind.value if result.output_kind else "nothing"
        return ReviewOutcome(
            False, f"expected {message.expected_output_kind.value}, got {got}")
    if not isinstance(result.output, dict):
        return ReviewOutcome(False, "result payload is not a mapping")
    reason = _completeness_gap(message, result.output)
    if reason:
        return ReviewOutcome(False, reason)
    return ReviewOutcome(True)


def _completeness_gap(message: TaskMessage, payload: dict) -> str | None:
    kind = message.expected_output_kind
    params = message.params
    if kind is ContentKind.TELEMETRY_SNAPSHOT:
        records = payload.get("records")
        if not records:
            return "telemetry snapshot has no frames"
        covered = {ch.get("service_id") for ch in records[0].get("channels", ())}
        missing = set(params.get("expected_channels", ())) - covered
        if missing:
            return f"telemetry missing channels {sorted(missing)}"
    elif kind is ContentKind.QOT_REPORT:
        channels = payload.get("channels")
        if not channels:
            return "QoT report has no channels"
        covered = {ch.get("service_id") for ch in channels}
        missing = set(params.get("expected_channels", ())) - covered
        if missing:
            return f"QoT report missing channels {sorted(missing)}"
        want = params.get("expected_channel_count")
        if want is not None and len(channels) != int(want):
            return (f"QoT report covers {len(channels)} channels, "
                    f"expected {want}")
    elif kind is ContentKind.CALIBRATION_REPORT:
        if not payload.get("stages"):
            return "calibration report has no stages"
        if not _finite(payload.get("final_max_gsnr_error_db")):
            return "calibration report has no final residual"
    elif kind is ContentKind.REHEARSAL_RESULT:
        for key in ("feasible", "before", "after", "margins"):
            if key not in payload:
                return f"rehearsal result missing {key!r}"
    elif kind is ContentKind.MARGIN_REPORT:
        if "channels" not in payload:
            return "margin report has no channels"
        if payload.get("decision") not in ("proceed", "abort"):
            return "margin report has no decision"
    elif kind is ContentKind.INSTRUCTION_SET:
        if not payload.get("commands"):
            return "instruction set has no commands"
        if not payload.get("digest") or not payload.get("issuer"):
            return "instruction set is unsigned"
    elif kind is ContentKind.SECURITY_VERDICT:
        for key in ("approved", "authenticity", "integrity", "policy",
                    "instruction_digest"):
            if key not in payload:
                return f"security verdict missing {key!r}"
    elif kind is ContentKind.ANALYSIS_REPORT:
        if not payload.get("type"):
            return "analysis report has no type"
    elif not payload:
        return "empty payload"
    return None


# ---------------------------------------------------------------------------
# intent classification

@dataclass(frozen=True)
class Classification:
    template_id: str
    params: dict


def classify(task_target: str) -> Classification:
    """Deterministic keyword mapping from task target to template.

    Anything that matches nothing raises UnrecognizedIntent; there is no
    guessing tier below these rules.
    """
    text = task_target.lower()
    if "upgrad" in text or (re.search(r"\badd(?:ing)?\b", text)
                            and "signal" in text):
        params: dict = {}
        rate = re.search(r"(\d+)\s*gb/s", text)
        if rate:
            params["rate_gbps"] = int(rate.group(1))
        nodes = re.findall(r"node\s+(\w+)", text)
        if len(nodes) >= 2:
            params["src"], params["dst"] = nodes[0], nodes[1]
        return Classification("UPGRADE", params)
    if "dropp" in text or "reconfig" in text or re.search(r"\bdrop\b", text):
        head, _, tail = text.partition("retain")
        drop_paths = [p.upper() for p in re.findall(r"path\s+(\w+)", head)]
        keep_paths = [p.upper() for p in re.findall(r"path\s+(\w+)", tail)]
        return Classification("OP_RECONFIG", {
            "drop_paths": sorted(set(drop_paths)),
            "keep_paths": sorted(set(keep_paths)),
        })
    if "qot" in text or "estimat" in text or "modeling" in text:
        params = {}
        count = re.search(r"(\d+)\s+signals?", text)
        if count:
            params["signal_count"] = int(count.group(1))
        return Classification("PLAN_QOT", params)
    raise UnrecognizedIntent(
        f"no workflow template matches task target {task_target!r}")


# ---------------------------------------------------------------------------
# workflow plans

@dataclass(frozen=True)
class Produce:
    """One expert invocation inside a step and where its output goes."""

    expert: str
    kind: ContentKind
    receivers: tuple[str, ...]
    action: str | None = None


@dataclass(frozen=True)
class PlanStep:
    step_id: str
    goal: str
    division: str
    depends_on: tuple[str, ...]
    produces: tuple[Produce, ...]
    params: dict = dc_field(default_factory=dict)


@dataclass(frozen=True)
class WorkflowPlan:
    task_id: str
    template_id: str
    task_target: str
    steps: tuple[PlanStep, ...]
    source: str = "deterministic"  # deterministic | generative | fallback
    fallback_reason: str | None = None


_OPTICAL = AgentRole.OPTICAL_LAYER_AGENT.value
_DT = AgentRole.DT_AGENT.value
_CONTROL = AgentRole.CONTROL_AGENT.value
_SUPPORT = AgentRole.SUPPORT_AGENT.value
_DIRECTOR = AgentRole.NETWORK_DIRECTOR.value


def _plan_qot_steps(params: dict) -> tuple[PlanStep, ...]:
    expected = {}
    if params.get("signal_count"):
        expected["expected_channel_count"] = int(params["signal_count"])
    return (
        PlanStep(
            step_id="collect_and_package",
            goal="collect live telemetry and package it for the twin",
            division=_OPTICAL, depends_on=(),
            produces=(Produce(AgentRole.DATA_COLLECTOR.value,
                              ContentKind.TELEMETRY_SNAPSHOT,
                              (_DT, _CONTROL)),),
        ),
        PlanStep(
            step_id="dt_modeling",
            goal="calibrate the digital twin against telemetry",
            division=_DT, depends_on=("collect_and_package",),
            produces=(Produce(AgentRole.MODELING_ENGINEER.value,
                              ContentKind.CALIBRATION_REPORT,
                              (_CONTROL,)),),
        ),
        PlanStep(
            step_id="qot_estimation",
            goal="estimate QoT for every active channel",
            division=_DT, depends_on=("dt_modeling",),
            produces=(Produce(AgentRole.VALIDATION_SPECIALIST.value,
                              ContentKind.QOT_REPORT, (_CONTROL,),
                              action="estimate"),),
            params=dict(expected),
        ),
        PlanStep(
            step_id="analyze_and_report",
            goal="compare estimates with telemetry and assemble analysis",
            division=_CONTROL, depends_on=("qot_estimation",),
            produces=(Produce(AgentRole.STATISTICAL_ANALYST.value,
                              ContentKind.ANALYSIS_REPORT, (_DIRECTOR,),
                              action="qot"),),
        ),
    )


def _op_reconfig_steps(params: dict) -> tuple[PlanStep, ...]:
    drop = {"drop_paths": list(params.get("drop_paths", ())),
            "keep_paths": list(params.get("keep_paths", ()))}
    return (
        PlanStep(
            step_id="collect",
            goal="collect pre-change telemetry",
            division=_OPTICAL, depends_on=(),
            produces=(Produce(AgentRole.DATA_COLLECTOR.value,
                              ContentKind.TELEMETRY_SNAPSHOT,
                              (_DT, _CONTROL)),),
        ),
        PlanStep(
            step_id="dt_rehearsal",
            goal="calibrate the twin and rehearse the drop",
            division=_DT, depends_on=("collect",),
            produces=(
                Produce(AgentRole.MODELING_ENGINEER.value,
                        ContentKind.CALIBRATION_REPORT, (_CONTROL,)),
                Produce(AgentRole.VALIDATION_SPECIALIST.value,
                        ContentKind.REHEARSAL_RESULT, (_CONTROL,),
                        action="rehearse_drop"),
            ),
            params=dict(drop),
        ),
        PlanStep(
            step_id="resource_analysis",
            goal="judge post-change margins and decide",
            division=_CONTROL, depends_on=("dt_rehearsal",),
            produces=(Produce(AgentRole.RESOURCE_COORDINATOR.value,
                              ContentKind.MARGIN_REPORT, (_OPTICAL,)),),
            params=dict(drop),
        ),
        PlanStep(
            step_id="generate_instructions",
            goal="turn the approved drop list into NMS commands",
            division=_OPTICAL, depends_on=("resource_analysis",),
            produces=(Produce(AgentRole.CONFIGURATION_DEPLOYER.value,
                              ContentKind.INSTRUCTION_SET, (_SUPPORT,),
                              action="generate"),),
            params={"change": "drop"},
        ),
        PlanStep(
            step_id="security_check",
            goal="gate the instruction set",
            division=_SUPPORT, depends_on=("generate_instructions",),
            produces=(Produce(AgentRole.SECURITY_SUPPORTER.value,
                              ContentKind.SECURITY_VERDICT, (_OPTICAL,)),),
        ),
        PlanStep(
            step_id="apply_change",
            goal="apply the approved instruction set to the network",
            division=_OPTICAL, depends_on=("security_check",),
            produces=(Produce(AgentRole.CONFIGURATION_DEPLOYER.value,
                              ContentKind.ANALYSIS_REPORT, (_CONTROL,),
                              action="apply"),),
        ),
        PlanStep(
            step_id="recollect",
            goal="collect post-change telemetry",
            division=_OPTICAL, depends_on=("security_check",),
            produces=(Produce(AgentRole.DATA_COLLECTOR.value,
                              ContentKind.TELEMETRY_SNAPSHOT,
                              (_CONTROL,)),),
        ),
        PlanStep(
            step_id="analyze_and_report",
            goal="verify the change against prediction and report",
            division=_CONTROL, depends_on=("recollect",),
            produces=(Produce(AgentRole.STATISTICAL_ANALYST.value,
                              ContentKind.ANALYSIS_REPORT, (_DIRECTOR,),
                              action="reconfig"),),
        ),
    )


def _upgrade_steps(params: dict) -> tuple[PlanStep, ...]:
    request = {k: params[k] for k in ("src", "dst", "rate_gbps", "service_id")
               if k in params}
    return (
        PlanStep(
            step_id="collect",
            goal="collect pre-upgrade telemetry",
            division=_OPTICAL, depends_on=(),
            produces=(Produce(AgentRole.DATA_COLLECTOR.value,
                              ContentKind.TELEMETRY_SNAPSHOT,
                              (_SUPPORT, _DT, _CONTROL)),),
        ),
        PlanStep(
            step_id="upgrade_strategy",
            goal="find a route and channel for the new signal",
            division=_SUPPORT, depends_on=("collect",),
            produces=(Produce(AgentRole.FULL_LIFECYCLE_MANAGER.value,
                              ContentKind.ANALYSIS_REPORT,
                              (_DT, _OPTICAL)),),
            params=dict(request),
        ),
        PlanStep(
            step_id="dt_rehearsal",
            goal="calibrate the twin and rehearse the add",
            division=_DT, depends_on=("upgrade_strategy",),
            produces=(
                Produce(AgentRole.MODELING_ENGINEER.value,
                        ContentKind.CALIBRATION_REPORT, (_CONTROL,)),
                Produce(AgentRole.VALIDATION_SPECIALIST.value,
                        ContentKind.REHEARSAL_RESULT,
                        (_CONTROL, _OPTICAL), action="rehearse_add"),
            ),
        ),
        PlanStep(
            step_id="generate_instructions",
            goal="turn the planned add into NMS commands",
            division=_OPTICAL, depends_on=("dt_rehearsal",),
            produces=(Produce(AgentRole.CONFIGURATION_DEPLOYER.value,
                              ContentKind.INSTRUCTION_SET, (_SUPPORT,),
                              action="generate"),),
            params={"change": "add"},
        ),
        PlanStep(
            step_id="security_check",
            goal="gate the instruction set",
            division=_SUPPORT, depends_on=("generate_instructions",),
            produces=(Produce(AgentRole.SECURITY_SUPPORTER.value,
                              ContentKind.SECURITY_VERDICT, (_OPTICAL,)),),
        ),
        PlanStep(
            step_id="apply_change",
            goal="apply the approved instruction set to the network",
            division=_OPTICAL, depends_on=("security_check",),
            produces=(Produce(AgentRole.CONFIGURATION_DEPLOYER.value,
                              ContentKind.ANALYSIS_REPORT, (_CONTROL,),
                              action="apply"),),
        ),
        PlanStep(
            step_id="recollect",
            goal="collect post-upgrade telemetry",
            division=_OPTICAL, depends_on=("security_check",),
            produces=(Produce(AgentRole.DATA_COLLECTOR.value,
                              ContentKind.TELEMETRY_SNAPSHOT,
                              (_CONTROL,)),),
        ),
        PlanStep(
            step_id="analyze_and_report",
            goal="verify the upgrade against prediction and report",
            division=_CONTROL, depends_on=("recollect",),
            produces=(Produce(AgentRole.STATISTICAL_ANALYST.value,
                              ContentKind.ANALYSIS_REPORT, (_DIRECTOR,),
                              action="upgrade"),),
        ),
    )


_TEMPLATES: dict[str, Callable[[dict], tuple[PlanStep, ...]]] = {
    "PLAN_QOT": _plan_qot_steps,
    "OP_RECONFIG": _op_reconfig_steps,
    "UPGRADE": _upgrade_steps,
}


def build_template_plan(template_id: str, params: dict, *, task_id: str,
                        task_target: str = "") -> WorkflowPlan:
    if template_id not in _TEMPLATES:
        raise PlanError(f"unknown template {template_id!r}")
    steps = _TEMPLATES[template_id](dict(params))
    return WorkflowPlan(task_id=task_id, template_id=template_id,
                        task_target=task_target, steps=steps)


def validate_plan(plan: WorkflowPlan) -> None:
    """Structural checks a plan must pass before execution."""
    if not plan.steps:
        raise PlanError("plan has no steps")
    seen: set[str] = set()
    for step in plan.steps:
        if not step.step_id:
            raise PlanError("step without an id")
        if step.step_id in seen:
            raise PlanError(f"duplicate step id {step.step_id!r}")
        try:
            division = AgentRole(step.division)
        except ValueError:
            raise PlanError(f"step {step.step_id!r}: unknown division "
                            f"{step.division!r}") from None
        if not is_division(division):
            raise PlanError(f"step {step.step_id!r}: {step.division!r} "
                            "is not a division")
        for dep in step.depends_on:
            if dep not in seen:
                raise PlanError(f"step {step.step_id!r} depends on "
                                f"{dep!r} which does not precede it")
        if not step.produces:
            raise PlanError(f"step {step.step_id!r} produces nothing")
        for produce in step.produces:
            try:
                expert = AgentRole(produce.expert)
            except ValueError:
                raise PlanError(f"step {step.step_id!r}: unknown expert "
                                f"{produce.expert!r}") from None
            if division_of(expert) is not division:
                raise PlanError(
                    f"step {step.step_id!r}: expert {produce.expert} "
                    f"not in division {step.division}")
            if not produce.receivers:
                raise PlanError(f"step {step.step_id!r}: output of "
                                f"{produce.expert} goes nowhere")
            for receiver in produce.receivers:
                try:
                    role = AgentRole(receiver)
                except ValueError:
                    raise PlanError(f"step {step.step_id!r}: unknown "
                                    f"receiver {receiver!r}") from None
                if role is not AgentRole.NETWORK_DIRECTOR \
                        and not is_division(role):
                    raise PlanError(f"step {step.step_id!r}: receiver "
                                    f"{receiver!r} cannot hold entries")
        seen.add(step.step_id)


def plan_to_payload(plan: WorkflowPlan) -> dict:
    return {
        "task_id": plan.task_id,
        "template_id": plan.template_id,
        "task_target": plan.task_target,
        "source": plan.source,
        "fallback_reason": plan.fallback_reason,
        "steps": [
            {
                "step_id": s.step_id,
                "goal": s.goal,
                "division": s.division,
                "depends_on": list(s.depends_on),
                "params": s.params,
                "produces": [
                    {"expert": p.expert, "kind": p.kind.value,
                     "receivers": list(p.receivers), "action": p.action}
                    for p in s.produces
                ],
            }
            for s in plan.steps
        ],
    }


def plan_from_payload(payload: dict) -> WorkflowPlan:
    try:
        steps = tuple(
            PlanStep(
                step_id=str(s["step_id"]),
                goal=str(s.get("goal", "")),
                division=str(s["division"]),
                depends_on=tuple(s.get("depends_on", ())),
                params=dict(s.get("params", {})),
                produces=tuple(
                    Produce(expert=str(p["expert"]),
                            kind=ContentKind(p["kind"]),
                            receivers=tuple(p["receivers"]),
                            action=p.get("action"))
                    for p in s["produces"]),
            )
            for s in payload["steps"])
        return WorkflowPlan(
            task_id=str(payload["task_id"]),
            template_id=str(payload.get("template_id", "")),
            task_target=str(payload.get("task_target", "")),
            steps=steps,
            source=str(payload.get("source", "generative")),
            fallback_reason=payload.get("fallback_reason"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise PlanError(f"malformed plan payload: {exc}") from exc


def step_to_payload(step: PlanStep) -> dict:
    return {
        "step_id": step.step_id,
        "goal": step.goal,
        "division": step.division,
        "depends_on": list(step.depends_on),
        "params": step.params,
        "produces": [
            {"expert": p.expert, "kind": p.kind.value,
             "receivers": list(p.receivers), "action": p.action}
            for p in step.produces
        ],
    }


# ---------------------------------------------------------------------------
# planners

def template_catalog() -> dict:
    """Compact template summary shipped to a generative planner."""
    catalog = []
    for template_id, builder in _TEMPLATES.items():
        steps = builder({})
        catalog.append({
            "template_id": template_id,
            "steps": [{"step_id": s.step_id, "division": s.division,
                       "goal": s.goal} for s in steps],
        })
    return {"templates": catalog}


class DeterministicPlanner:
    """Classify the target with keyword rules and instantiate a template."""

    name = "deterministic"

    def plan(self, task_target: str, *, task_id: str,
             context: dict | None = None) -> WorkflowPlan:
        decision = classify(task_target)
        return build_template_plan(decision.template_id, decision.params,
                                   task_id=task_id, task_target=task_target)


class GenerativePlanner:
    """Ask an external planning endpoint for a workflow plan.

    The request carries the task target, a context summary, and the
    template catalog; the response must hold a schema-valid plan. Any
    transport or validation failure falls back to the deterministic
    planner and the plan is flagged with the reason.
    """

    name = "generative"

    def __init__(self, endpoint: str, timeout_s: float = 5.0):
        self.endpoint = endpoint
        self.timeout_s = timeout_s

    def plan(self, task_target: str, *, task_id: str,
             context: dict | None = None) -> WorkflowPlan:
        try:
            payload = self._request(task_target, context or {})
            plan = plan_from_payload(payload)
            plan = dataclasses.replace(plan, task_id=task_id,
                                       task_target=task_target,
                                       source="generative",
                                       fallback_reason=None)
            validate_plan(plan)
            return plan
        except Exception as exc:
            fallback = DeterministicPlanner().plan(task_target,
                                                   task_id=task_id,
                                                   context=context)
            return dataclasses.replace(
                fallback, source="fallback",
                fallback_reason=f"{type(exc).__name__}: {exc}")

    def _request(self, task_target: str, context: dict) -> dict:
        body = json.dumps({
            "task_target": task_target,
            "context": context,
            "templates": template_catalog()["templates"],
        }).encode("utf-8")
        req = urllib.request.Request(
            self.endpoint, data=body,
            headers={"Content-Type": "application/json"}, method="POST")
        with urllib.request.urlopen(req, timeout=self.timeout_s) as resp:
            doc = json.loads(resp.read().decode("utf-8"))
        if not isinstance(doc, dict) or "plan" not in doc:
            raise PlanError("planner response has no plan")
        return doc["plan"]


def make_planner(endpoint: str | None = None,
                 timeout_s: float = 5.0):
    """Generative planning stays off unless an endpoint is configured."""
    if endpoint:
        return GenerativePlanner(endpoint, timeout_s=timeout_s)
    return DeterministicPlanner()
