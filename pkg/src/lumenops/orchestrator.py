"""Workflow execution over the shared pool and report consolidation.

The director posts one assignment entry per step, the owning division
claims it, dispatches its experts, reviews each result, and posts the
accepted payloads to the step's receivers. A rejected review is retried
once; a step that still fails takes its dependents down with it while
independent steps keep running. At the end the director folds the pool
back into a final report in which every number must be traceable to the
entry it came from.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Sequence

from .agents import (Environment, InputRef, PlanStep, TaskMessage,
                     WorkflowPlan, dispatch, make_planner, review,
                     step_to_payload, validate_plan)
from .errors import FactualityError
from .pool import ContentKind, EntryStatus, PoolEntry, SharedPool
from .roles import DIRECTOR, AgentRole

TIME_BUDGET_S = 20.0
SCHEMA_VERSION = 1

SECTION_NAMES = ("performance_evaluation", "error_analysis", "suggestions")

# report keys that legitimately differ between identical runs
VOLATILE_REPORT_KEYS = ("wall_time_s", "within_time_budget")


def generate_workflow(task_target: str, *, task_id: str,
                      planner=None, context: dict | None = None
                      ) -> WorkflowPlan:
    planner = planner or make_planner()
    plan = planner.plan(task_target, task_id=task_id, context=context)
    validate_plan(plan)
    return plan


# ---------------------------------------------------------------------------
# execution

@dataclass(frozen=True)
class DispatchRecord:
    expert: str
    attempt: int
    status: str
    reason: str | None
    accepted: bool
    review_reason: str
    notes: str = ""


@dataclass(frozen=True)
class StepTrace:
    step_id: str
    division: str
    status: str  # Completed | Failed
    assignment_entry_id: int
    result_entry_ids: tuple[int, ...]
    dispatches: tuple[DispatchRecord, ...]
    note: str
    duration_s: float


@dataclass(frozen=True)
class ExecutionTrace:
    task_id: str
    template_id: str
    task_target: str
    planner_source: str
    fallback_reason: str | None
    steps: tuple[StepTrace, ...]
    wall_time_s: float

    @property
    def completion(self) -> float:
        if not self.steps:
            return 0.0
        done = sum(1 for s in self.steps if s.status == "Completed")
        return done / len(self.steps)


def trace_to_payload(trace: ExecutionTrace) -> dict:
    return {
        "task_id": trace.task_id,
        "template_id": trace.template_id,
        "task_target": trace.task_target,
        "planner_source": trace.planner_source,
        "fallback_reason": trace.fallback_reason,
        "completion": trace.completion,
        "wall_time_s": trace.wall_time_s,
        "steps": [
            {
                "step_id": s.step_id,
                "division": s.division,
                "status": s.status,
                "assignment_entry_id": s.assignment_entry_id,
                "result_entry_ids": list(s.result_entry_ids),
                "note": s.note,
                "duration_s": s.duration_s,
                "dispatches": [
                    {"expert": d.expert, "attempt": d.attempt,
                     "status": d.status, "reason": d.reason,
                     "accepted": d.accepted,
                     "review_reason": d.review_reason, "notes": d.notes}
                    for d in s.dispatches
                ],
            }
            for s in trace.steps
        ],
    }


def _gather_inputs(pool: SharedPool, division: AgentRole,
                   task_id: str) -> tuple[InputRef, ...]:
    """Everything the division may read for this task, as input refs.

    Assignment and final-report entries are bookkeeping, not data, and
    stay out of the expert's view.
    """
    refs = []
    for entry in pool.query(division, task_id=task_id):
        if entry.kind in (ContentKind.WORKFLOW_PLAN,
                          ContentKind.FINAL_REPORT):
            continue
        step_id = entry.instruction.split(":", 1)[0].strip()
        refs.append(InputRef(entry_id=entry.entry_id, kind=entry.kind,
                             step_id=step_id, payload=entry.content))
    return tuple(refs)


def execute(plan: WorkflowPlan, env: Environment) -> ExecutionTrace:
    """Run every step of the plan in order, sequentially."""
    validate_plan(plan)
    t0 = time.monotonic()
    pool = env.pool
    failed: set[str] = set()
    traces: list[StepTrace] = []
    for step in plan.steps:
        t_step = time.monotonic()
        division = AgentRole(step.division)
        assignment_id = pool.put(
            DIRECTOR, task_id=plan.task_id,
            instruction=f"{step.step_id}: {step.goal}",
            kind=ContentKind.WORKFLOW_PLAN,
            content=step_to_payload(step),
            receiver=division)
        pool.update_status(division, assignment_id, EntryStatus.CLAIMED)

        bad_deps = sorted(d for d in step.depends_on if d in failed)
        if bad_deps:
            pool.update_status(division, assignment_id, EntryStatus.FAILED)
            failed.add(step.step_id)
            traces.append(StepTrace(
                step_id=step.step_id, division=step.division,
                status="Failed", assignment_entry_id=assignment_id,
                result_entry_ids=(), dispatches=(),
                note=f"aborted: dependency {bad_deps[0]!r} failed",
                duration_s=time.monotonic() - t_step))
            continue

        dispatches: list[DispatchRecord] = []
        result_ids: list[int] = []
        failure: str | None = None
        for produce in step.produces:
            params = dict(step.params)
            if produce.action is not None:
                params["action"] = produce.action
            message = TaskMessage(
                task_id=plan.task_id, step_id=step.step_id,
                instruction=step.goal, expected_output_kind=produce.kind,
                issuer=step.division,
                inputs=_gather_inputs(pool, division, plan.task_id),
                params=params)
            accepted = False
            result = None
            for attempt in (1, 2):
                result = dispatch(division, produce.expert, message, env)
                outcome = review(message, result)
                dispatches.append(DispatchRecord(
                    expert=produce.expert, attempt=attempt,
                    status=result.status, reason=result.reason,
                    accepted=outcome.accepted,
                    review_reason=outcome.reason, notes=result.notes))
                if outcome.accepted:
                    accepted = True
                    break
            if not accepted:
                failure = (dispatches[-1].review_reason
                           or dispatches[-1].reason or "review rejected")
                break
            payload = result.output
            if env.tamper is not None:
                replaced = env.tamper(step.step_id, produce.kind, payload)
                if replaced is not None:
                    payload = replaced
            for receiver in produce.receivers:
                result_ids.append(pool.put(
                    division, task_id=plan.task_id,
                    instruction=f"{step.step_id}: {step.goal}",
                    kind=produce.kind, content=payload,
                    receiver=AgentRole(receiver)))

        if failure is None:
            pool.update_status(division, assignment_id,
                               EntryStatus.COMPLETED)
            status, note = "Completed", ""
        else:
            pool.update_status(division, assignment_id, EntryStatus.FAILED)
            failed.add(step.step_id)
            status, note = "Failed", failure
        traces.append(StepTrace(
            step_id=step.step_id, division=step.division, status=status,
            assignment_entry_id=assignment_id,
            result_entry_ids=tuple(result_ids),
            dispatches=tuple(dispatches), note=note,
            duration_s=time.monotonic() - t_step))
    return ExecutionTrace(
        task_id=plan.task_id, template_id=plan.template_id,
        task_target=plan.task_target, planner_source=plan.source,
        fallback_reason=plan.fallback_reason, steps=tuple(traces),
        wall_time_s=time.monotonic() - t0)


# ---------------------------------------------------------------------------
# final report

@dataclass(frozen=True)
class Claim:
    """One statement in a report section.

    Numeric claims carry the entry they were read from; the factuality
    check verifies the value is really in that entry. Text-only claims
    carry no value and need no citation.
    """

    label: str
    text: str
    value: object = None
    unit: str = ""
    entry_id: int | None = None


@dataclass(frozen=True)
class FinalReport:
    task_id: str
    template_id: str
    task_target: str
    sections: dict[str, tuple[Claim, ...]]
    cited_entry_ids: tuple[int, ...]
    completion: float
    planner_source: str
    fallback_reason: str | None
    wall_time_s: float
    within_time_budget: bool
    schema_version: int = SCHEMA_VERSION


def final_report_to_payload(report: FinalReport) -> dict:
    return {
        "schema_version": report.schema_version,
        "task_id": report.task_id,
        "template_id": report.template_id,
        "task_target": report.task_target,
        "completion": report.completion,
        "planner_source": report.planner_source,
        "fallback_reason": report.fallback_reason,
        "cited_entry_ids": list(report.cited_entry_ids),
        "sections": {
            name: [
                {"label": c.label, "text": c.text, "value": c.value,
                 "unit": c.unit, "entry_id": c.entry_id}
                for c in claims
            ]
            for name, claims in report.sections.items()
        },
        "wall_time_s": report.wall_time_s,
        "within_time_budget": report.within_time_budget,
    }


def _contains_value(content, value) -> bool:
    if isinstance(content, dict):
        return any(_contains_value(v, value) for v in content.values())
    if isinstance(content, (list, tuple)):
        return any(_contains_value(v, value) for v in content)
    if isinstance(value, bool) or isinstance(content, bool):
        return content is value
    if isinstance(value, (int, float)) and isinstance(content, (int, float)):
        return content == value
    return content == value


def check_factuality(sections: dict[str, Sequence[Claim]],
                     pool: SharedPool) -> None:
    """Every numeric claim must quote a value present in its cited entry."""
    for name, claims in sections.items():
        for claim in claims:
            numeric = isinstance(claim.value, (int, float)) \
                and not isinstance(claim.value, bool)
            if claim.entry_id is None:
                if numeric:
                    raise FactualityError(
                        f"{name}: claim {claim.label!r} quotes "
                        f"{claim.value} without citing an entry")
                continue
            entry = pool.entry(claim.entry_id)
            if entry is None:
                raise FactualityError(
                    f"{name}: claim {claim.label!r} cites entry "
                    f"{claim.entry_id} which does not exist")
            if claim.value is not None \
                    and not _contains_value(entry.content, claim.value):
                raise FactualityError(
                    f"{name}: claim {claim.label!r} value {claim.value!r} "
                    f"not found in entry {claim.entry_id}")


def _fmt(value, digits=2) -> str:
    if isinstance(value, float):
        return f"{value:.{digits}f}"
    return str(value)


def _latest_entry(entries: Sequence[PoolEntry], kind: ContentKind,
                  step_id: str | None = None) -> PoolEntry | None:
    found = [e for e in entries if e.kind is kind
             and (step_id is None
                  or e.instruction.split(":", 1)[0].strip() == step_id)]
    return found[-1] if found else None


def _calibration_claims(entries) -> list[Claim]:
    calib = _latest_entry(entries, ContentKind.CALIBRATION_REPORT)
    if calib is None:
        return [Claim("calibration", "no calibration report was produced")]
    before = calib.content.get("gsnr_error_before_db")
    after = calib.content.get("final_max_gsnr_error_db")
    return [
        Claim("gsnr_error_before_db",
              f"uncalibrated twin GSNR error was {_fmt(before, 3)} dB "
              "at worst", value=before, unit="dB", entry_id=calib.entry_id),
        Claim("final_max_gsnr_error_db",
              f"calibrated twin GSNR error is {_fmt(after, 3)} dB at worst",
              value=after, unit="dB", entry_id=calib.entry_id),
    ]


def _prediction_claims(analysis: PoolEntry) -> list[Claim]:
    pred = analysis.content.get("prediction") or {}
    claims = []
    worst = pred.get("max_abs_error_db")
    if worst is not None:
        claims.append(Claim(
            "max_abs_prediction_error_db",
            f"largest gap between estimate and telemetry is "
            f"{_fmt(worst, 3)} dB", value=worst, unit="dB",
            entry_id=analysis.entry_id))
    mean = pred.get("mean_abs_error_db")
    if mean is not None:
        claims.append(Claim(
            "mean_abs_prediction_error_db",
            f"mean estimate-to-telemetry gap is {_fmt(mean, 3)} dB",
            value=mean, unit="dB", entry_id=analysis.entry_id))
    return claims


def _qot_sections(entries) -> dict[str, list[Claim]]:
    analysis = _latest_entry(entries, ContentKind.ANALYSIS_REPORT,
                             "analyze_and_report")
    perf: list[Claim] = []
    errors: list[Claim] = []
    suggest: list[Claim] = []
    if analysis is None:
        perf.append(Claim("analysis", "no analysis was produced"))
        return {"performance_evaluation": perf, "error_analysis": errors,
                "suggestions": suggest}
    channels = analysis.content.get("channels", [])
    count = analysis.content.get("channel_count")
    perf.append(Claim(
        "channel_count", f"{count} channels estimated",
        value=count, entry_id=analysis.entry_id))
    for ch in channels:
        perf.append(Claim(
            f"gsnr_db[{ch['service_id']}]",
            f"{ch['service_id']} at {ch['center_frequency_thz']} THz: "
            f"GSNR {_fmt(ch['gsnr_db'])} dB",
            value=ch["gsnr_db"], unit="dB", entry_id=analysis.entry_id))
    mean = analysis.content.get("mean_gsnr_db")
    if mean is not None:
        perf.append(Claim("mean_gsnr_db",
                          f"mean GSNR {_fmt(mean)} dB across the comb",
                          value=mean, unit="dB", entry_id=analysis.entry_id))
    errors.extend(_calibration_claims(entries))
    errors.extend(_prediction_claims(analysis))
    margins = [(ch["service_id"], ch["margin_db"]) for ch in channels
               if ch.get("margin_db") is not None]
    if margins:
        worst_id, worst = min(margins, key=lambda kv: kv[1])
        suggest.append(Claim(
            "min_margin_db",
            f"smallest margin is {_fmt(worst)} dB on {worst_id}; "
            + ("no action needed" if worst >= 1.0
               else "consider re-routing or a lower rate"),
            value=worst, unit="dB", entry_id=analysis.entry_id))
    return {"performance_evaluation": perf, "error_analysis": errors,
            "suggestions": suggest}


def _reconfig_sections(entries) -> dict[str, list[Claim]]:
    analysis = _latest_entry(entries, ContentKind.ANALYSIS_REPORT,
                             "analyze_and_report")
    perf: list[Claim] = []
    errors: list[Claim] = []
    suggest: list[Claim] = []
    if analysis is None:
        perf.append(Claim("analysis", "no analysis was produced"))
        return {"performance_evaluation": perf, "error_analysis": errors,
                "suggestions": suggest}
    content = analysis.content
    perf.append(Claim(
        "dropped_count",
        f"{content.get('dropped_count')} services dropped",
        value=content.get("dropped_count"), entry_id=analysis.entry_id))
    perf.append(Claim(
        "retained_count",
        f"{content.get('retained_count')} services retained",
        value=content.get("retained_count"), entry_id=analysis.entry_id))
    for row in content.get("survivors", []):
        if row.get("delta_db") is None:
            continue
        perf.append(Claim(
            f"delta_db[{row['service_id']}]",
            f"{row['service_id']} GSNR moved {_fmt(row['delta_db'], 3)} dB "
            "after the drop",
            value=row["delta_db"], unit="dB", entry_id=analysis.entry_id))
    margin = content.get("post_min_margin_db")
    if margin is not None:
        perf.append(Claim(
            "post_min_margin_db",
            f"worst surviving margin is {_fmt(margin)} dB",
            value=margin, unit="dB", entry_id=analysis.entry_id))
    errors.extend(_calibration_claims(entries))
    errors.extend(_prediction_claims(analysis))
    applied = content.get("applied")
    decision = content.get("decision")
    suggest.append(Claim(
        "decision",
        f"resource analysis decided to {decision}; the change was "
        + ("applied" if applied else "not applied"),
        value=decision, entry_id=analysis.entry_id))
    return {"performance_evaluation": perf, "error_analysis": errors,
            "suggestions": suggest}


def _upgrade_sections(entries) -> dict[str, list[Claim]]:
    analysis = _latest_entry(entries, ContentKind.ANALYSIS_REPORT,
                             "analyze_and_report")
    perf: list[Claim] = []
    errors: list[Claim] = []
    suggest: list[Claim] = []
    if analysis is None:
        perf.append(Claim("analysis", "no analysis was produced"))
        return {"performance_evaluation": perf, "error_analysis": errors,
                "suggestions": suggest}
    content = analysis.content
    for row in content.get("new_services", []):
        perf.append(Claim(
            f"new_gsnr_db[{row['service_id']}]",
            f"new service {row['service_id']} at "
            f"{row['center_frequency_thz']} THz reads "
            f"{_fmt(row['gsnr_db'])} dB GSNR",
            value=row["gsnr_db"], unit="dB", entry_id=analysis.entry_id))
        if row.get("margin_db") is not None:
            perf.append(Claim(
                f"new_margin_db[{row['service_id']}]",
                f"its margin over the {row['rate_gbps']}G threshold is "
                f"{_fmt(row['margin_db'])} dB",
                value=row["margin_db"], unit="dB",
                entry_id=analysis.entry_id))
    degradation = content.get("max_existing_degradation_db")
    if degradation is not None:
        errors.append(Claim(
            "max_existing_degradation_db",
            f"worst GSNR degradation on existing channels is "
            f"{_fmt(degradation, 3)} dB",
            value=degradation, unit="dB", entry_id=analysis.entry_id))
    errors.extend(_calibration_claims(entries))
    predicted = content.get("predicted_min_margin_db")
    if predicted is not None:
        errors.append(Claim(
            "predicted_min_margin_db",
            f"rehearsal predicted a {_fmt(predicted)} dB minimum margin",
            value=predicted, unit="dB", entry_id=analysis.entry_id))
    applied = content.get("applied")
    suggest.append(Claim(
        "applied",
        "the upgrade was applied to the network" if applied
        else "the upgrade was not applied",
        value=bool(applied), entry_id=analysis.entry_id))
    return {"performance_evaluation": perf, "error_analysis": errors,
            "suggestions": suggest}


_SECTION_BUILDERS = {
    "PLAN_QOT": _qot_sections,
    "OP_RECONFIG": _reconfig_sections,
    "UPGRADE": _upgrade_sections,
}


def summarize(trace: ExecutionTrace, pool: SharedPool) -> FinalReport:
    """Fold the pool back into a final report.

    Construction runs the factuality check and refuses to produce a
    report whose numbers cannot be traced to pool entries.
    """
    entries = pool.query(DIRECTOR, task_id=trace.task_id)
    builder = _SECTION_BUILDERS.get(trace.template_id)
    if builder is None:
        sections = {"performance_evaluation": [
            Claim("template", f"unknown template {trace.template_id!r}")],
            "error_analysis": [], "suggestions": []}
    else:
        sections = builder(entries)
    for step in trace.steps:
        if step.status == "Failed":
            sections["error_analysis"].append(Claim(
                f"step_failed[{step.step_id}]",
                f"step {step.step_id} failed: {step.note or 'rejected'}"))
    check_factuality(sections, pool)
    cited = sorted({c.entry_id for claims in sections.values()
                    for c in claims if c.entry_id is not None})
    return FinalReport(
        task_id=trace.task_id,
        template_id=trace.template_id,
        task_target=trace.task_target,
        sections={name: tuple(claims)
                  for name, claims in sections.items()},
        cited_entry_ids=tuple(cited),
        completion=trace.completion,
        planner_source=trace.planner_source,
        fallback_reason=trace.fallback_reason,
        wall_time_s=trace.wall_time_s,
        within_time_budget=trace.wall_time_s <= TIME_BUDGET_S,
    )
