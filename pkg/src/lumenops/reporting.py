"""Report rendering: human text, structured JSON, CSV, and figures.

The structured payload is the golden-test surface: everything in it is
deterministic for a given seed except the keys listed in
VOLATILE_KEYS, which carry wall-clock durations.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

from .orchestrator import final_report_to_payload, trace_to_payload
from .pool import ContentKind
from .scenarios import ScenarioResult
from .topology import service_slices

REPORT_SCHEMA_VERSION = 1

# keys whose values vary between identical runs (wall-clock derived)
VOLATILE_KEYS = ("wall_time_s", "duration_s", "within_time_budget")


def structured_payload(result: ScenarioResult) -> dict:
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "scenario": result.spec.scenario_id,
        "title": result.spec.title,
        "task_target": result.spec.task_target,
        "seed": result.seed,
        "noise_sigma_db": result.noise_sigma_db,
        "exit_code": result.exit_code,
        "checks": [
            {"name": c.name, "passed": c.passed, "detail": c.detail}
            for c in result.checks
        ],
        "final_report": final_report_to_payload(result.report),
        "trace": trace_to_payload(result.trace),
    }


def strip_volatile(payload):
    """Drop wall-clock keys; what remains must be seed-deterministic."""
    if isinstance(payload, dict):
        return {k: strip_volatile(v) for k, v in payload.items()
                if k not in VOLATILE_KEYS}
    if isinstance(payload, list):
        return [strip_volatile(v) for v in payload]
    return payload


_SECTION_TITLES = {
    "performance_evaluation": "PERFORMANCE EVALUATION",
    "error_analysis": "ERROR ANALYSIS",
    "suggestions": "SUGGESTIONS",
}


def render_text(result: ScenarioResult) -> str:
    out = io.StringIO()
    w = out.write
    report = result.report
    w("LUMENOPS SCENARIO REPORT\n")
    w("========================\n")
    w(f"scenario   : {result.spec.scenario_id}  ({result.spec.title})\n")
    w(f"task       : {result.spec.task_target}\n")
    w(f"seed       : {result.seed}    noise sigma: "
      f"{result.noise_sigma_db} dB\n")
    w(f"planner    : {report.planner_source}")
    if report.fallback_reason:
        w(f"  (fell back: {report.fallback_reason})")
    w("\n")
    w(f"completion : {report.completion:.2f}    "
      f"wall time: {report.wall_time_s:.2f} s    "
      f"exit code: {result.exit_code}\n")
    w("\nWORKFLOW\n")
    for step in result.trace.steps:
        line = f"  [{step.status:9s}] {step.step_id} ({step.division})"
        if step.note:
            line += f" -- {step.note}"
        w(line + "\n")
    w("\nCHECKS\n")
    for check in result.checks:
        w(f"  [{'PASS' if check.passed else 'FAIL'}] "
          f"{check.name}: {check.detail}\n")
    for name, title in _SECTION_TITLES.items():
        claims = report.sections.get(name, ())
        w(f"\n{title}\n")
        if not claims:
            w("  (nothing to report)\n")
        for claim in claims:
            cite = f"  [entry {claim.entry_id}]" if claim.entry_id else ""
            w(f"  - {claim.text}{cite}\n")
    w(f"\ncited entries: {', '.join(map(str, report.cited_entry_ids))}\n")
    return out.getvalue()


def qot_csv(result: ScenarioResult) -> str:
    """Per-channel ground-truth GSNR before and after the run, plus the
    calibrated twin's estimate of the final state."""
    before = {ch.service_id: ch for ch in result.truth_before.channels}
    after = {ch.service_id: ch for ch in result.truth_after.channels}
    estimate = {}
    if after:
        est = result.twin.estimate_qot(result.field.list_services())
        estimate = {ch.service_id: ch.gsnr_db for ch in est.channels}
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow(["service_id", "path", "center_frequency_thz",
                     "rate_gbps", "launch_power_dbm", "gsnr_before_db",
                     "gsnr_after_db", "twin_estimate_db"])
    for sid in sorted(set(before) | set(after)):
        ch = after.get(sid) or before[sid]
        fmt = lambda v: "" if v is None else repr(v)
        writer.writerow([
            sid, "-".join(ch.path), repr(ch.center_frequency_thz),
            ch.rate_gbps, repr(ch.launch_power_dbm),
            fmt(before[sid].gsnr_db if sid in before else None),
            fmt(after[sid].gsnr_db if sid in after else None),
            fmt(estimate.get(sid)),
        ])
    return out.getvalue()


# ---------------------------------------------------------------------------
# figures

def _plt():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def _gsnr_figure(result: ScenarioResult, path: Path) -> None:
    plt = _plt()
    before = {ch.service_id: ch for ch in result.truth_before.channels}
    after = {ch.service_id: ch for ch in result.truth_after.channels}
    estimate = {}
    if after:
        est = result.twin.estimate_qot(result.field.list_services())
        estimate = {ch.service_id: ch.gsnr_db for ch in est.channels}
    fig, ax = plt.subplots(figsize=(8, 4.5))
    if before:
        xs = [ch.center_frequency_thz for ch in before.values()]
        ys = [ch.gsnr_db for ch in before.values()]
        ax.plot(xs, ys, "o", mfc="none", color="#777777", label="before")
    if after:
        xs = [ch.center_frequency_thz for ch in after.values()]
        ys = [ch.gsnr_db for ch in after.values()]
        ax.plot(xs, ys, "o", color="#1f77b4", label="after")
    if estimate:
        xs = [after[sid].center_frequency_thz for sid in estimate
              if sid in after]
        ys = [estimate[sid] for sid in estimate if sid in after]
        ax.plot(xs, ys, "x", color="#d62728", label="twin estimate")
    new_ids = set(after) - set(before)
    for sid in new_ids:
        ax.annotate(sid, (after[sid].center_frequency_thz,
                          after[sid].gsnr_db),
                    textcoords="offset points", xytext=(0, 8), ha="center",
                    fontsize=8)
    ax.set_xlabel("center frequency (THz)")
    ax.set_ylabel("GSNR (dB)")
    ax.set_title(f"{result.spec.scenario_id}: per-channel GSNR "
                 f"(seed {result.seed})")
    ax.grid(True, alpha=0.3)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def _calibration_figure(result: ScenarioResult, path: Path) -> None:
    plt = _plt()
    entries = [e for e in result.pool.entries()
               if e.kind is ContentKind.CALIBRATION_REPORT]
    fig, ax = plt.subplots(figsize=(8, 4))
    if entries:
        stages = entries[-1].content["stages"]
        ran = [(i, st) for i, st in enumerate(stages) if not st["skipped"]]
        xs = [i for i, _ in ran]
        ys = [st["residual_after_db"] for _, st in ran]
        ax.plot(xs, ys, "-o", color="#1f77b4")
        before = entries[-1].content["gsnr_error_before_db"]
        ax.axhline(before, color="#777777", ls="--", lw=1,
                   label=f"uncalibrated ({before:.2f} dB)")
        labels = [f"{st['name']}\nr{st['round_index']}" for _, st in ran]
        ax.set_xticks(xs)
        ax.set_xticklabels(labels, fontsize=7)
        ax.legend(fontsize=8)
    ax.set_ylabel("max |dGSNR| vs telemetry (dB)")
    ax.set_title(f"{result.spec.scenario_id}: calibration progress "
                 f"(seed {result.seed})")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def _margin_figure(result: ScenarioResult, path: Path) -> None:
    plt = _plt()
    from .qot import REQUIRED_GSNR_DB
    after = result.truth_after.channels
    fig, ax = plt.subplots(figsize=(8, 4))
    ids = [ch.service_id for ch in after]
    margins = [ch.gsnr_db - REQUIRED_GSNR_DB[ch.rate_gbps] for ch in after]
    ax.bar(ids, margins, color="#2ca02c")
    ax.axhline(1.0, color="#d62728", ls="--", lw=1, label="1.0 dB floor")
    ax.set_ylabel("margin over rate threshold (dB)")
    ax.set_title(f"{result.spec.scenario_id}: post-change margins "
                 f"(seed {result.seed})")
    ax.grid(True, axis="y", alpha=0.3)
    ax.legend(fontsize=8)
    plt.setp(ax.get_xticklabels(), rotation=45, ha="right", fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def _spectrum_figure(result: ScenarioResult, path: Path) -> None:
    plt = _plt()
    grid = result.field.truth_topology.grid
    before_ids = {ch.service_id for ch in result.truth_before.channels}
    services = sorted(result.field.list_services(),
                      key=lambda s: s.center_frequency_thz)
    fig, ax = plt.subplots(figsize=(9, 3.2))
    for svc in services:
        slices = service_slices(grid, svc)
        new = svc.service_id not in before_ids
        ax.broken_barh([(slices[0], len(slices))], (0.1, 0.8),
                       facecolors="#d62728" if new else "#1f77b4",
                       alpha=0.9 if new else 0.5)
        if new:
            ax.annotate(svc.service_id, (slices[0] + len(slices) / 2, 1.0),
                        ha="center", fontsize=8, color="#d62728")
    ax.set_xlim(0, grid.slice_count)
    ax.set_ylim(0, 1.4)
    ax.set_yticks([])
    ax.set_xlabel(f"slice index ({grid.slice_width_ghz} GHz each, "
                  f"from {grid.base_frequency_thz} THz)")
    ax.set_title(f"{result.spec.scenario_id}: spectrum occupancy "
                 f"(seed {result.seed})")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


_CASE_FIGURE = {
    "case1": ("calibration.png", _calibration_figure),
    "case2": ("margins.png", _margin_figure),
    "case3": ("spectrum.png", _spectrum_figure),
}


def write_figures(result: ScenarioResult, fig_dir: Path) -> list[Path]:
    fig_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    gsnr_path = fig_dir / "gsnr.png"
    _gsnr_figure(result, gsnr_path)
    paths.append(gsnr_path)
    name, draw = _CASE_FIGURE.get(result.spec.scenario_id,
                                  ("calibration.png", _calibration_figure))
    extra = fig_dir / name
    draw(result, extra)
    paths.append(extra)
    return paths


def write_report_files(result: ScenarioResult,
                       out_dir: str | Path) -> dict[str, Path]:
    """Write the full report bundle and return {artifact: path}."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files: dict[str, Path] = {}

    files["report_txt"] = out / "report.txt"
    files["report_txt"].write_text(render_text(result), encoding="utf-8")

    files["report_json"] = out / "report.json"
    files["report_json"].write_text(
        json.dumps(structured_payload(result), indent=2, sort_keys=True)
        + "\n", encoding="utf-8")

    files["qot_csv"] = out / "qot.csv"
    files["qot_csv"].write_text(qot_csv(result), encoding="utf-8")

    files["pool_jsonl"] = out / "pool.jsonl"
    files["pool_jsonl"].write_text(
        "\n".join(result.pool.dump_lines()) + "\n", encoding="utf-8")

    files["trace_json"] = out / "trace.json"
    files["trace_json"].write_text(
        json.dumps(trace_to_payload(result.trace), indent=2, sort_keys=True)
        + "\n", encoding="utf-8")

    for idx, fig in enumerate(write_figures(result, out / "figures")):
        files[f"figure_{idx}"] = fig
    return files
