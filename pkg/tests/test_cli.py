"""Command-line surface: flags, env overrides, exit codes, report files."""

import json
from pathlib import Path

import pytest
import yaml
from click.testing import CliRunner

from lumenops.cli import main

ARTIFACTS = ("report.txt", "report.json", "qot.csv", "pool.jsonl",
             "trace.json", "figures/gsnr.png", "figures/calibration.png")


@pytest.fixture()
def runner():
    return CliRunner()


def _write_services(path, rows):
    Path(path).write_text(yaml.safe_dump({"services": rows}),
                          encoding="utf-8")


# ---------------------------------------------------------------------------
# run

def test_run_structured_report(runner, tmp_path):
    out_dir = tmp_path / "bundle"
    result = runner.invoke(main, ["run", "case1", "--report", str(out_dir),
                                  "--format", "structured"])
    assert result.exit_code == 0, result.output
    doc = json.loads(result.stdout)
    assert doc["scenario"] == "case1"
    assert doc["exit_code"] == 0
    assert doc["final_report"]["completion"] == 1.0
    assert all(c["passed"] for c in doc["checks"])
    for name in ARTIFACTS:
        target = out_dir / name
        assert target.is_file() and target.stat().st_size > 0, name
    assert "report files under" in result.stderr


def test_run_text_report(runner, tmp_path):
    result = runner.invoke(main, ["run", "case3", "--report",
                                  str(tmp_path / "r"), "--format", "text"])
    assert result.exit_code == 0, result.output
    assert "LUMENOPS SCENARIO REPORT" in result.stdout
    assert "[PASS]" in result.stdout
    assert "[FAIL]" not in result.stdout
    assert (tmp_path / "r" / "figures" / "spectrum.png").is_file()


def test_run_rejects_unknown_scenario(runner, tmp_path):
    result = runner.invoke(main, ["run", "case9", "--report",
                                  str(tmp_path / "r")])
    assert result.exit_code == 2


def test_run_generative_needs_endpoint(runner, tmp_path):
    result = runner.invoke(main, ["run", "case1", "--planner", "generative",
                                  "--report", str(tmp_path / "r")])
    assert result.exit_code == 2
    assert "configuration error" in result.stderr


def test_run_rejects_negative_seed(runner, tmp_path):
    result = runner.invoke(main, ["run", "case1", "--seed", "-3",
                                  "--report", str(tmp_path / "r")])
    assert result.exit_code == 2
    assert "seed must be non-negative" in result.stderr


def test_run_seed_env_override(runner, tmp_path):
    result = runner.invoke(
        main, ["run", "case1", "--report", str(tmp_path / "r"),
               "--format", "structured"],
        env={"LUMENOPS_RUN_SEED": "4"})
    assert result.exit_code == 0, result.output
    assert json.loads(result.stdout)["seed"] == 4


# ---------------------------------------------------------------------------
# qot

QOT_HEADER = "service_id|path|center_thz|rate_gbps|gsnr_db|margin_db"


def test_qot_default_roster(runner):
    result = runner.invoke(main, ["qot"])
    assert result.exit_code == 0, result.output
    lines = result.stdout.strip().splitlines()
    assert lines[0] == QOT_HEADER
    assert len(lines) == 11
    for line in lines[1:]:
        fields = line.split("|")
        assert len(fields) == 6
        float(fields[4])  # gsnr parses


def test_qot_empty_roster(runner, tmp_path):
    roster = tmp_path / "empty.yaml"
    _write_services(roster, [])
    result = runner.invoke(main, ["qot", "--services", str(roster)])
    assert result.exit_code == 0
    assert result.stdout.strip() == QOT_HEADER


def test_qot_malformed_roster(runner, tmp_path):
    roster = tmp_path / "bad.yaml"
    roster.write_text("services: [{service_id: x,", encoding="utf-8")
    result = runner.invoke(main, ["qot", "--services", str(roster)])
    assert result.exit_code == 2
    assert "configuration error" in result.stderr


def test_qot_missing_row_fields(runner, tmp_path):
    roster = tmp_path / "short.yaml"
    _write_services(roster, [{"service_id": "x", "path": ["1", "2"]}])
    result = runner.invoke(main, ["qot", "--services", str(roster)])
    assert result.exit_code == 2


# ---------------------------------------------------------------------------
# rsa

def test_rsa_default_occupancy(runner):
    result = runner.invoke(main, ["rsa"])
    assert result.exit_code == 0, result.output
    assert "feasible: center 193.75 THz" in result.stdout
    assert "path 2-1" in result.stdout


def test_rsa_empty_spectrum(runner, tmp_path):
    roster = tmp_path / "none.yaml"
    _write_services(roster, [])
    result = runner.invoke(main, ["rsa", "--occupancy", str(roster)])
    assert result.exit_code == 0
    assert "center 191.05 THz" in result.stdout


def test_rsa_exhausted_spectrum(runner, tmp_path):
    rows = []
    for path in (["2", "1"], ["2", "5"], ["2", "3"]):
        for k in range(60):  # 60 channels x 8 slices = all 480 slices
            rows.append({
                "service_id": f"fill-{path[1]}-{k}",
                "path": path,
                "center_frequency_thz": round(191.05 + 0.1 * k, 2),
                "rate_gbps": 400,
            })
    roster = tmp_path / "full.yaml"
    _write_services(roster, rows)
    result = runner.invoke(main, ["rsa", "--occupancy", str(roster)])
    assert result.exit_code == 1
    assert "no plan" in result.stderr


def test_rsa_rejects_unknown_rate(runner):
    result = runner.invoke(main, ["rsa", "--rate", "600"])
    assert result.exit_code == 2


# ---------------------------------------------------------------------------
# pool

def test_pool_dump_is_json_lines(runner):
    result = runner.invoke(main, ["pool", "case1"])
    assert result.exit_code == 0, result.output
    lines = result.stdout.strip().splitlines()
    assert len(lines) > 10
    docs = [json.loads(line) for line in lines]
    kinds = {"entry" if "content" in d else "audit" for d in docs}
    assert kinds == {"entry", "audit"}
    # entries first, then the audit log
    first_audit = next(i for i, d in enumerate(docs) if "content" not in d)
    assert all("content" not in d for d in docs[first_audit:])


def test_help_shows_subcommands(runner):
    result = runner.invoke(main, ["--help"])
    assert result.exit_code == 0
    for name in ("run", "qot", "rsa", "pool"):
        assert name in result.stdout
