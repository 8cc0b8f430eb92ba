"""The three lifecycle scenarios, runnable end to end.

Each scenario pins an operator intent, a service roster, and the checks
its run must satisfy. The rosters are reconstructions: channel centers
and paths are chosen to be consistent with the stated facts (ten
signals over three paths into site 1; eight ring signals at 194.3 to
195.0 THz; a fully packed low band that forces the 800G add to land at
193.75 THz).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

from .agents import Environment
from .errors import ConfigError, LumenopsError
from .field import FieldNetwork, init_field
from .orchestrator import (ExecutionTrace, FinalReport, execute,
                           generate_workflow, summarize)
from .pool import SharedPool
from .qot import REQUIRED_GSNR_DB, QotReport
from .security import SecurityPolicy
from .topology import NetworkTopology, Service, default_topology, make_service
from .twin import DigitalTwin

DEFAULT_SEED = 0
DEFAULT_NOISE_SIGMA_DB = 0.1

CASE1_MAX_CAL_ERROR_DB = 0.25
CASE2_MAX_PREDICTION_ERROR_DB = 0.40
CASE3_MIN_MARGIN_DB = 1.0
CASE3_MAX_DEGRADATION_DB = 0.5
CASE3_EXPECTED_CENTER_THZ = 193.75


def case1_services() -> list[Service]:
    rows = [
        ("c1-01", ("3", "4", "5", "6", "1"), 191.05),
        ("c1-02", ("3", "4", "5", "6", "1"), 191.55),
        ("c1-03", ("3", "4", "5", "6", "1"), 192.05),
        ("c1-04", ("3", "4", "5", "6", "1"), 192.45),
        ("c1-05", ("4", "5", "6", "1"), 192.85),
        ("c1-06", ("4", "5", "6", "1"), 193.25),
        ("c1-07", ("4", "5", "6", "1"), 193.65),
        ("c1-08", ("5", "6", "1"), 194.05),
        ("c1-09", ("5", "6", "1"), 194.55),
        ("c1-10", ("5", "6", "1"), 194.95),
    ]
    return [make_service(sid, path, f, 400) for sid, path, f in rows]


def case2_services() -> list[Service]:
    rows = [
        ("pa-1", ("2", "3", "4"), 194.3, False),
        ("pa-2", ("2", "3", "4"), 194.4, False),
        ("pa-3", ("2", "3", "4"), 194.5, False),
        ("pb-1", ("3", "4", "5", "2"), 194.6, True),
        ("pb-2", ("3", "4", "5", "2"), 194.7, True),
        ("pc-1", ("4", "5", "2"), 194.8, False),
        ("pc-2", ("4", "5", "2"), 194.9, False),
        ("pc-3", ("4", "5", "2"), 195.0, False),
    ]
    return [make_service(sid, path, f, 100, protected=prot)
            for sid, path, f, prot in rows]


def case3_services() -> list[Service]:
    # fill 191.0-193.7 THz so first-fit lands the add at 193.75
    path = ("2", "1")
    services = [
        make_service(f"bg-{k + 1:02d}", path, 191.05 + 0.1 * k, 400)
        for k in range(20)
    ]
    services.append(make_service("c100-1", path, 193.05, 100))
    services.append(make_service("c100-2", path, 193.15, 100))
    for k in range(5):
        services.append(make_service(f"c400-{k + 1}", path,
                                     193.25 + 0.1 * k, 400))
    return services


CASE2_PATH_SERVICES = {
    "A": ("pa-1", "pa-2", "pa-3"),
    "B": ("pb-1", "pb-2"),
    "C": ("pc-1", "pc-2", "pc-3"),
}


@dataclass(frozen=True)
class ScenarioSpec:
    scenario_id: str
    title: str
    task_target: str
    build_services: Callable[[], list[Service]]
    protected_ids: tuple[str, ...] = ()
    env_params: dict = None  # type: ignore[assignment]

    def __post_init__(self):
        if self.env_params is None:
            object.__setattr__(self, "env_params", {})


SCENARIOS = {
    "case1": ScenarioSpec(
        scenario_id="case1",
        title="DT building and QoT estimation",
        task_target=(
            "to ensure the accuracy of the optical network modeling and "
            "provide the QoT estimation results of the current 10 signals"),
        build_services=case1_services,
    ),
    "case2": ScenarioSpec(
        scenario_id="case2",
        title="Channel drop reconfiguration",
        task_target=(
            "to analyze whether the margin is sufficient for dropping "
            "signals on Path A and Path C and retaining signals on Path B, "
            "and if the conditions are met, to perform signal dropping"),
        build_services=case2_services,
        protected_ids=("pb-1", "pb-2"),
        env_params={"path_services": {k: list(v) for k, v in
                                      CASE2_PATH_SERVICES.items()}},
    ),
    "case3": ScenarioSpec(
        scenario_id="case3",
        title="800G capacity upgrade",
        task_target=(
            "to help analyze the feasibility for upgrading the system, "
            "find an appropriate channel to add an 800Gb/s signal"),
        build_services=case3_services,
        env_params={"upgrade_src": "2", "upgrade_dst": "1"},
    ),
}


def get_scenario(scenario_id: str) -> ScenarioSpec:
    try:
        return SCENARIOS[scenario_id]
    except KeyError:
        raise ConfigError(
            f"unknown scenario {scenario_id!r}; expected one of "
            f"{', '.join(sorted(SCENARIOS))}") from None


def services_from_doc(doc) -> list[Service]:
    """Service roster from a parsed YAML document.

    Accepts {"services": [...]} or a bare list; each row needs
    service_id, path, center_frequency_thz, and rate_gbps, the rest is
    defaulted like make_service does.
    """
    if doc is None:
        return []
    rows = doc.get("services", []) if isinstance(doc, dict) else doc
    if rows is None:
        return []
    if not isinstance(rows, list):
        raise ConfigError("services document must hold a list")
    services = []
    for idx, row in enumerate(rows):
        if not isinstance(row, dict):
            raise ConfigError(f"service row {idx} is not a mapping")
        try:
            services.append(make_service(
                row["service_id"], tuple(row["path"]),
                float(row["center_frequency_thz"]), int(row["rate_gbps"]),
                width_slices=int(row.get("width_slices", 8)),
                launch_power_dbm=float(row.get("launch_power_dbm", 0.0)),
                protected=bool(row.get("protected", False))))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"service row {idx}: {exc}") from exc
        except LumenopsError as exc:
            raise ConfigError(f"service row {idx}: {exc}") from exc
    return services


def load_services_file(path) -> list[Service]:
    import yaml

    try:
        with open(path, "r", encoding="utf-8") as handle:
            doc = yaml.safe_load(handle)
    except OSError as exc:
        raise ConfigError(f"cannot read services file: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"services file parse error: {exc}") from exc
    return services_from_doc(doc)


@dataclass(frozen=True)
class ScenarioCheck:
    name: str
    passed: bool
    detail: str


@dataclass(frozen=True)
class ScenarioResult:
    spec: ScenarioSpec
    seed: int
    noise_sigma_db: float
    exit_code: int
    trace: ExecutionTrace
    report: FinalReport
    checks: tuple[ScenarioCheck, ...]
    pool: SharedPool
    field: FieldNetwork
    twin: DigitalTwin
    truth_before: QotReport
    truth_after: QotReport

    @property
    def passed(self) -> bool:
        return self.exit_code == 0


def _max_abs_error(estimate: QotReport, truth: QotReport) -> float:
    truth_by_id = {ch.service_id: ch.gsnr_db for ch in truth.channels}
    return max(abs(ch.gsnr_db - truth_by_id[ch.service_id])
               for ch in estimate.channels)


def _case1_checks(env: Environment, trace, report,
                  truth_after: QotReport) -> list[ScenarioCheck]:
    services = env.field.list_services()
    calibrated = _max_abs_error(env.twin.estimate_qot(services), truth_after)
    uncalibrated = _max_abs_error(
        DigitalTwin(env.topology).estimate_qot(services), truth_after)
    return [
        ScenarioCheck(
            "calibrated_error",
            calibrated <= CASE1_MAX_CAL_ERROR_DB,
            f"calibrated max |dGSNR| {calibrated:.4f} dB vs bound "
            f"{CASE1_MAX_CAL_ERROR_DB}"),
        ScenarioCheck(
            "calibration_improves",
            calibrated < uncalibrated,
            f"uncalibrated {uncalibrated:.4f} dB > calibrated "
            f"{calibrated:.4f} dB"),
    ]


def _analysis_content(report: FinalReport, pool: SharedPool) -> dict:
    for claims in report.sections.values():
        for claim in claims:
            if claim.entry_id is None:
                continue
            entry = pool.entry(claim.entry_id)
            if entry is not None and entry.content.get("type") in (
                    "qot", "reconfig", "upgrade"):
                return entry.content
    return {}


def _case2_checks(env: Environment, trace, report,
                  truth_before: QotReport,
                  truth_after: QotReport) -> list[ScenarioCheck]:
    checks = []
    content = _analysis_content(report, env.pool)
    worst = (content.get("prediction") or {}).get("max_abs_error_db")
    checks.append(ScenarioCheck(
        "prediction_error",
        worst is not None and worst <= CASE2_MAX_PREDICTION_ERROR_DB,
        f"post-drop prediction error {worst} dB vs bound "
        f"{CASE2_MAX_PREDICTION_ERROR_DB}"))
    before = {ch.service_id: ch.gsnr_db for ch in truth_before.channels}
    survivors = {ch.service_id: ch.gsnr_db for ch in truth_after.channels}
    regressed = [sid for sid, gsnr in survivors.items()
                 if gsnr < before.get(sid, gsnr)]
    checks.append(ScenarioCheck(
        "survivor_monotonicity",
        not regressed and set(survivors) == {"pb-1", "pb-2"},
        "retained channels "
        f"{sorted(survivors)} all at or above pre-drop GSNR"
        if not regressed else f"regressed: {sorted(regressed)}"))
    dropped = sorted(s.service_id for s in env.field.dropped_services())
    checks.append(ScenarioCheck(
        "dropped_set",
        dropped == sorted(CASE2_PATH_SERVICES["A"]
                          + CASE2_PATH_SERVICES["C"]),
        f"dropped {dropped}"))
    return checks


def _case3_checks(env: Environment, trace, report,
                  truth_before: QotReport,
                  truth_after: QotReport) -> list[ScenarioCheck]:
    checks = []
    before_ids = {ch.service_id for ch in truth_before.channels}
    new = [ch for ch in truth_after.channels
           if ch.service_id not in before_ids]
    if len(new) != 1:
        checks.append(ScenarioCheck(
            "service_added", False, f"{len(new)} services added, wanted 1"))
        return checks
    added = new[0]
    checks.append(ScenarioCheck(
        "center_frequency",
        abs(added.center_frequency_thz - CASE3_EXPECTED_CENTER_THZ) < 1e-9,
        f"new service at {added.center_frequency_thz} THz, expected "
        f"{CASE3_EXPECTED_CENTER_THZ}"))
    margin_db = added.gsnr_db - REQUIRED_GSNR_DB[800]
    checks.append(ScenarioCheck(
        "post_add_margin",
        margin_db >= CASE3_MIN_MARGIN_DB,
        f"800G margin {margin_db:.3f} dB vs floor {CASE3_MIN_MARGIN_DB}"))
    before = {ch.service_id: ch.gsnr_db for ch in truth_before.channels}
    degradation = max(
        before[ch.service_id] - ch.gsnr_db
        for ch in truth_after.channels if ch.service_id in before)
    checks.append(ScenarioCheck(
        "existing_degradation",
        degradation <= CASE3_MAX_DEGRADATION_DB,
        f"worst existing-channel degradation {degradation:.4f} dB vs "
        f"bound {CASE3_MAX_DEGRADATION_DB}"))
    return checks


def run_scenario(scenario_id: str, *,
                 topology: NetworkTopology | None = None,
                 seed: int = DEFAULT_SEED,
                 noise_sigma_db: float = DEFAULT_NOISE_SIGMA_DB,
                 planner=None, perturb: bool = True) -> ScenarioResult:
    """Build the field, run the workflow, and judge the outcome.

    Exit code 0 means the run completed and every scenario bound held;
    1 means a failed step or a missed bound. Configuration problems
    raise ConfigError before anything runs (the CLI maps that to 2).
    """
    spec = get_scenario(scenario_id)
    topology = topology if topology is not None else default_topology()
    if seed < 0:
        raise ConfigError("seed must be non-negative")
    if noise_sigma_db < 0:
        raise ConfigError("noise sigma must be non-negative")
    services = spec.build_services()
    field = init_field(topology, services, seed=seed,
                       noise_sigma_db=noise_sigma_db, perturb=perturb)
    env = Environment(
        field=field,
        twin=DigitalTwin(topology),
        pool=SharedPool(),
        topology=topology,
        policy=SecurityPolicy.for_topology(topology, spec.protected_ids),
        params=dict(spec.env_params),
    )
    plan = generate_workflow(spec.task_target,
                             task_id=f"{spec.scenario_id}-seed{seed}",
                             planner=planner)
    truth_before = field.noise_free_report()
    trace = execute(plan, env)
    truth_after = field.noise_free_report()
    report = summarize(trace, env.pool)

    checks = [ScenarioCheck(
        "completion", trace.completion == 1.0,
        f"{sum(1 for s in trace.steps if s.status == 'Completed')}"
        f"/{len(trace.steps)} steps completed")]
    if trace.completion == 1.0:
        if spec.scenario_id == "case1":
            checks += _case1_checks(env, trace, report, truth_after)
        elif spec.scenario_id == "case2":
            checks += _case2_checks(env, trace, report, truth_before,
                                    truth_after)
        elif spec.scenario_id == "case3":
            checks += _case3_checks(env, trace, report, truth_before,
                                    truth_after)
    exit_code = 0 if all(c.passed for c in checks) else 1
    return ScenarioResult(
        spec=spec, seed=seed, noise_sigma_db=noise_sigma_db,
        exit_code=exit_code, trace=trace, report=report,
        checks=tuple(checks), pool=env.pool, field=field, twin=env.twin,
        truth_before=truth_before, truth_after=truth_after)
