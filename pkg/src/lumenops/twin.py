"""Digital twin: a calibratable model of the plant plus rehearsal.

Calibration runs four stages against averaged telemetry, one physical
cause per stage: span loss against OMS output powers, amplifier gain
and tilt against per-channel received powers, noise figure against the
GSNR of channels that are not NLI dominated, and finally a global
nonlinear coefficient against all GSNR readings. Every knob is fitted
by scalar golden-section search inside hard physical bounds and a new
value is kept only if it strictly improves the stage objective; a stage
that makes its own worst-case residual larger is reverted whole.
"""

from __future__ import annotations

import copy
import dataclasses
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import yaml

from .errors import CalibrationError, CommandError, ConfigError, ServiceError
from .field import (
    NmsCommand,
    Telemetry,
    TelemetrySnapshot,
    command_digest,
    service_from_payload,
    services_from_telemetry,
)
from .qot import MarginReport, QotReport, assert_no_overlap, margin, propagate
from .topology import (
    NetworkTopology,
    Service,
    ServiceState,
    load_topology,
    topology_to_doc,
    validate_service,
)
from .units import mw_to_dbm

ATTEN_BOUNDS_DB_KM = (0.15, 0.25)
NF_BOUNDS_DB = (3.0, 8.0)
CONN_BOUNDS_DB = (0.0, 2.0)
GAMMA_BOUNDS = (0.8, 1.8)
GAIN_HALF_RANGE_DB = 5.0
TILT_BOUNDS_DB = (-2.0, 2.0)

GSNR_CONVERGED_DB = 0.05
NLI_SHARE_LIMIT = 0.25
MIN_IMPROVEMENT = 1e-15
FIT_TOL = 1e-4
MAX_ROUNDS = 8
ROUND_MIN_GAIN_DB = 0.005

STAGE_NAMES = ("span_loss", "amplifier", "noise_figure", "gamma")

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section(fn: Callable[[float], float], lo: float, hi: float,
                   tol: float = 1e-4,
                   max_iter: int = 100) -> tuple[float, float, int]:
    """Minimize fn on [lo, hi]; returns (x, fn(x), evaluations)."""
    a, b = float(lo), float(hi)
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = fn(c), fn(d)
    evals = 2
    while abs(b - a) > tol and evals < max_iter:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = fn(d)
        evals += 1
    if fc < fd:
        return c, fc, evals
    return d, fd, evals


@dataclass(frozen=True)
class StageOutcome:
    name: str
    round_index: int
    parameters: dict
    residual_before_db: float
    residual_after_db: float
    iterations: int
    reverted: bool
    skipped: bool
    pinned: bool  # every accepted parameter sits on a bound: fit diverged


@dataclass(frozen=True)
class CalibrationReport:
    stages: tuple[StageOutcome, ...]
    gsnr_error_before_db: float
    final_max_gsnr_error_db: float
    stopped_early: bool


@dataclass(frozen=True)
class RehearsalResult:
    feasible: bool
    required_margin_db: float  # floor the margins were judged against
    before: QotReport
    after: QotReport
    margins: MarginReport
    command_digests: tuple[str, ...]


@dataclass(frozen=True)
class PredictionError:
    per_channel_db: dict[str, float]
    max_abs_db: float
    mean_abs_db: float


def _as_snapshot(telemetry) -> TelemetrySnapshot:
    if isinstance(telemetry, TelemetrySnapshot):
        return telemetry
    if isinstance(telemetry, Telemetry):
        return TelemetrySnapshot(records=(telemetry,))
    records = tuple(telemetry)
    if not records:
        raise CalibrationError("no telemetry provided")
    return TelemetrySnapshot(records=records)


class DigitalTwin:
    def __init__(self, topology: NetworkTopology):
        self.model = copy.deepcopy(topology)
        self.calibration_state = "Uncalibrated"
        self.last_calibration: CalibrationReport | None = None

    # --- estimation ---------------------------------------------------

    def estimate_qot(self, services: Sequence[Service],
                     targets: Sequence[str] | None = None) -> QotReport:
        return propagate(self.model, services, targets).report

    def prediction_error(self, predicted: QotReport,
                         observed) -> PredictionError:
        """Compare a model estimate against telemetry, batch averaged."""
        snapshot = _as_snapshot(observed)
        predicted_ids = sorted(c.service_id for c in predicted.channels)
        observed_ids = sorted(snapshot.channel_ids)
        if predicted_ids != observed_ids:
            raise ServiceError("channel mismatch between prediction "
                               "and telemetry")
        per = {}
        for ch in predicted.channels:
            per[ch.service_id] = (ch.gsnr_db
                                  - snapshot.mean_gsnr_db(ch.service_id))
        if not per:
            raise ServiceError("channel mismatch between prediction "
                               "and telemetry")
        absvals = [abs(v) for v in per.values()]
        return PredictionError(per_channel_db=per,
                               max_abs_db=max(absvals),
                               mean_abs_db=sum(absvals) / len(absvals))

    # --- calibration ---------------------------------------------------

    def calibrate(self, telemetry,
                  stage_order: Sequence[str] | None = None
                  ) -> CalibrationReport:
        """Refine the model against averaged telemetry, repeating the
        stage sequence until the worst GSNR mismatch is below the
        convergence threshold or a round stops helping. The best model
        state seen across rounds is the one kept."""
        snapshot = _as_snapshot(telemetry)
        if not snapshot.channel_ids:
            raise CalibrationError("telemetry has no channels")
        order = tuple(stage_order) if stage_order else STAGE_NAMES
        for name in order:
            if name not in STAGE_NAMES:
                raise CalibrationError(f"unknown calibration stage {name!r}")

        services = services_from_telemetry(snapshot)
        obs_gsnr = {sid: snapshot.mean_gsnr_db(sid)
                    for sid in snapshot.channel_ids}
        obs_rx = {sid: snapshot.mean_received_dbm(sid)
                  for sid in snapshot.channel_ids}
        obs_oms = snapshot.mean_oms_output_dbm()

        runner = _StageRunner(self.model, services, obs_gsnr, obs_rx, obs_oms)
        error_before = runner.max_gsnr_error()
        best_error = error_before
        best_omses = copy.deepcopy(self.model.omses)
        stages = []
        stopped_early = False
        for round_index in range(MAX_ROUNDS):
            best_at_round_start = best_error
            for name in order:
                if not stopped_early and (runner.max_gsnr_error()
                                          < GSNR_CONVERGED_DB):
                    stopped_early = True
                if stopped_early:
                    resid = runner.stage_residual(name)
                    stages.append(StageOutcome(
                        name=name, round_index=round_index, parameters={},
                        residual_before_db=resid, residual_after_db=resid,
                        iterations=0, reverted=False, skipped=True,
                        pinned=False))
                    continue
                stages.append(runner.run_stage(name, round_index))
                err = runner.max_gsnr_error()
                if err < best_error:
                    best_error = err
                    best_omses = copy.deepcopy(self.model.omses)
            if stopped_early:
                break
            if best_at_round_start - best_error < ROUND_MIN_GAIN_DB:
                break
        self.model.omses[:] = best_omses
        self.model.reindex()
        self.calibration_state = "Calibrated"
        report = CalibrationReport(
            stages=tuple(stages),
            gsnr_error_before_db=error_before,
            final_max_gsnr_error_db=best_error,
            stopped_early=stopped_early,
        )
        self.last_calibration = report
        return report

    # --- rehearsal ------------------------------------------------------

    def rehearse(self, commands: Sequence[NmsCommand],
                 services: Sequence[Service], *,
                 min_margin_db: float = 1.0) -> RehearsalResult:
        """Dry-run NMS commands on the model and judge post-change margins.

        Raises CommandError exactly where the field would, so an invalid
        change is caught in the twin instead of the plant.
        """
        current = {s.service_id: s for s in services
                   if s.state != ServiceState.DROPPED}
        before = self.estimate_qot(list(current.values()))
        for cmd in commands:
            if cmd.digest != command_digest(cmd.kind, cmd.payload):
                raise CommandError("command digest does not match payload")
            if cmd.kind == "AddService":
                svc = service_from_payload(cmd.payload)
                if svc.service_id in current:
                    raise CommandError(
                        f"duplicate service id {svc.service_id!r}")
                validate_service(self.model, svc)
                current[svc.service_id] = dataclasses.replace(
                    svc, state=ServiceState.ACTIVE)
                assert_no_overlap(self.model, list(current.values()))
            elif cmd.kind == "DropService":
                sid = cmd.payload.get("service_id")
                if sid not in current:
                    raise CommandError(f"no active service {sid!r}")
                del current[sid]
            elif cmd.kind == "AdjustPower":
                sid = cmd.payload.get("service_id")
                if sid not in current:
                    raise CommandError(f"no active service {sid!r}")
                try:
                    power = float(cmd.payload["launch_power_dbm"])
                except (KeyError, TypeError, ValueError) as exc:
                    raise CommandError(
                        "AdjustPower needs launch_power_dbm") from exc
                current[sid] = dataclasses.replace(
                    current[sid], launch_power_dbm=power)
            else:
                raise CommandError(f"unknown command kind {cmd.kind!r}")
        after = self.estimate_qot(list(current.values()))
        margins = margin(after)
        feasible = all(c.margin_db >= min_margin_db
                       for c in margins.channels)
        return RehearsalResult(
            feasible=feasible,
            required_margin_db=min_margin_db,
            before=before,
            after=after,
            margins=margins,
            command_digests=tuple(c.digest for c in commands),
        )

    # --- persistence -----------------------------------------------------

    def export_text(self) -> str:
        doc = {
            "schema_version": 1,
            "calibration_state": self.calibration_state,
            "topology": topology_to_doc(self.model),
        }
        return yaml.safe_dump(doc, sort_keys=False)

    @classmethod
    def import_text(cls, text: str) -> "DigitalTwin":
        try:
            doc = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"twin document parse error: {exc}") from exc
        if not isinstance(doc, dict) or "topology" not in doc:
            raise ConfigError("twin document must carry a topology block")
        if doc.get("schema_version", 1) != 1:
            raise ConfigError(
                f"unsupported schema_version {doc.get('schema_version')}")
        topo = load_topology(yaml.safe_dump(doc["topology"]))
        _validate_bounds(topo)
        twin = cls(topo)
        state = doc.get("calibration_state", "Uncalibrated")
        if state not in ("Uncalibrated", "Calibrated"):
            raise ConfigError(f"unknown calibration_state {state!r}")
        twin.calibration_state = state
        return twin


def _validate_bounds(topology: NetworkTopology) -> None:
    for oms in topology.omses:
        a, b = oms.endpoints
        for span, amp in zip(oms.spans, oms.amplifiers):
            if not (ATTEN_BOUNDS_DB_KM[0] <= span.attenuation_db_km
                    <= ATTEN_BOUNDS_DB_KM[1]):
                raise ConfigError(
                    f"OMS {a}-{b}: attenuation {span.attenuation_db_km} "
                    f"outside {ATTEN_BOUNDS_DB_KM}")
            for conn in (span.connector_in_db, span.connector_out_db):
                if not (CONN_BOUNDS_DB[0] <= conn <= CONN_BOUNDS_DB[1]):
                    raise ConfigError(
                        f"OMS {a}-{b}: connector loss {conn} outside "
                        f"{CONN_BOUNDS_DB}")
            if not (GAMMA_BOUNDS[0] <= span.gamma_per_w_km
                    <= GAMMA_BOUNDS[1]):
                raise ConfigError(
                    f"OMS {a}-{b}: gamma {span.gamma_per_w_km} outside "
                    f"{GAMMA_BOUNDS}")
            if not (NF_BOUNDS_DB[0] <= amp.noise_figure_db
                    <= NF_BOUNDS_DB[1]):
                raise ConfigError(
                    f"OMS {a}-{b}: noise figure {amp.noise_figure_db} "
                    f"outside {NF_BOUNDS_DB}")
            if not (TILT_BOUNDS_DB[0] <= amp.tilt_db <= TILT_BOUNDS_DB[1]):
                raise ConfigError(
                    f"OMS {a}-{b}: tilt {amp.tilt_db} outside "
                    f"{TILT_BOUNDS_DB}")


class _StageRunner:
    """Shared state for one calibrate() call."""

    def __init__(self, model: NetworkTopology, services: list[Service],
                 obs_gsnr: dict[str, float], obs_rx: dict[str, float],
                 obs_oms: dict[tuple[str, str], float]):
        self.model = model
        self.services = services
        self.obs_gsnr = obs_gsnr
        self.obs_rx = obs_rx
        self.obs_oms = obs_oms

    # observables ------------------------------------------------------

    def _gsnr_deltas(self) -> list[float]:
        report = propagate(self.model, self.services).report
        return [ch.gsnr_db - self.obs_gsnr[ch.service_id]
                for ch in report.channels]

    def _rx_deltas(self) -> list[float]:
        report = propagate(self.model, self.services).report
        return [mw_to_dbm(ch.signal_power_mw) - self.obs_rx[ch.service_id]
                for ch in report.channels]

    def _oms_deltas(self) -> list[float]:
        outputs = propagate(self.model, self.services, targets=[]).oms_outputs
        deltas = []
        for key, obs in self.obs_oms.items():
            if key in outputs:
                deltas.append(mw_to_dbm(outputs[key]) - obs)
        return deltas

    def max_gsnr_error(self) -> float:
        deltas = self._gsnr_deltas()
        return max((abs(d) for d in deltas), default=0.0)

    def stage_residual(self, name: str) -> float:
        if name == "span_loss":
            vals = self._oms_deltas()
        elif name == "amplifier":
            vals = self._rx_deltas()
        else:
            vals = self._gsnr_deltas()
        return max((abs(v) for v in vals), default=0.0)

    @staticmethod
    def _sse(deltas: list[float]) -> float:
        return sum(d * d for d in deltas)

    # fitting ----------------------------------------------------------

    def _fit(self, get: Callable[[], float], put: Callable[[float], None],
             lo: float, hi: float,
             objective: Callable[[], float]) -> tuple[bool, int, bool]:
        """Golden-section fit of one knob; keeps the new value only on
        strict objective improvement. Returns (changed, evaluations,
        landed_on_bound)."""
        start = get()
        f_start = objective()

        def probe(x: float) -> float:
            put(x)
            return objective()

        best_x, best_f, evals = golden_section(probe, lo, hi, tol=FIT_TOL)
        if best_f < f_start - MIN_IMPROVEMENT:
            put(best_x)
            at_bound = (best_x - lo <= 2 * FIT_TOL
                        or hi - best_x <= 2 * FIT_TOL)
            return True, evals, at_bound
        put(start)
        return False, evals, False

    def run_stage(self, name: str, round_index: int = 0) -> StageOutcome:
        before = self.stage_residual(name)
        saved = copy.deepcopy(self.model.omses)
        if name == "span_loss":
            params, iters, bounds = self._stage_span_loss()
        elif name == "amplifier":
            params, iters, bounds = self._stage_amplifier()
        elif name == "noise_figure":
            params, iters, bounds = self._stage_noise_figure()
        else:
            params, iters, bounds = self._stage_gamma()
        after = self.stage_residual(name)
        reverted = False
        if after > before:
            self.model.omses[:] = saved
            self.model.reindex()
            reverted = True
            after = before
            params = {}
            bounds = []
        pinned = bool(bounds) and all(bounds)
        return StageOutcome(name=name, round_index=round_index,
                            parameters=params,
                            residual_before_db=before,
                            residual_after_db=after,
                            iterations=iters, reverted=reverted,
                            skipped=False, pinned=pinned)

    def _stage_span_loss(self) -> tuple[dict, int, list[bool]]:
        """Per-OMS uniform attenuation offset across its spans. The OMS
        output power only identifies the total loss, so the offset is
        the one shape the telemetry actually pins down."""
        objective = lambda: self._sse(self._oms_deltas())
        params = {}
        iters = 0
        bounds = []
        for oms in self.model.omses:
            a, b = oms.endpoints
            spans = oms.spans
            start = [s.attenuation_db_km for s in spans]
            lo = max(ATTEN_BOUNDS_DB_KM[0] - v for v in start)
            hi = min(ATTEN_BOUNDS_DB_KM[1] - v for v in start)
            if lo >= hi:
                continue

            def put(x: float, spans=spans, start=start) -> None:
                for span, v in zip(spans, start):
                    span.attenuation_db_km = v + x

            f_start = objective()

            def probe(x: float, put=put) -> float:
                put(x)
                return objective()

            best_x, best_f, n = golden_section(probe, lo, hi, tol=FIT_TOL)
            iters += n
            if best_f < f_start - MIN_IMPROVEMENT:
                put(best_x)
                bounds.append(best_x - lo <= 2 * FIT_TOL
                              or hi - best_x <= 2 * FIT_TOL)
                for idx, span in enumerate(spans):
                    params[f"{a}-{b}/span{idx}/attenuation_db_km"] = (
                        span.attenuation_db_km)
            else:
                put(0.0)
        return params, iters, bounds

    def _stage_amplifier(self) -> tuple[dict, int, list[bool]]:
        objective = lambda: self._sse(self._rx_deltas())
        params = {}
        iters = 0
        bounds = []
        for oms in self.model.omses:
            a, b = oms.endpoints
            for idx, amp in enumerate(oms.amplifiers):
                g0 = amp.gain_db
                changed, n, at_bound = self._fit(
                    lambda amp=amp: amp.gain_db,
                    lambda x, amp=amp: setattr(amp, "gain_db", x),
                    max(0.0, g0 - GAIN_HALF_RANGE_DB),
                    g0 + GAIN_HALF_RANGE_DB, objective)
                iters += n
                if changed:
                    params[f"{a}-{b}/amp{idx}/gain_db"] = amp.gain_db
                    bounds.append(at_bound)
                changed, n, at_bound = self._fit(
                    lambda amp=amp: amp.tilt_db,
                    lambda x, amp=amp: setattr(amp, "tilt_db", x),
                    *TILT_BOUNDS_DB, objective)
                iters += n
                if changed:
                    params[f"{a}-{b}/amp{idx}/tilt_db"] = amp.tilt_db
                    bounds.append(at_bound)
        return params, iters, bounds

    def _low_nli_channels(self) -> list[str]:
        report = propagate(self.model, self.services).report
        picked = [ch.service_id for ch in report.channels
                  if ch.nli_power_mw
                  <= NLI_SHARE_LIMIT * (ch.ase_power_mw + ch.nli_power_mw)]
        return picked or [ch.service_id for ch in report.channels]

    def _stage_noise_figure(self) -> tuple[dict, int, list[bool]]:
        focus = set(self._low_nli_channels())

        def objective() -> float:
            report = propagate(self.model, self.services).report
            return self._sse([
                ch.gsnr_db - self.obs_gsnr[ch.service_id]
                for ch in report.channels if ch.service_id in focus])

        params = {}
        iters = 0
        bounds = []
        for oms in self.model.omses:
            a, b = oms.endpoints
            for idx, amp in enumerate(oms.amplifiers):
                changed, n, at_bound = self._fit(
                    lambda amp=amp: amp.noise_figure_db,
                    lambda x, amp=amp: setattr(amp, "noise_figure_db", x),
                    *NF_BOUNDS_DB, objective)
                iters += n
                if changed:
                    params[f"{a}-{b}/amp{idx}/noise_figure_db"] = (
                        amp.noise_figure_db)
                    bounds.append(at_bound)
        return params, iters, bounds

    def _stage_gamma(self) -> tuple[dict, int, list[bool]]:
        # One global knob; spans might start heterogeneous, so revert by
        # restoring the saved per-span values rather than a single scalar.
        spans = [span for oms in self.model.omses for span in oms.spans]
        saved = [span.gamma_per_w_km for span in spans]

        def objective() -> float:
            return self._sse(self._gsnr_deltas())

        def put(x: float) -> None:
            for span in spans:
                span.gamma_per_w_km = x

        f_start = objective()

        def probe(x: float) -> float:
            put(x)
            return objective()

        best_x, best_f, iters = golden_section(probe, *GAMMA_BOUNDS,
                                               tol=FIT_TOL)
        if best_f < f_start - MIN_IMPROVEMENT:
            put(best_x)
            at_bound = (best_x - GAMMA_BOUNDS[0] <= 2 * FIT_TOL
                        or GAMMA_BOUNDS[1] - best_x <= 2 * FIT_TOL)
            return {"gamma_per_w_km": best_x}, iters, [at_bound]
        for span, value in zip(spans, saved):
            span.gamma_per_w_km = value
        return {}, iters, []
