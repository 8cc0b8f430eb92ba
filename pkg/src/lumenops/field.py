"""Simulated field network.

The field holds a privately perturbed copy of the nominal topology and
answers two interfaces only: telemetry collection and NMS command
execution. Parameter perturbations are drawn once at construction from
a seeded generator; telemetry noise comes from a counter-based stream
so that reading sequence N is reproducible no matter how many other
collections happened in between.
"""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import CommandError, ServiceError
from .qot import QotReport, assert_no_overlap, propagate
from .topology import (
    NetworkTopology,
    Service,
    ServiceState,
    make_service,
    validate_service,
)
from .units import mw_to_dbm

# Construction-time parameter scatter. Attenuation and noise figure get
# clipped Gaussian offsets, connectors gain uniform extra loss, tilt
# drifts around flat. Amplifier gains stay at their nominal settings:
# in a sagging plant the EDFAs keep their provisioned setpoints.
ATTEN_SIGMA_DB_KM = 0.01
ATTEN_CLIP_DB_KM = 0.03
CONN_EXTRA_MAX_DB = 0.5
NF_SIGMA_DB = 0.4
NF_CLIP_DB = 1.0
TILT_SIGMA_DB = 0.2

ATTEN_RANGE_DB_KM = (0.15, 0.25)
NF_RANGE_DB = (3.0, 8.0)
CONN_RANGE_DB = (0.0, 2.0)
TILT_RANGE_DB = (-2.0, 2.0)

COMMAND_KINDS = ("AddService", "DropService", "AdjustPower")


def perturb_topology(topology: NetworkTopology, seed: int) -> NetworkTopology:
    """Deep copy with randomized plant parameters.

    Draw order is fixed per span (attenuation, both connectors, noise
    figure, tilt) so a seed always produces the same plant.
    """
    plant = copy.deepcopy(topology)
    rng = np.random.default_rng(seed)
    for oms in plant.omses:
        for span, amp in zip(oms.spans, oms.amplifiers):
            d_att = float(np.clip(rng.normal(0.0, ATTEN_SIGMA_DB_KM),
                                  -ATTEN_CLIP_DB_KM, ATTEN_CLIP_DB_KM))
            span.attenuation_db_km = float(np.clip(
                span.attenuation_db_km + d_att, *ATTEN_RANGE_DB_KM))
            span.connector_in_db = float(np.clip(
                span.connector_in_db + rng.uniform(0.0, CONN_EXTRA_MAX_DB),
                *CONN_RANGE_DB))
            span.connector_out_db = float(np.clip(
                span.connector_out_db + rng.uniform(0.0, CONN_EXTRA_MAX_DB),
                *CONN_RANGE_DB))
            d_nf = float(np.clip(rng.normal(0.0, NF_SIGMA_DB),
                                 -NF_CLIP_DB, NF_CLIP_DB))
            amp.noise_figure_db = float(np.clip(
                amp.noise_figure_db + d_nf, *NF_RANGE_DB))
            amp.tilt_db = float(np.clip(
                amp.tilt_db + rng.normal(0.0, TILT_SIGMA_DB),
                *TILT_RANGE_DB))
    return plant


@dataclass(frozen=True)
class ChannelReading:
    service_id: str
    path: tuple[str, ...]
    center_frequency_thz: float
    width_slices: int
    rate_gbps: int
    launch_power_dbm: float
    protected: bool
    received_power_dbm: float
    gsnr_db: float


@dataclass(frozen=True)
class OmsReading:
    source: str
    target: str
    total_power_dbm: float


@dataclass(frozen=True)
class Telemetry:
    sequence: int
    noise_sigma_db: float
    channels: tuple[ChannelReading, ...]
    oms_outputs: tuple[OmsReading, ...]


@dataclass(frozen=True)
class TelemetrySnapshot:
    """A batch of telemetry frames; means tame the per-read noise."""

    records: tuple[Telemetry, ...]

    def __post_init__(self) -> None:
        if not self.records:
            raise ServiceError("telemetry snapshot is empty")
        ids = [tuple(c.service_id for c in r.channels) for r in self.records]
        if any(i != ids[0] for i in ids[1:]):
            raise ServiceError("telemetry frames cover different channels")

    @property
    def channel_ids(self) -> tuple[str, ...]:
        return tuple(c.service_id for c in self.records[0].channels)

    def channel(self, service_id: str) -> ChannelReading:
        for ch in self.records[0].channels:
            if ch.service_id == service_id:
                return ch
        raise ServiceError(f"no reading for service {service_id!r}")

    def mean_gsnr_db(self, service_id: str) -> float:
        vals = [c.gsnr_db for r in self.records for c in r.channels
                if c.service_id == service_id]
        return sum(vals) / len(vals)

    def mean_received_dbm(self, service_id: str) -> float:
        vals = [c.received_power_dbm for r in self.records
                for c in r.channels if c.service_id == service_id]
        return sum(vals) / len(vals)

    def mean_oms_output_dbm(self) -> dict[tuple[str, str], float]:
        acc: dict[tuple[str, str], list[float]] = {}
        for rec in self.records:
            for row in rec.oms_outputs:
                acc.setdefault((row.source, row.target), []).append(
                    row.total_power_dbm)
        return {k: sum(v) / len(v) for k, v in acc.items()}


def services_from_telemetry(snapshot: TelemetrySnapshot) -> list[Service]:
    """Rebuild live service intents from what the field reports."""
    out = []
    for ch in snapshot.records[0].channels:
        out.append(make_service(
            ch.service_id, ch.path, ch.center_frequency_thz, ch.rate_gbps,
            width_slices=ch.width_slices,
            launch_power_dbm=ch.launch_power_dbm,
            protected=ch.protected, state=ServiceState.ACTIVE))
    return out


# --- NMS commands ----------------------------------------------------------

@dataclass(frozen=True)
class NmsCommand:
    kind: str
    payload: dict
    issuer: str
    digest: str


def canonical_command_bytes(kind: str, payload: dict) -> bytes:
    return json.dumps({"kind": kind, "payload": payload},
                      sort_keys=True, separators=(",", ":")).encode("utf-8")


def command_digest(kind: str, payload: dict) -> str:
    return hashlib.sha256(canonical_command_bytes(kind, payload)).hexdigest()


def make_command(kind: str, payload: dict,
                 issuer: str = "ConfigurationDeployer") -> NmsCommand:
    if kind not in COMMAND_KINDS:
        raise CommandError(f"unknown command kind {kind!r}")
    payload = copy.deepcopy(payload)
    return NmsCommand(kind=kind, payload=payload, issuer=issuer,
                      digest=command_digest(kind, payload))


def service_to_payload(service: Service) -> dict:
    return {
        "service_id": service.service_id,
        "path": list(service.path),
        "center_frequency_thz": service.center_frequency_thz,
        "rate_gbps": service.rate_gbps,
        "width_slices": service.width_slices,
        "launch_power_dbm": service.launch_power_dbm,
        "protected": service.protected,
    }


def service_from_payload(payload: dict) -> Service:
    try:
        return make_service(
            payload["service_id"], payload["path"],
            payload["center_frequency_thz"], payload["rate_gbps"],
            width_slices=payload.get("width_slices", 8),
            launch_power_dbm=payload.get("launch_power_dbm", 0.0),
            protected=payload.get("protected", False))
    except (KeyError, TypeError) as exc:
        raise CommandError(f"malformed service payload: {exc}") from exc


class FieldNetwork:
    """The plant. Everything outside evaluation code goes through
    collect_performance and apply_command."""

    def __init__(self, topology: NetworkTopology,
                 services: Sequence[Service] = (), *, seed: int = 0,
                 noise_sigma_db: float = 0.1, perturb: bool = True):
        self._seed = int(seed)
        self._noise_sigma_db = float(noise_sigma_db)
        self._truth = (perturb_topology(topology, seed) if perturb
                       else copy.deepcopy(topology))
        self._services: dict[str, Service] = {}
        self._archive: dict[str, Service] = {}
        self._sequence = 0
        for svc in services:
            self._admit(svc)

    def _admit(self, service: Service) -> None:
        if service.service_id in self._services:
            raise ServiceError(f"duplicate service id {service.service_id!r}")
        validate_service(self._truth, service)
        live = dataclasses.replace(service, state=ServiceState.ACTIVE)
        trial = list(self._services.values()) + [live]
        assert_no_overlap(self._truth, trial)
        self._services[service.service_id] = live

    @property
    def seed(self) -> int:
        return self._seed

    @property
    def noise_sigma_db(self) -> float:
        return self._noise_sigma_db

    @property
    def truth_topology(self) -> NetworkTopology:
        """Ground truth; for evaluation and tests only."""
        return self._truth

    def list_services(self) -> list[Service]:
        return sorted(self._services.values(), key=lambda s: s.service_id)

    def dropped_services(self) -> list[Service]:
        return sorted(self._archive.values(), key=lambda s: s.service_id)

    def noise_free_report(self) -> QotReport:
        """Ground-truth QoT with no measurement noise; evaluation only."""
        return propagate(self._truth, self.list_services()).report

    def collect_performance(self) -> Telemetry:
        """One telemetry frame: per-channel received power and GSNR plus
        per-direction OMS output powers, each with additive dB noise."""
        seq = self._sequence
        self._sequence += 1
        result = propagate(self._truth, self.list_services())
        sigma = self._noise_sigma_db
        if sigma > 0.0:
            rng = np.random.Generator(np.random.Philox(
                counter=seq, key=self._seed))
            def jitter() -> float:
                return float(rng.normal(0.0, sigma))
        else:
            def jitter() -> float:
                return 0.0

        by_id = {s.service_id: s for s in self._services.values()}
        channels = []
        for ch in result.report.channels:  # already sorted by service id
            svc = by_id[ch.service_id]
            channels.append(ChannelReading(
                service_id=ch.service_id,
                path=ch.path,
                center_frequency_thz=ch.center_frequency_thz,
                width_slices=ch.width_slices,
                rate_gbps=ch.rate_gbps,
                launch_power_dbm=ch.launch_power_dbm,
                protected=svc.protected,
                received_power_dbm=mw_to_dbm(ch.signal_power_mw) + jitter(),
                gsnr_db=ch.gsnr_db + jitter(),
            ))
        oms_rows = []
        for (src, tgt) in sorted(result.oms_outputs):
            total = result.oms_outputs[(src, tgt)]
            oms_rows.append(OmsReading(
                source=src, target=tgt,
                total_power_dbm=mw_to_dbm(total) + jitter()))
        return Telemetry(sequence=seq, noise_sigma_db=sigma,
                         channels=tuple(channels),
                         oms_outputs=tuple(oms_rows))

    def collect_snapshot(self, count: int = 8) -> TelemetrySnapshot:
        if count < 1:
            raise ServiceError("snapshot needs at least one frame")
        return TelemetrySnapshot(records=tuple(
            self.collect_performance() for _ in range(count)))

    def apply_command(self, command: NmsCommand) -> Service:
        """Validate and execute one NMS command transactionally; the
        plant is untouched when a CommandError is raised."""
        if command.kind not in COMMAND_KINDS:
            raise CommandError(f"unknown command kind {command.kind!r}")
        if command.digest != command_digest(command.kind, command.payload):
            raise CommandError("command digest does not match payload")
        if command.kind == "AddService":
            svc = service_from_payload(command.payload)
            try:
                self._admit(svc)
            except ServiceError as exc:
                raise CommandError(str(exc)) from exc
            return self._services[svc.service_id]
        sid = command.payload.get("service_id")
        current = self._services.get(sid)
        if current is None:
            raise CommandError(f"no active service {sid!r}")
        if command.kind == "DropService":
            del self._services[sid]
            gone = dataclasses.replace(current, state=ServiceState.DROPPED)
            self._archive[sid] = gone
            return gone
        # AdjustPower
        try:
            new_power = float(command.payload["launch_power_dbm"])
        except (KeyError, TypeError, ValueError) as exc:
            raise CommandError("AdjustPower needs launch_power_dbm") from exc
        updated = dataclasses.replace(current, launch_power_dbm=new_power)
        self._services[sid] = updated
        return updated


def init_field(topology: NetworkTopology, services: Sequence[Service] = (),
               *, seed: int = 0, noise_sigma_db: float = 0.1,
               perturb: bool = True) -> FieldNetwork:
    return FieldNetwork(topology, services, seed=seed,
                        noise_sigma_db=noise_sigma_db, perturb=perturb)
