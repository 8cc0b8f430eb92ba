"""Network plant model: ROADM sites, fiber spans, amplifiers, flex grid, services.

The topology is loaded from a structured YAML config and is immutable by
convention after load (the field simulator and the twin each take deep
copies before editing parameters). An OMS is bidirectional: both
directions share the same spans, amplifiers, and spectrum occupancy;
traversal against the configured direction walks the (span, amplifier)
pairs in reverse order with the two connector losses of each span
swapped.
"""

from __future__ import annotations

import copy
import io
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from typing import Iterator, Sequence

import yaml

from .errors import ConfigError, ServiceError, TopologyError

CONFIG_SCHEMA_VERSION = 1

NOMINAL_ATTENUATION_DB_KM = 0.20
NOMINAL_DISPERSION_PS_NM_KM = 16.7
NOMINAL_GAMMA_PER_W_KM = 1.3
NOMINAL_CONNECTOR_DB = 0.5
NOMINAL_NOISE_FIGURE_DB = 5.0
NF_FLOOR_DB = 3.0

DEFAULT_WIDTH_SLICES = 8


@dataclass(frozen=True)
class LineRate:
    format: str
    symbol_rate_gbd: float


RATE_TABLE = {
    100: LineRate("DP-QPSK", 32.0),
    400: LineRate("DP-16QAM", 64.0),
    800: LineRate("DP-PCS-64QAM", 96.0),
}


class ServiceState(str, Enum):
    PLANNED = "Planned"
    ACTIVE = "Active"
    DROPPED = "Dropped"


@dataclass
class FiberSpan:
    """One fiber segment. Connector losses sit at the two span ends."""

    length_km: float
    attenuation_db_km: float = NOMINAL_ATTENUATION_DB_KM
    dispersion_ps_nm_km: float = NOMINAL_DISPERSION_PS_NM_KM
    gamma_per_w_km: float = NOMINAL_GAMMA_PER_W_KM
    connector_in_db: float = NOMINAL_CONNECTOR_DB
    connector_out_db: float = NOMINAL_CONNECTOR_DB

    def __post_init__(self) -> None:
        if self.length_km <= 0:
            raise TopologyError(f"span length {self.length_km} km must be > 0")
        if self.attenuation_db_km <= 0:
            raise TopologyError("span attenuation must be > 0 dB/km")
        if self.gamma_per_w_km < 0:
            raise TopologyError("gamma must be >= 0")
        if self.connector_in_db < 0 or self.connector_out_db < 0:
            raise TopologyError("connector losses must be >= 0 dB")

    @property
    def loss_db(self) -> float:
        """Total span loss including both connectors."""
        return (self.attenuation_db_km * self.length_km
                + self.connector_in_db + self.connector_out_db)


@dataclass
class Amplifier:
    """Post-span EDFA. tilt_db is the edge-to-edge gain difference
    across the grid band (negative offset at the low-frequency edge)."""

    gain_db: float
    noise_figure_db: float = NOMINAL_NOISE_FIGURE_DB
    tilt_db: float = 0.0

    def __post_init__(self) -> None:
        if self.gain_db < 0:
            raise TopologyError("amplifier gain must be >= 0 dB")
        if self.noise_figure_db < NF_FLOOR_DB:
            raise TopologyError(
                f"noise figure {self.noise_figure_db} dB below the "
                f"{NF_FLOOR_DB} dB floor")


@dataclass
class Oms:
    """Amplified line between two ROADM sites: one amplifier per span."""

    endpoints: tuple[str, str]
    spans: list[FiberSpan]
    amplifiers: list[Amplifier]

    def __post_init__(self) -> None:
        a, b = self.endpoints
        if a == b:
            raise TopologyError(f"self-loop OMS {a}-{b}")
        if not self.spans:
            raise TopologyError(f"OMS {a}-{b} has no spans")
        if len(self.spans) != len(self.amplifiers):
            raise TopologyError(
                f"OMS {a}-{b}: {len(self.spans)} spans but "
                f"{len(self.amplifiers)} amplifiers")

    @property
    def length_km(self) -> float:
        return sum(s.length_km for s in self.spans)


@dataclass(frozen=True)
class ChannelGrid:
    """Flex grid: slice_count slices of slice_width_ghz above base_frequency_thz."""

    base_frequency_thz: float = 191.0
    slice_width_ghz: float = 12.5
    slice_count: int = 480

    def __post_init__(self) -> None:
        if self.slice_count <= 0:
            raise TopologyError("slice_count must be > 0")
        if self.slice_width_ghz <= 0:
            raise TopologyError("slice width must be > 0 GHz")

    @property
    def top_frequency_thz(self) -> float:
        return (self.base_frequency_thz * 1000.0
                + self.slice_count * self.slice_width_ghz) / 1000.0

    @property
    def band_center_thz(self) -> float:
        return (self.base_frequency_thz + self.top_frequency_thz) / 2

    @property
    def band_width_thz(self) -> float:
        return self.top_frequency_thz - self.base_frequency_thz


@dataclass(frozen=True)
class Service:
    """A lightpath occupying width_slices contiguous slices along a path."""

    service_id: str
    path: tuple[str, ...]
    center_frequency_thz: float
    rate_gbps: int
    format: str
    symbol_rate_gbd: float
    width_slices: int = DEFAULT_WIDTH_SLICES
    launch_power_dbm: float = 0.0
    protected: bool = False
    state: ServiceState = ServiceState.PLANNED


@dataclass
class NetworkTopology:
    name: str
    sites: list[str]
    omses: list[Oms]
    grid: ChannelGrid = field(default_factory=ChannelGrid)

    def __post_init__(self) -> None:
        self._index = {}
        for oms in self.omses:
            a, b = oms.endpoints
            for end in (a, b):
                if end not in self.sites:
                    raise TopologyError(f"OMS endpoint {end!r} is not a site")
            key = frozenset((a, b))
            if key in self._index:
                raise TopologyError(f"duplicate OMS between {a} and {b}")
            self._index[key] = oms
        _check_connected(self.sites, self.omses)

    def oms_between(self, u: str, v: str) -> Oms:
        oms = self._index.get(frozenset((u, v)))
        if oms is None:
            raise TopologyError(f"no OMS {u}-{v}")
        return oms

    def has_oms(self, u: str, v: str) -> bool:
        return frozenset((u, v)) in self._index

    def adjacency(self) -> dict[str, tuple[str, ...]]:
        nbrs: dict[str, set[str]] = {s: set() for s in self.sites}
        for oms in self.omses:
            a, b = oms.endpoints
            nbrs[a].add(b)
            nbrs[b].add(a)
        return {s: tuple(sorted(n)) for s, n in nbrs.items()}

    def reindex(self) -> None:
        """Rebuild internal indexes after in-place edits to self.omses."""
        self.__post_init__()

    def __deepcopy__(self, memo):
        clone = NetworkTopology(
            name=self.name,
            sites=list(self.sites),
            omses=copy.deepcopy(self.omses, memo),
            grid=self.grid,
        )
        return clone


def _check_connected(sites: Sequence[str], omses: Sequence[Oms]) -> None:
    if not sites:
        raise TopologyError("graph not connected: no sites")
    if len(sites) > 1 and not omses:
        raise TopologyError("graph not connected: no links")
    seen = {sites[0]}
    frontier = [sites[0]]
    nbrs: dict[str, list[str]] = {s: [] for s in sites}
    for oms in omses:
        a, b = oms.endpoints
        nbrs[a].append(b)
        nbrs[b].append(a)
    while frontier:
        node = frontier.pop()
        for nxt in nbrs[node]:
            if nxt not in seen:
                seen.add(nxt)
                frontier.append(nxt)
    if len(seen) != len(sites):
        missing = sorted(set(sites) - seen)
        raise TopologyError(f"graph not connected: unreachable sites {missing}")


# --- grid arithmetic -------------------------------------------------------
# All positions are computed in GHz: 12.5 is exactly representable, so
# on-grid centers survive the round trip bit-exactly.

def slice_index_of(grid: ChannelGrid, center_thz: float,
                   width_slices: int) -> int:
    """Start slice s such that center = base + (s + width/2) * slice_width."""
    if width_slices <= 0:
        raise TopologyError("width_slices must be > 0")
    offset = ((center_thz * 1000.0 - grid.base_frequency_thz * 1000.0)
              / grid.slice_width_ghz - width_slices / 2)
    index = round(offset)
    if abs(offset - index) > 1e-6:
        raise TopologyError(
            f"center {center_thz} THz is off-grid for width {width_slices}")
    if index < 0 or index + width_slices > grid.slice_count:
        raise TopologyError(
            f"channel at {center_thz} THz exceeds the band edge")
    return index


def center_frequency(grid: ChannelGrid, start_slice: int,
                     width_slices: int) -> float:
    """Center frequency in THz of the window [start, start + width)."""
    if start_slice < 0 or start_slice + width_slices > grid.slice_count:
        raise TopologyError("window exceeds the band edge")
    center_ghz = (grid.base_frequency_thz * 1000.0
                  + (start_slice + width_slices / 2) * grid.slice_width_ghz)
    return center_ghz / 1000.0


def service_slices(grid: ChannelGrid, service: Service) -> range:
    start = slice_index_of(grid, service.center_frequency_thz,
                           service.width_slices)
    return range(start, start + service.width_slices)


# --- traversal -------------------------------------------------------------

@dataclass(frozen=True)
class OmsHop:
    """One OMS as traversed by a path, with element order resolved."""

    oms: Oms
    source: str
    target: str
    reverse: bool

    def elements(self) -> Iterator[tuple[FiberSpan, Amplifier, float, float]]:
        """Yield (span, amplifier, connector_in_db, connector_out_db)
        in traversal order."""
        pairs = list(zip(self.oms.spans, self.oms.amplifiers))
        if self.reverse:
            for span, amp in reversed(pairs):
                yield span, amp, span.connector_out_db, span.connector_in_db
        else:
            for span, amp in pairs:
                yield span, amp, span.connector_in_db, span.connector_out_db


def oms_chain(topology: NetworkTopology, path: Sequence[str]) -> list[OmsHop]:
    """Resolve a site path into the ordered OMS hops it traverses."""
    nodes = [str(n) for n in path]
    if len(nodes) < 2:
        raise TopologyError(f"path too short: {nodes}")
    hops = []
    for u, v in zip(nodes, nodes[1:]):
        if u == v:
            raise TopologyError(f"path repeats site {u} consecutively")
        oms = topology.oms_between(u, v)
        hops.append(OmsHop(oms=oms, source=u, target=v,
                           reverse=oms.endpoints[0] != u))
    return hops


def path_length_km(topology: NetworkTopology, path: Sequence[str]) -> float:
    return sum(h.oms.length_km for h in oms_chain(topology, path))


# --- services --------------------------------------------------------------

def make_service(service_id: str, path: Sequence[str],
                 center_frequency_thz: float, rate_gbps: int, *,
                 width_slices: int = DEFAULT_WIDTH_SLICES,
                 launch_power_dbm: float = 0.0, protected: bool = False,
                 state: ServiceState = ServiceState.PLANNED) -> Service:
    """Build a Service, filling format and symbol rate from the rate table."""
    rate = RATE_TABLE.get(int(rate_gbps))
    if rate is None:
        raise ServiceError(f"unknown rate {rate_gbps}G")
    return Service(
        service_id=str(service_id),
        path=tuple(str(n) for n in path),
        center_frequency_thz=float(center_frequency_thz),
        rate_gbps=int(rate_gbps),
        format=rate.format,
        symbol_rate_gbd=rate.symbol_rate_gbd,
        width_slices=int(width_slices),
        launch_power_dbm=float(launch_power_dbm),
        protected=bool(protected),
        state=ServiceState(state),
    )


def validate_service(topology: NetworkTopology, service: Service) -> None:
    """Check the path exists on the topology and the channel is on-grid."""
    oms_chain(topology, service.path)
    if service.rate_gbps not in RATE_TABLE:
        raise ServiceError(f"unknown rate {service.rate_gbps}G")
    try:
        slice_index_of(topology.grid, service.center_frequency_thz,
                       service.width_slices)
    except TopologyError as exc:
        raise ServiceError(f"service {service.service_id}: {exc}") from exc


# --- config load / serialize ----------------------------------------------

def load_topology(config_text: str) -> NetworkTopology:
    """Parse and validate a topology config document."""
    try:
        doc = yaml.safe_load(io.StringIO(config_text))
    except yaml.YAMLError as exc:
        raise ConfigError(f"topology config parse error: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("topology config must be a mapping")
    version = doc.get("schema_version", CONFIG_SCHEMA_VERSION)
    if version != CONFIG_SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version}")
    try:
        return _topology_from_doc(doc)
    except (TypeError, KeyError, ValueError) as exc:
        raise ConfigError(f"topology config invalid: {exc}") from exc


def load_topology_file(path) -> NetworkTopology:
    with open(path, "r", encoding="utf-8") as handle:
        return load_topology(handle.read())


def _topology_from_doc(doc: dict) -> NetworkTopology:
    sites = [str(s) for s in doc.get("sites", [])]
    grid_doc = doc.get("grid", {}) or {}
    grid = ChannelGrid(
        base_frequency_thz=float(grid_doc.get("base_frequency_thz", 191.0)),
        slice_width_ghz=float(grid_doc.get("slice_width_ghz", 12.5)),
        slice_count=int(grid_doc.get("slice_count", 480)),
    )
    omses = []
    for oms_doc in doc.get("omses", []) or []:
        endpoints = tuple(str(e) for e in oms_doc["endpoints"])
        if len(endpoints) != 2:
            raise TopologyError(f"OMS endpoints must be a pair: {endpoints}")
        spans = []
        amps = []
        for span_doc in oms_doc.get("spans", []) or []:
            span = FiberSpan(
                length_km=float(span_doc["length_km"]),
                attenuation_db_km=float(span_doc.get(
                    "attenuation_db_km", NOMINAL_ATTENUATION_DB_KM)),
                dispersion_ps_nm_km=float(span_doc.get(
                    "dispersion_ps_nm_km", NOMINAL_DISPERSION_PS_NM_KM)),
                gamma_per_w_km=float(span_doc.get(
                    "gamma_per_w_km", NOMINAL_GAMMA_PER_W_KM)),
                connector_in_db=float(span_doc.get(
                    "connector_in_db", NOMINAL_CONNECTOR_DB)),
                connector_out_db=float(span_doc.get(
                    "connector_out_db", NOMINAL_CONNECTOR_DB)),
            )
            amp_doc = span_doc.get("amplifier", {}) or {}
            # Default gain makes the OMS transparent: span loss plus
            # both connector losses.
            amp = Amplifier(
                gain_db=float(amp_doc.get("gain_db", span.loss_db)),
                noise_figure_db=float(amp_doc.get(
                    "noise_figure_db", NOMINAL_NOISE_FIGURE_DB)),
                tilt_db=float(amp_doc.get("tilt_db", 0.0)),
            )
            spans.append(span)
            amps.append(amp)
        omses.append(Oms(endpoints=endpoints, spans=spans, amplifiers=amps))
    return NetworkTopology(
        name=str(doc.get("name", "unnamed")),
        sites=sites,
        omses=omses,
        grid=grid,
    )


def topology_to_doc(topology: NetworkTopology) -> dict:
    """Explicit full dump; load_topology(serialize) round-trips exactly."""
    return {
        "schema_version": CONFIG_SCHEMA_VERSION,
        "name": topology.name,
        "sites": list(topology.sites),
        "grid": {
            "base_frequency_thz": topology.grid.base_frequency_thz,
            "slice_width_ghz": topology.grid.slice_width_ghz,
            "slice_count": topology.grid.slice_count,
        },
        "omses": [
            {
                "endpoints": list(oms.endpoints),
                "spans": [
                    {
                        "length_km": span.length_km,
                        "attenuation_db_km": span.attenuation_db_km,
                        "dispersion_ps_nm_km": span.dispersion_ps_nm_km,
                        "gamma_per_w_km": span.gamma_per_w_km,
                        "connector_in_db": span.connector_in_db,
                        "connector_out_db": span.connector_out_db,
                        "amplifier": {
                            "gain_db": amp.gain_db,
                            "noise_figure_db": amp.noise_figure_db,
                            "tilt_db": amp.tilt_db,
                        },
                    }
                    for span, amp in zip(oms.spans, oms.amplifiers)
                ],
            }
            for oms in topology.omses
        ],
    }


def serialize_topology(topology: NetworkTopology) -> str:
    return yaml.safe_dump(topology_to_doc(topology), sort_keys=False)


def default_topology() -> NetworkTopology:
    """The bundled six-site mesh."""
    text = (resources.files("lumenops") / "data" / "default_topology.yaml"
            ).read_text(encoding="utf-8")
    return load_topology(text)
