"""Routing and spectrum assignment.

Yen's loopless k-shortest paths over span kilometers, first-fit slice
windows over per-OMS bitmaps, and a planner that walks (path, window)
candidates in deterministic order until one survives a twin rehearsal.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Sequence

from .errors import CommandError, PlanError, ServiceError
from .field import make_command, service_to_payload
from .qot import REQUIRED_GSNR_DB
from .topology import (
    DEFAULT_WIDTH_SLICES,
    NetworkTopology,
    Service,
    ServiceState,
    center_frequency,
    make_service,
    service_slices,
)


@dataclass(frozen=True)
class PathCandidate:
    nodes: tuple[str, ...]
    length_km: float
    hops: int

    def sort_key(self) -> tuple:
        return (self.length_km, self.hops, self.nodes)


def _edge_lengths(topology: NetworkTopology) -> dict[frozenset, float]:
    return {frozenset(oms.endpoints): oms.length_km
            for oms in topology.omses}


def _dijkstra(adjacency: dict[str, tuple[str, ...]],
              lengths: dict[frozenset, float], src: str, dst: str,
              banned_edges: set[frozenset],
              banned_nodes: set[str]) -> PathCandidate | None:
    """Shortest src->dst path under the (length, hops, nodes) order."""
    heap = [(0.0, 0, (src,))]
    best: dict[str, tuple] = {}
    while heap:
        dist, hops, path = heapq.heappop(heap)
        node = path[-1]
        key = (dist, hops, path)
        if best.get(node, key) < key:
            continue
        if node == dst:
            return PathCandidate(nodes=path, length_km=dist, hops=hops)
        for nxt in adjacency[node]:
            edge = frozenset((node, nxt))
            if nxt in banned_nodes or edge in banned_edges:
                continue
            cand = (dist + lengths[edge], hops + 1, path + (nxt,))
            if nxt not in best or cand < best[nxt]:
                best[nxt] = cand
                heapq.heappush(heap, cand)
    return None


def k_shortest_paths(topology: NetworkTopology, src: str, dst: str,
                     k: int = 3) -> list[PathCandidate]:
    """Up to k loopless paths ordered by (length, hops, node list)."""
    src, dst = str(src), str(dst)
    if src == dst:
        raise PlanError("src equals dst")
    if src not in topology.sites:
        raise PlanError(f"unknown node {src!r}")
    if dst not in topology.sites:
        raise PlanError(f"unknown node {dst!r}")
    if k < 1:
        raise PlanError("k must be >= 1")
    adjacency = topology.adjacency()
    lengths = _edge_lengths(topology)

    first = _dijkstra(adjacency, lengths, src, dst, set(), set())
    if first is None:
        raise PlanError(f"no path from {src} to {dst}")
    found = [first]
    candidates: list[tuple] = []
    seen = {first.nodes}

    while len(found) < k:
        prev = found[-1].nodes
        for j in range(len(prev) - 1):
            spur = prev[j]
            root = prev[:j + 1]
            banned_edges = set()
            for path in found:
                if path.nodes[:j + 1] == root and len(path.nodes) > j + 1:
                    banned_edges.add(frozenset(path.nodes[j:j + 2]))
            banned_nodes = set(root[:-1])
            tail = _dijkstra(adjacency, lengths, spur, dst,
                             banned_edges, banned_nodes)
            if tail is None:
                continue
            nodes = root[:-1] + tail.nodes
            if nodes in seen:
                continue
            seen.add(nodes)
            root_len = sum(lengths[frozenset(pair)]
                           for pair in zip(root, root[1:]))
            cand = PathCandidate(nodes=nodes,
                                 length_km=root_len + tail.length_km,
                                 hops=len(nodes) - 1)
            heapq.heappush(candidates, (cand.sort_key(), cand))
        if not candidates:
            break
        _, nxt = heapq.heappop(candidates)
        found.append(nxt)
    return found


# --- spectrum occupancy ------------------------------------------------------

def _pairs(path: Sequence[str]) -> list[frozenset]:
    nodes = [str(n) for n in path]
    if len(nodes) < 2:
        raise PlanError(f"path too short: {nodes}")
    return [frozenset(p) for p in zip(nodes, nodes[1:])]


@dataclass
class OccupancyMap:
    """Per-OMS slice bitmaps; an OMS is keyed by its unordered endpoint
    pair since both directions share the spectrum."""

    slice_count: int
    masks: dict[frozenset, int] = field(default_factory=dict)

    @classmethod
    def from_services(cls, topology: NetworkTopology,
                      services: Sequence[Service]) -> "OccupancyMap":
        occ = cls(slice_count=topology.grid.slice_count)
        for svc in services:
            if svc.state == ServiceState.DROPPED:
                continue
            slices = service_slices(topology.grid, svc)
            occ.occupy(svc.path, slices.start,
                       slices.stop - slices.start)
        return occ

    def _window(self, start: int, width: int) -> int:
        if width < 1:
            raise PlanError("window width must be >= 1")
        if start < 0 or start + width > self.slice_count:
            raise PlanError("window exceeds the band edge")
        return ((1 << width) - 1) << start

    def is_free(self, path: Sequence[str], start: int, width: int) -> bool:
        window = self._window(start, width)
        return all(self.masks.get(pair, 0) & window == 0
                   for pair in _pairs(path))

    def occupy(self, path: Sequence[str], start: int, width: int) -> None:
        window = self._window(start, width)
        pairs = _pairs(path)
        for pair in pairs:
            if self.masks.get(pair, 0) & window:
                a, b = sorted(pair)
                raise ServiceError(
                    f"channel overlap on OMS {a}-{b} in window "
                    f"[{start}, {start + width})")
        for pair in pairs:
            self.masks[pair] = self.masks.get(pair, 0) | window

    def release(self, path: Sequence[str], start: int, width: int) -> None:
        window = self._window(start, width)
        pairs = _pairs(path)
        for pair in pairs:
            if self.masks.get(pair, 0) & window != window:
                a, b = sorted(pair)
                raise ServiceError(
                    f"window [{start}, {start + width}) not fully "
                    f"occupied on OMS {a}-{b}")
        for pair in pairs:
            self.masks[pair] &= ~window

    def free_windows(self, path: Sequence[str], width: int) -> list[int]:
        """All feasible start slices, ascending."""
        pairs = _pairs(path)
        merged = 0
        for pair in pairs:
            merged |= self.masks.get(pair, 0)
        out = []
        window = (1 << width) - 1
        for start in range(self.slice_count - width + 1):
            if merged & (window << start) == 0:
                out.append(start)
        return out


def first_fit(occupancy: OccupancyMap, path: Sequence[str],
              width_slices: int) -> int:
    """Smallest start slice free along the whole path."""
    windows = occupancy.free_windows(path, width_slices)
    if not windows:
        raise PlanError("spectrum exhausted on path "
                        + "-".join(str(n) for n in path))
    return windows[0]


# --- service planning --------------------------------------------------------

@dataclass(frozen=True)
class ServiceRequest:
    src: str
    dst: str
    rate_gbps: int
    width_slices: int = DEFAULT_WIDTH_SLICES
    launch_power_dbm: float = 0.0
    service_id: str | None = None
    protected: bool = False

    def __post_init__(self) -> None:
        if self.rate_gbps not in REQUIRED_GSNR_DB:
            raise PlanError(f"unknown rate {self.rate_gbps}G")


@dataclass(frozen=True)
class CandidateOutcome:
    path: tuple[str, ...]
    start_slice: int
    center_frequency_thz: float
    feasible: bool
    worst_margin_db: float | None
    reason: str


@dataclass(frozen=True)
class ServicePlan:
    feasible: bool
    service: Service | None
    path: tuple[str, ...] | None
    start_slice: int | None
    center_frequency_thz: float | None
    rehearsal: object  # RehearsalResult | None
    considered: tuple[CandidateOutcome, ...]


def plan_service(topology: NetworkTopology, occupancy: OccupancyMap,
                 twin, request: ServiceRequest,
                 services: Sequence[Service] = (), *, k: int = 3,
                 min_margin_db: float = 1.0) -> ServicePlan:
    """Pick the first (path, window) candidate whose rehearsal on the
    twin keeps every post-change margin at or above min_margin_db.

    Candidates are walked in (path rank, start slice) order, so the
    result is deterministic for a given occupancy. When windows exist
    but none pass, the plan is infeasible and carries the best-margin
    candidate as diagnostic; with no window anywhere the spectrum is
    exhausted and that is an error.
    """
    paths = k_shortest_paths(topology, request.src, request.dst, k)
    service_id = request.service_id or (
        f"svc-{request.src}-{request.dst}-{request.rate_gbps}g")
    considered: list[CandidateOutcome] = []
    best: tuple | None = None  # (worst margin, outcome, rehearsal, service)
    any_window = False
    for cand_path in paths:
        for start in occupancy.free_windows(cand_path.nodes,
                                            request.width_slices):
            any_window = True
            center = center_frequency(topology.grid, start,
                                      request.width_slices)
            svc = make_service(
                service_id, cand_path.nodes, center, request.rate_gbps,
                width_slices=request.width_slices,
                launch_power_dbm=request.launch_power_dbm,
                protected=request.protected)
            command = make_command("AddService", service_to_payload(svc))
            try:
                rehearsal = twin.rehearse([command], services,
                                          min_margin_db=min_margin_db)
            except (CommandError, ServiceError) as exc:
                considered.append(CandidateOutcome(
                    path=cand_path.nodes, start_slice=start,
                    center_frequency_thz=center, feasible=False,
                    worst_margin_db=None, reason=str(exc)))
                continue
            worst = rehearsal.margins.min_margin_db
            if rehearsal.feasible:
                considered.append(CandidateOutcome(
                    path=cand_path.nodes, start_slice=start,
                    center_frequency_thz=center, feasible=True,
                    worst_margin_db=worst, reason="ok"))
                return ServicePlan(
                    feasible=True, service=svc, path=cand_path.nodes,
                    start_slice=start, center_frequency_thz=center,
                    rehearsal=rehearsal, considered=tuple(considered))
            considered.append(CandidateOutcome(
                path=cand_path.nodes, start_slice=start,
                center_frequency_thz=center, feasible=False,
                worst_margin_db=worst,
                reason=f"margin below {min_margin_db} dB"))
            if worst is not None and (best is None or worst > best[0]):
                best = (worst, considered[-1], rehearsal, svc)
    if not any_window:
        raise PlanError("spectrum exhausted on all candidate paths "
                        f"{request.src}->{request.dst}")
    if best is None:  # every candidate was rejected before rehearsal
        return ServicePlan(
            feasible=False, service=None, path=None, start_slice=None,
            center_frequency_thz=None, rehearsal=None,
            considered=tuple(considered))
    _, outcome, rehearsal, svc = best
    return ServicePlan(
        feasible=False, service=svc, path=outcome.path,
        start_slice=outcome.start_slice,
        center_frequency_thz=outcome.center_frequency_thz,
        rehearsal=rehearsal, considered=tuple(considered))
