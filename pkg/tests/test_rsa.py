"""Routing and spectrum assignment against brute-force references."""

import itertools
import random

import pytest

from lumenops.errors import PlanError, ServiceError
from lumenops.rsa import (OccupancyMap, ServiceRequest, first_fit,
                          k_shortest_paths, plan_service)
from lumenops.scenarios import case3_services
from lumenops.topology import default_topology, make_service
from lumenops.twin import DigitalTwin


def _all_simple_paths(topology, src, dst):
    """Every loopless path with its km length, brute force."""
    adjacency = topology.adjacency()
    lengths = {frozenset(o.endpoints): o.length_km for o in topology.omses}
    out = []

    def walk(node, visited, path, dist):
        if node == dst:
            out.append((dist, len(path) - 1, tuple(path)))
            return
        for nxt in adjacency[node]:
            if nxt in visited:
                continue
            walk(nxt, visited | {nxt}, path + [nxt],
                 dist + lengths[frozenset((node, nxt))])

    walk(src, {src}, [src], 0.0)
    out.sort()
    return out


def test_k_shortest_matches_exhaustive_enumeration_all_pairs():
    topo = default_topology()
    for src, dst in itertools.permutations(topo.sites, 2):
        want = _all_simple_paths(topo, src, dst)
        for k in (1, 2, 3, len(want)):
            got = k_shortest_paths(topo, src, dst, k)
            assert len(got) == min(k, len(want))
            for cand, (dist, hops, nodes) in zip(got, want):
                assert cand.nodes == nodes
                assert cand.hops == hops
                assert cand.length_km == pytest.approx(dist)
        # asking beyond the supply returns the full ordered set
        overshoot = k_shortest_paths(topo, src, dst, len(want) + 5)
        assert [c.nodes for c in overshoot] == [n for _, _, n in want]


def test_k_shortest_argument_validation():
    topo = default_topology()
    with pytest.raises(PlanError):
        k_shortest_paths(topo, "1", "1")
    with pytest.raises(PlanError):
        k_shortest_paths(topo, "1", "99")
    with pytest.raises(PlanError):
        k_shortest_paths(topo, "1", "2", k=0)


def _brute_force_first_fit(masks, path_pairs, width, slice_count):
    merged = 0
    for pair in path_pairs:
        merged |= masks.get(pair, 0)
    bits = [(merged >> s) & 1 for s in range(slice_count)]
    for start in range(slice_count - width + 1):
        if all(b == 0 for b in bits[start:start + width]):
            return start
    return None


def test_first_fit_minimality_on_random_occupancy():
    rng = random.Random(1234)
    topo = default_topology()
    paths = [("1", "2"), ("2", "5"), ("1", "2", "5"), ("3", "4", "5"),
             ("5", "6", "1"), ("2", "3", "4", "5", "6", "1")]
    for trial in range(500):
        occ = OccupancyMap(slice_count=64)
        # scatter random occupied windows over random single-hop edges
        for _ in range(rng.randint(0, 40)):
            edge_path = rng.choice(paths)
            width = rng.randint(1, 10)
            start = rng.randint(0, 64 - width)
            if occ.is_free(edge_path, start, width):
                occ.occupy(edge_path, start, width)
        path = rng.choice(paths)
        width = rng.randint(1, 10)
        pairs = [frozenset(p) for p in zip(path, path[1:])]
        want = _brute_force_first_fit(occ.masks, pairs, width, 64)
        if want is None:
            with pytest.raises(PlanError):
                first_fit(occ, path, width)
        else:
            got = first_fit(occ, path, width)
            assert got == want, f"trial {trial}"
            assert occ.is_free(path, got, width)
            for earlier in range(got):
                assert not occ.is_free(path, earlier, width)


def test_occupancy_occupy_release_round_trip():
    occ = OccupancyMap(slice_count=32)
    occ.occupy(("1", "2", "5"), 4, 8)
    assert not occ.is_free(("2", "1"), 4, 8)  # unordered pair key
    assert not occ.is_free(("2", "5"), 11, 1)
    with pytest.raises(ServiceError):
        occ.occupy(("2", "5"), 8, 2)
    occ.release(("1", "2", "5"), 4, 8)
    assert occ.is_free(("1", "2", "5"), 4, 8)
    with pytest.raises(ServiceError):
        occ.release(("1", "2"), 4, 8)
    with pytest.raises(PlanError):
        occ.occupy(("1", "2"), 30, 4)


def test_occupancy_from_services_skips_dropped():
    topo = default_topology()
    import dataclasses

    from lumenops.topology import ServiceState
    live = make_service("a", ("1", "2"), 191.05, 400)
    gone = dataclasses.replace(
        make_service("b", ("1", "2"), 191.55, 400),
        state=ServiceState.DROPPED)
    occ = OccupancyMap.from_services(topo, [live, gone])
    assert not occ.is_free(("1", "2"), 0, 8)
    assert occ.is_free(("1", "2"), 8, 8)


def test_plan_service_case3_center():
    topo = default_topology()
    services = case3_services()
    occ = OccupancyMap.from_services(topo, services)
    plan = plan_service(topo, occ, DigitalTwin(topo),
                        ServiceRequest(src="2", dst="1", rate_gbps=800),
                        services)
    assert plan.feasible
    assert plan.center_frequency_thz == 193.75
    assert plan.start_slice == 216
    assert plan.path == ("2", "1")


def test_plan_service_empty_spectrum_starts_at_band_edge():
    topo = default_topology()
    occ = OccupancyMap(slice_count=topo.grid.slice_count)
    plan = plan_service(topo, occ, DigitalTwin(topo),
                        ServiceRequest(src="2", dst="1", rate_gbps=800), [])
    assert plan.feasible
    assert plan.center_frequency_thz == 191.05
    assert plan.start_slice == 0


def test_plan_service_exhausted_spectrum():
    topo = default_topology()
    occ = OccupancyMap(slice_count=topo.grid.slice_count)
    for path in (("2", "1"), ("2", "5"), ("2", "3")):
        occ.occupy(path, 0, topo.grid.slice_count)
    with pytest.raises(PlanError):
        plan_service(topo, occ, DigitalTwin(topo),
                     ServiceRequest(src="2", dst="1", rate_gbps=800), [])


def test_plan_service_infeasible_margin_reports_best_candidate():
    topo = default_topology()
    services = case3_services()
    occ = OccupancyMap.from_services(topo, services)
    plan = plan_service(topo, occ, DigitalTwin(topo),
                        ServiceRequest(src="2", dst="1", rate_gbps=800),
                        services, min_margin_db=30.0)
    assert not plan.feasible
    assert plan.considered
    assert all(not c.feasible for c in plan.considered)
    assert plan.service is not None  # best-margin diagnostic carried


def test_service_request_rejects_unknown_rate():
    with pytest.raises(PlanError):
        ServiceRequest(src="1", dst="2", rate_gbps=600)
