"""Plant model: grid arithmetic, traversal, service validation, config IO."""

import pytest

from lumenops.errors import ConfigError, ServiceError, TopologyError
from lumenops.topology import (Amplifier, ChannelGrid, FiberSpan,
                               NetworkTopology, Oms, center_frequency,
                               default_topology, load_topology, make_service,
                               oms_chain, path_length_km, serialize_topology,
                               service_slices, slice_index_of,
                               validate_service)


def test_default_topology_shape():
    topo = default_topology()
    assert sorted(topo.sites) == ["1", "2", "3", "4", "5", "6"]
    assert len(topo.omses) == 7
    assert topo.grid == ChannelGrid(191.0, 12.5, 480)
    # ring plus the 2-5 chord
    for a, b in [("1", "2"), ("2", "3"), ("3", "4"), ("4", "5"),
                 ("5", "6"), ("6", "1"), ("2", "5")]:
        assert topo.has_oms(a, b)


def test_grid_round_trip_exact():
    grid = ChannelGrid()
    for start in (0, 1, 7, 216, 472):
        center = center_frequency(grid, start, 8)
        assert slice_index_of(grid, center, 8) == start
    assert center_frequency(grid, 0, 8) == 191.05
    assert center_frequency(grid, 216, 8) == 193.75


def test_grid_rejects_off_grid_and_out_of_band():
    grid = ChannelGrid()
    with pytest.raises(TopologyError):
        slice_index_of(grid, 191.051, 8)
    with pytest.raises(TopologyError):
        slice_index_of(grid, 190.0, 8)
    with pytest.raises(TopologyError):
        center_frequency(grid, 479, 8)
    with pytest.raises(TopologyError):
        slice_index_of(grid, 191.05, 0)


def test_service_slices():
    grid = ChannelGrid()
    svc = make_service("s", ("1", "2"), 191.05, 400)
    assert list(service_slices(grid, svc)) == list(range(0, 8))


def test_make_service_fills_rate_table():
    svc = make_service("s", ("1", "2"), 193.05, 800)
    assert svc.format == "DP-PCS-64QAM"
    assert svc.symbol_rate_gbd == 96.0
    with pytest.raises(ServiceError):
        make_service("s", ("1", "2"), 193.05, 200)


def test_validate_service_checks_path_and_grid():
    topo = default_topology()
    ok = make_service("s", ("1", "2"), 193.05, 400)
    validate_service(topo, ok)
    with pytest.raises(TopologyError):
        validate_service(topo, make_service("s", ("1", "4"), 193.05, 400))
    with pytest.raises(ServiceError):
        validate_service(topo, make_service("s", ("1", "2"), 193.051, 400))


def test_oms_chain_reverses_connector_order():
    topo = default_topology()
    fwd = oms_chain(topo, ("1", "2"))[0]
    rev = oms_chain(topo, ("2", "1"))[0]
    assert fwd.oms is rev.oms
    assert fwd.reverse != rev.reverse
    f = list(fwd.elements())
    r = list(rev.elements())
    assert [id(span) for span, *_ in f] == [id(span) for span, *_ in
                                            reversed(r)]
    span, _, cin, cout = f[0]
    rspan, _, rcin, rcout = r[-1]
    assert rspan is span and rcin == cout and rcout == cin


def test_oms_chain_rejects_bad_paths():
    topo = default_topology()
    with pytest.raises(TopologyError):
        oms_chain(topo, ("1",))
    with pytest.raises(TopologyError):
        oms_chain(topo, ("1", "1"))
    with pytest.raises(TopologyError):
        oms_chain(topo, ("1", "4"))


def test_path_length():
    topo = default_topology()
    # 5-6 is 82+90, 6-1 is 70
    assert path_length_km(topo, ("5", "6", "1")) == pytest.approx(242.0)


def test_span_and_amplifier_validation():
    with pytest.raises(TopologyError):
        FiberSpan(length_km=0.0)
    with pytest.raises(TopologyError):
        FiberSpan(length_km=80.0, attenuation_db_km=0.0)
    with pytest.raises(TopologyError):
        Amplifier(gain_db=-1.0)
    with pytest.raises(TopologyError):
        Amplifier(gain_db=10.0, noise_figure_db=2.0)
    with pytest.raises(TopologyError):
        Oms(endpoints=("a", "a"), spans=[FiberSpan(10.0)],
            amplifiers=[Amplifier(3.0)])
    with pytest.raises(TopologyError):
        Oms(endpoints=("a", "b"), spans=[FiberSpan(10.0)], amplifiers=[])


def test_topology_rejects_duplicates_and_disconnection():
    span = FiberSpan(10.0)
    amp = Amplifier(3.0)
    with pytest.raises(TopologyError):
        NetworkTopology(
            name="dup", sites=["a", "b"],
            omses=[Oms(("a", "b"), [span], [amp]),
                   Oms(("b", "a"), [span], [amp])])
    with pytest.raises(TopologyError):
        NetworkTopology(name="split", sites=["a", "b", "c"],
                        omses=[Oms(("a", "b"), [span], [amp])])


def test_config_round_trip():
    topo = default_topology()
    again = load_topology(serialize_topology(topo))
    assert serialize_topology(again) == serialize_topology(topo)
    assert again.grid == topo.grid
    assert [o.endpoints for o in again.omses] == [o.endpoints
                                                  for o in topo.omses]


def test_load_topology_errors():
    with pytest.raises(ConfigError):
        load_topology("sites: [a\n")
    with pytest.raises(ConfigError):
        load_topology("- just\n- a list\n")
    with pytest.raises(ConfigError):
        load_topology("schema_version: 99\nsites: [a]\n")
    with pytest.raises(ConfigError):
        load_topology(
            "sites: [a, b]\n"
            "omses:\n"
            "  - endpoints: [a, b]\n"
            "    spans:\n"
            "      - length_km: not-a-number\n")


def test_default_amplifier_gain_compensates_span_loss():
    topo = default_topology()
    for oms in topo.omses:
        for span, amp in zip(oms.spans, oms.amplifiers):
            assert amp.gain_db == pytest.approx(span.loss_db)
