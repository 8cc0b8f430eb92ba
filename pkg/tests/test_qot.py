"""GN engine against the independent mpmath oracle.

The frozen constants below were produced by ``python3 tests/gn_oracle.py``
and must never be regenerated from package code. Randomized comparisons
re-derive oracle values per instance.
"""

import math
import random

import pytest

import gn_oracle as oracle
from lumenops.qot import (REQUIRED_GSNR_DB, CombChannel, assert_no_overlap,
                          ase_power, beta2_s2_m, effective_length_km, margin,
                          nli_power_per_span, propagate, tilt_offset_db)
from lumenops.errors import ServiceError
from lumenops.topology import (Amplifier, ChannelGrid, FiberSpan,
                               NetworkTopology, Oms, default_topology,
                               make_service, oms_chain)

# frozen oracle output, mpmath at 50 significant digits
GOLDEN_ASE_MW = 0.0005007068245700407
GOLDEN_SINGLE_SPAN_NLI_MW = 0.00011028123325407509
GOLDEN_PATH_561_GSNR_DB = 23.483917007527527
GOLDEN_BETA2_PS2_KM = -21.369421145323322
GOLDEN_LEFF_KM = 21.169274886976461

REL = 1e-9


def test_golden_ase():
    amp = Amplifier(gain_db=20.0, noise_figure_db=5.0)
    assert ase_power(amp, 193.1) == pytest.approx(GOLDEN_ASE_MW, rel=REL)


def test_golden_single_span_nli():
    span = FiberSpan(length_km=80.0)
    ch = CombChannel(center_thz=193.1, width_slices=8, power_mw=1.0,
                     symbol_rate_gbd=64.0)
    got = nli_power_per_span(span, [ch], ch)
    assert got == pytest.approx(GOLDEN_SINGLE_SPAN_NLI_MW, rel=REL)


def test_golden_path_gsnr():
    topo = default_topology()
    svc = make_service("g", ("5", "6", "1"), 193.1, 400)
    report = propagate(topo, [svc]).report
    assert report.channels[0].gsnr_db == pytest.approx(
        GOLDEN_PATH_561_GSNR_DB, rel=REL)


def test_golden_beta2_and_leff():
    assert beta2_s2_m(16.7, 193.1) * 1e27 == pytest.approx(
        GOLDEN_BETA2_PS2_KM, rel=REL)
    assert effective_length_km(0.20, 80.0) == pytest.approx(
        GOLDEN_LEFF_KM, rel=REL)


def _random_comb(rng, n):
    slots = rng.sample(range(0, 40), n)
    return [CombChannel(center_thz=191.05 + 0.1 * s, width_slices=8,
                        power_mw=rng.uniform(0.2, 2.0),
                        symbol_rate_gbd=rng.choice((32.0, 64.0, 96.0)))
            for s in sorted(slots)]


def test_nli_matches_oracle_on_random_combs():
    rng = random.Random(20240817)
    for _ in range(50):
        span = FiberSpan(
            length_km=rng.uniform(30.0, 120.0),
            attenuation_db_km=rng.uniform(0.16, 0.24),
            dispersion_ps_nm_km=rng.uniform(14.0, 19.0),
            gamma_per_w_km=rng.uniform(0.9, 1.7))
        comb = _random_comb(rng, rng.randint(1, 6))
        target = rng.choice(comb)
        got = nli_power_per_span(span, comb, target)
        want = oracle.single_span_nli_w(
            repr(span.attenuation_db_km), repr(span.length_km),
            repr(span.gamma_per_w_km), repr(span.dispersion_ps_nm_km),
            [(repr(c.center_thz), repr(c.power_mw * 1e-3),
              repr(c.symbol_rate_gbd)) for c in comb],
            comb.index(target)) * 1000
        assert got == pytest.approx(float(want), rel=1e-9)


def test_ase_matches_oracle_on_random_amps():
    rng = random.Random(7)
    for _ in range(50):
        gain = rng.uniform(1.0, 30.0)
        nf = rng.uniform(3.0, 8.0)
        freq = rng.uniform(191.0, 196.0)
        got = ase_power(Amplifier(gain_db=gain, noise_figure_db=nf), freq)
        want = oracle.ase_w(repr(gain), repr(nf), repr(freq), "12.5e9") * 1000
        assert got == pytest.approx(float(want), rel=1e-9)


def test_single_channel_path_matches_oracle_chain():
    topo = default_topology()
    svc = make_service("x", ("3", "4", "5", "6", "1"), 192.05, 100,
                       launch_power_dbm=-1.0)
    got = propagate(topo, [svc]).report.channels[0].gsnr_db
    spans = []
    for hop in oms_chain(topo, svc.path):
        for span, amp, cin, cout in hop.elements():
            spans.append({
                "length_km": repr(span.length_km),
                "attenuation_db_km": repr(span.attenuation_db_km),
                "gamma_per_w_km": repr(span.gamma_per_w_km),
                "dispersion_ps_nm_km": repr(span.dispersion_ps_nm_km),
                "conn_in_db": repr(cin),
                "conn_out_db": repr(cout),
                "gain_db": repr(amp.gain_db),
                "nf_db": repr(amp.noise_figure_db),
            })
    want = oracle.path_gsnr_db(spans, repr(svc.launch_power_dbm),
                               repr(svc.center_frequency_thz),
                               repr(svc.symbol_rate_gbd))
    assert got == pytest.approx(float(want), rel=1e-9)


def test_ase_zero_at_unity_gain():
    amp = Amplifier(gain_db=0.0, noise_figure_db=5.0)
    assert ase_power(amp, 193.1) == 0.0


def test_nli_plus_three_db_per_db_of_power():
    span = FiberSpan(length_km=80.0)
    comb = [CombChannel(193.05, 8, 1.0, 64.0), CombChannel(193.45, 8, 0.7,
                                                           64.0)]
    up = [CombChannel(c.center_thz, c.width_slices,
                      c.power_mw * 10 ** 0.1, c.symbol_rate_gbd)
          for c in comb]
    base = nli_power_per_span(span, comb, comb[0])
    boosted = nli_power_per_span(span, up, up[0])
    assert 10 * math.log10(boosted / base) == pytest.approx(3.0, abs=1e-9)


def test_tilt_offset_is_zero_at_band_center_and_antisymmetric():
    grid = ChannelGrid()
    amp = Amplifier(gain_db=16.0, tilt_db=1.0)
    mid = grid.band_center_thz
    assert tilt_offset_db(grid, amp, mid) == 0.0
    lo = tilt_offset_db(grid, amp, mid - 1.0)
    hi = tilt_offset_db(grid, amp, mid + 1.0)
    assert lo == pytest.approx(-hi)
    edge_to_edge = (tilt_offset_db(grid, amp, grid.top_frequency_thz)
                    - tilt_offset_db(grid, amp, grid.base_frequency_thz))
    assert edge_to_edge == pytest.approx(amp.tilt_db)


def test_overlap_detection_shared_oms():
    topo = default_topology()
    a = make_service("a", ("1", "2"), 193.05, 400)
    b = make_service("b", ("2", "1"), 193.05, 400)  # other direction
    with pytest.raises(ServiceError):
        assert_no_overlap(topo, [a, b])
    c = make_service("c", ("2", "1"), 193.15, 400)
    assert_no_overlap(topo, [a, c])


def test_propagate_sorts_channels_and_fills_oms_outputs():
    topo = default_topology()
    svcs = [make_service("zz", ("5", "6", "1"), 194.05, 400),
            make_service("aa", ("5", "6", "1"), 194.55, 400)]
    result = propagate(topo, svcs)
    assert [c.service_id for c in result.report.channels] == ["aa", "zz"]
    assert ("5", "6") in result.oms_outputs
    assert ("6", "1") in result.oms_outputs


def test_margin_table():
    topo = default_topology()
    svc = make_service("m", ("5", "6", "1"), 193.1, 400)
    report = propagate(topo, [svc]).report
    mrep = margin(report)
    ch = mrep.channels[0]
    assert ch.required_gsnr_db == REQUIRED_GSNR_DB[400]
    assert ch.margin_db == pytest.approx(ch.gsnr_db - 17.0)
    with pytest.raises(ServiceError):
        margin(report, required={100: 10.0})


def test_gsnr_monotone_in_span_count():
    grid = ChannelGrid()
    svc = make_service("m", ("a", "b"), 193.05, 400)
    last = None
    for n_spans in (1, 2, 3, 5):
        spans = [FiberSpan(length_km=60.0) for _ in range(n_spans)]
        amps = [Amplifier(gain_db=s.loss_db) for s in spans]
        topo = NetworkTopology(name="line", sites=["a", "b"],
                               omses=[Oms(("a", "b"), spans, amps)],
                               grid=grid)
        gsnr = propagate(topo, [svc]).report.channels[0].gsnr_db
        if last is not None:
            assert gsnr < last
        last = gsnr
