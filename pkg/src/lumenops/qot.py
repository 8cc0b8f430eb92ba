"""Closed-form quality-of-transmission engine.

Per span, nonlinear interference is treated as additive Gaussian noise
whose spectral density at each channel is the incoherent GN closed
form, one term per comb channel (the self term is the interferer
term's zero-spacing limit); amplifier ASE is added at each amplifier
output. Both noise terms ride the same downstream losses and gains as
the signal, so the generalized SNR at the receiver is simply
signal / (ASE + NLI) in the channel bandwidth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .errors import ServiceError
from .topology import (
    Amplifier,
    ChannelGrid,
    FiberSpan,
    NetworkTopology,
    Service,
    ServiceState,
    oms_chain,
    service_slices,
)
from .units import PLANCK_J_S, LIGHT_SPEED_M_S, db_to_lin, dbm_to_mw, lin_to_db

REF_BANDWIDTH_GHZ = 12.5
GSNR_CAP_DB = 60.0

# Receiver thresholds per line rate.
REQUIRED_GSNR_DB = {100: 10.0, 400: 17.0, 800: 20.0}


def alpha_per_km(attenuation_db_km: float) -> float:
    """Field attenuation coefficient, 1/km."""
    return attenuation_db_km * math.log(10.0) / 10.0


def effective_length_km(attenuation_db_km: float, length_km: float) -> float:
    a = alpha_per_km(attenuation_db_km)
    return (1.0 - math.exp(-a * length_km)) / a


def beta2_s2_m(dispersion_ps_nm_km: float, center_thz: float) -> float:
    """Group velocity dispersion from the D parameter, at center_thz."""
    d_si = dispersion_ps_nm_km * 1e-6  # s/m^2
    lam_m = LIGHT_SPEED_M_S / (center_thz * 1e12)
    return -d_si * lam_m * lam_m / (2.0 * math.pi * LIGHT_SPEED_M_S)


def tilt_offset_db(grid: ChannelGrid, amplifier: Amplifier,
                   frequency_thz: float) -> float:
    """Gain deviation at frequency_thz. tilt_db is edge to edge across
    the grid band, zero at band center."""
    if amplifier.tilt_db == 0.0:
        return 0.0
    return amplifier.tilt_db * ((frequency_thz - grid.band_center_thz)
                                / grid.band_width_thz)


def ase_power(amplifier: Amplifier, center_thz: float,
              ref_bandwidth_ghz: float = REF_BANDWIDTH_GHZ, *,
              gain_db: float | None = None) -> float:
    """ASE power in mW added at the amplifier output, in the reference
    bandwidth. gain_db overrides the flat gain (tilt already applied)."""
    g = amplifier.gain_db if gain_db is None else gain_db
    g_lin = db_to_lin(g)
    if g_lin <= 1.0:
        return 0.0
    nu_hz = center_thz * 1e12
    watts = (PLANCK_J_S * nu_hz * db_to_lin(amplifier.noise_figure_db)
             * (g_lin - 1.0) * ref_bandwidth_ghz * 1e9)
    return watts * 1e3


@dataclass(frozen=True)
class CombChannel:
    """One channel at a fiber input: power_mw is the power entering the
    span, after the input connector."""

    center_thz: float
    width_slices: int
    power_mw: float
    symbol_rate_gbd: float


def _gnli_psd_mw_hz(span: FiberSpan, comb: Sequence[CombChannel],
                    target: CombChannel) -> float:
    """NLI power spectral density at the target channel for one span,
    mW/Hz.

    One closed-form term per comb channel, cubic in the channel power
    spectral densities. The asinh difference stays positive for any
    spacing, so the self term needs no special casing: it is the
    zero-spacing, equal-bandwidth limit of the interferer term.
    """
    if span.gamma_per_w_km == 0.0:
        return 0.0
    a_m = alpha_per_km(span.attenuation_db_km) / 1000.0
    leff_m = (1.0 - math.exp(-a_m * span.length_km * 1000.0)) / a_m
    leffa_m = 1.0 / a_m
    gamma_m = span.gamma_per_w_km / 1000.0

    b2 = abs(beta2_s2_m(span.dispersion_ps_nm_km, target.center_thz))
    f_i_hz = target.center_thz * 1e12
    b_i_hz = target.symbol_rate_gbd * 1e9
    g_i = target.power_mw * 1e-3 / b_i_hz

    asinh = math.asinh
    k = math.pi ** 2 * b2 * leffa_m * b_i_hz
    norm = 4.0 * math.pi * b2 * leffa_m
    total = 0.0
    for ch in comb:
        b_j_hz = ch.symbol_rate_gbd * 1e9
        g_j = ch.power_mw * 1e-3 / b_j_hz
        df_hz = abs(ch.center_thz * 1e12 - f_i_hz)
        psi = (asinh(k * (df_hz + 0.5 * b_j_hz))
               - asinh(k * (df_hz - 0.5 * b_j_hz))) / norm
        total += g_j * g_j * psi
    psd_w_hz = (16.0 / 27.0) * gamma_m ** 2 * leff_m ** 2 * g_i * total
    return psd_w_hz * 1e3


def nli_power_per_span(span: FiberSpan, comb: Sequence[CombChannel],
                       target: CombChannel) -> float:
    """NLI power in mW falling into the target channel bandwidth for one
    span, given the comb entering that span."""
    comb = list(comb)
    if not comb:
        raise ValueError("comb is empty")
    if not any(c.center_thz == target.center_thz
               and c.width_slices == target.width_slices for c in comb):
        raise ValueError("target channel is not part of the comb")
    psd = _gnli_psd_mw_hz(span, comb, target)
    return psd * target.symbol_rate_gbd * 1e9


@dataclass(frozen=True)
class ChannelQot:
    service_id: str
    path: tuple[str, ...]
    center_frequency_thz: float
    rate_gbps: int
    width_slices: int
    launch_power_dbm: float
    signal_power_mw: float
    ase_power_mw: float
    nli_power_mw: float
    gsnr_db: float


@dataclass(frozen=True)
class QotReport:
    channels: tuple[ChannelQot, ...]

    @property
    def min_gsnr_db(self) -> float | None:
        return min((c.gsnr_db for c in self.channels), default=None)

    @property
    def max_gsnr_db(self) -> float | None:
        return max((c.gsnr_db for c in self.channels), default=None)

    @property
    def mean_gsnr_db(self) -> float | None:
        if not self.channels:
            return None
        return sum(c.gsnr_db for c in self.channels) / len(self.channels)

    def channel(self, service_id: str) -> ChannelQot:
        for ch in self.channels:
            if ch.service_id == service_id:
                return ch
        raise ServiceError(f"no channel for service {service_id!r}")


@dataclass(frozen=True)
class PropagationResult:
    report: QotReport
    oms_outputs: dict[tuple[str, str], float]  # direction -> total mW


def assert_no_overlap(topology: NetworkTopology,
                      services: Sequence[Service]) -> None:
    """Spectrum on an OMS is shared by both directions; any two services
    whose paths cross the same OMS must not share slices."""
    used: dict[frozenset, dict[int, str]] = {}
    for svc in services:
        slices = service_slices(topology.grid, svc)
        for hop in oms_chain(topology, svc.path):
            key = frozenset(hop.oms.endpoints)
            owners = used.setdefault(key, {})
            for s in slices:
                other = owners.get(s)
                if other is not None and other != svc.service_id:
                    a, b = sorted(hop.oms.endpoints)
                    raise ServiceError(
                        f"channel overlap on OMS {a}-{b} slice {s}: "
                        f"{other} vs {svc.service_id}")
                owners[s] = svc.service_id


def _live(services: Iterable[Service]) -> list[Service]:
    return [s for s in services if s.state != ServiceState.DROPPED]


def propagate(topology: NetworkTopology, services: Sequence[Service],
              targets: Sequence[str] | None = None) -> PropagationResult:
    """Run the full comb through the network.

    Phase one walks every service along its path to find the power each
    channel carries into each fiber span. Phase two accumulates ASE and
    NLI along each target's path using those fiber-input combs.
    """
    live = _live(services)
    assert_no_overlap(topology, live)
    grid = topology.grid

    # phase one: per-span input combs, keyed by traversal direction
    combs: dict[tuple[str, str, int], list[CombChannel]] = {}
    oms_outputs: dict[tuple[str, str], float] = {}
    chains = {s.service_id: oms_chain(topology, s.path) for s in live}
    for svc in live:
        acc = dbm_to_mw(svc.launch_power_dbm)
        freq = svc.center_frequency_thz
        for hop in chains[svc.service_id]:
            for idx, (span, amp, cin, cout) in enumerate(hop.elements()):
                acc *= db_to_lin(-cin)
                combs.setdefault((hop.source, hop.target, idx), []).append(
                    CombChannel(freq, svc.width_slices, acc,
                                svc.symbol_rate_gbd))
                gain = amp.gain_db + tilt_offset_db(grid, amp, freq)
                acc *= db_to_lin(-span.attenuation_db_km * span.length_km
                                 - cout + gain)
            key = (hop.source, hop.target)
            oms_outputs[key] = oms_outputs.get(key, 0.0) + acc

    # phase two: noise accumulation per target channel
    if targets is None:
        wanted = live
    else:
        by_id = {s.service_id: s for s in live}
        try:
            wanted = [by_id[t] for t in targets]
        except KeyError as exc:
            raise ServiceError(f"unknown target service {exc.args[0]!r}")

    channels = []
    for svc in sorted(wanted, key=lambda s: s.service_id):
        freq = svc.center_frequency_thz
        b_ch_hz = svc.symbol_rate_gbd * 1e9
        sig = dbm_to_mw(svc.launch_power_dbm)
        ase = 0.0  # in the reference bandwidth
        nli = 0.0
        for hop in chains[svc.service_id]:
            for idx, (span, amp, cin, cout) in enumerate(hop.elements()):
                f_in = db_to_lin(-cin)
                sig *= f_in
                ase *= f_in
                nli *= f_in
                key = (hop.source, hop.target, idx)
                # sig retraces the phase-one power walk, so this equals
                # the comb entry recorded for this service at this span
                here = CombChannel(freq, svc.width_slices, sig,
                                   svc.symbol_rate_gbd)
                psd = _gnli_psd_mw_hz(span, combs[key], here)
                nli += psd * b_ch_hz
                gain = amp.gain_db + tilt_offset_db(grid, amp, freq)
                rest = db_to_lin(-span.attenuation_db_km * span.length_km
                                 - cout + gain)
                sig *= rest
                ase *= rest
                nli *= rest
                ase += ase_power(amp, freq, REF_BANDWIDTH_GHZ, gain_db=gain)
        ase_bch = ase * (svc.symbol_rate_gbd / REF_BANDWIDTH_GHZ)
        noise = ase_bch + nli
        if noise <= 0.0:
            gsnr = GSNR_CAP_DB
        else:
            gsnr = min(GSNR_CAP_DB, lin_to_db(sig / noise))
        channels.append(ChannelQot(
            service_id=svc.service_id,
            path=svc.path,
            center_frequency_thz=freq,
            rate_gbps=svc.rate_gbps,
            width_slices=svc.width_slices,
            launch_power_dbm=svc.launch_power_dbm,
            signal_power_mw=sig,
            ase_power_mw=ase_bch,
            nli_power_mw=nli,
            gsnr_db=gsnr,
        ))
    return PropagationResult(report=QotReport(channels=tuple(channels)),
                             oms_outputs=oms_outputs)


def estimate_path_qot(topology: NetworkTopology, services: Sequence[Service],
                      targets: Sequence[str] | None = None) -> QotReport:
    """GSNR for the target channels (all live services by default)."""
    return propagate(topology, services, targets).report


@dataclass(frozen=True)
class ChannelMargin:
    service_id: str
    rate_gbps: int
    gsnr_db: float
    required_gsnr_db: float
    margin_db: float


@dataclass(frozen=True)
class MarginReport:
    channels: tuple[ChannelMargin, ...]

    @property
    def min_margin_db(self) -> float | None:
        return min((c.margin_db for c in self.channels), default=None)

    @property
    def all_positive(self) -> bool:
        return all(c.margin_db >= 0.0 for c in self.channels)


def margin(report: QotReport,
           required: Mapping[int, float] | None = None) -> MarginReport:
    """GSNR margin of every channel against its rate threshold."""
    table = REQUIRED_GSNR_DB if required is None else required
    rows = []
    for ch in report.channels:
        req = table.get(ch.rate_gbps)
        if req is None:
            raise ServiceError(
                f"no GSNR requirement for rate {ch.rate_gbps}G")
        rows.append(ChannelMargin(
            service_id=ch.service_id,
            rate_gbps=ch.rate_gbps,
            gsnr_db=ch.gsnr_db,
            required_gsnr_db=req,
            margin_db=ch.gsnr_db - req,
        ))
    return MarginReport(channels=tuple(rows))
