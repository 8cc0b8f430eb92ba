"""Independent high-precision oracle for the closed-form GN physics.

Everything here is computed with mpmath in SI units, with no imports from
the package under test. Frozen constants in the test suite were produced
by ``python tests/gn_oracle.py``; the functions stay importable so
property tests can compare implementation output against the oracle on
randomized inputs.
"""

from mpmath import mp, mpf, asinh, exp, log, pi

mp.dps = 50

PLANCK_J_S = mpf("6.62607015e-34")
LIGHT_SPEED_M_S = mpf("299792458.0")


def db_to_lin(db):
    return mpf(10) ** (mpf(db) / 10)


def lin_to_db(x):
    return 10 * log(mpf(x), 10)


def alpha_per_km(attenuation_db_km):
    return mpf(attenuation_db_km) * log(mpf(10)) / 10


def effective_length_km(attenuation_db_km, length_km):
    a = alpha_per_km(attenuation_db_km)
    return (1 - exp(-a * mpf(length_km))) / a


def beta2_s2_m(dispersion_ps_nm_km, center_thz):
    d_si = mpf(dispersion_ps_nm_km) * mpf("1e-6")  # s/m^2
    lam = LIGHT_SPEED_M_S / (mpf(center_thz) * mpf("1e12"))
    return -d_si * lam * lam / (2 * pi * LIGHT_SPEED_M_S)


def ase_w(gain_db, nf_db, center_thz, ref_bandwidth_hz):
    nu = mpf(center_thz) * mpf("1e12")
    return (
        PLANCK_J_S
        * nu
        * db_to_lin(nf_db)
        * (db_to_lin(gain_db) - 1)
        * mpf(ref_bandwidth_hz)
    )


def gnli_w_hz(attenuation_db_km, length_km, gamma_per_w_km, dispersion,
              comb, target_index):
    """comb: list of (center_thz, power_w, symbol_rate_gbd); returns the
    NLI PSD at the target channel, W/Hz. One term per comb channel; the
    self term is the zero-spacing limit of the interferer term."""
    a = alpha_per_km(attenuation_db_km) / 1000  # 1/m
    leff = (1 - exp(-a * mpf(length_km) * 1000)) / a
    leffa = 1 / a
    gamma = mpf(gamma_per_w_km) / 1000  # 1/(W m)
    fc_i, p_i, baud_i = comb[target_index]
    f_i = mpf(fc_i) * mpf("1e12")
    b_i = mpf(baud_i) * mpf("1e9")
    g_i = mpf(p_i) / b_i
    b2 = abs(beta2_s2_m(dispersion, fc_i))
    k = pi ** 2 * b2 * leffa * b_i
    total = mpf(0)
    for fc_j, p_j, baud_j in comb:
        b_j = mpf(baud_j) * mpf("1e9")
        g_j = mpf(p_j) / b_j
        df = abs(mpf(fc_j) * mpf("1e12") - f_i)
        psi = (asinh(k * (df + b_j / 2)) - asinh(k * (df - b_j / 2))) \
            / (4 * pi * b2 * leffa)
        total += g_j ** 2 * psi
    return mpf(16) / 27 * gamma ** 2 * leff ** 2 * g_i * total


def single_span_nli_w(attenuation_db_km, length_km, gamma, dispersion,
                      comb, target_index):
    psd = gnli_w_hz(attenuation_db_km, length_km, gamma, dispersion, comb,
                    target_index)
    b_ch = mpf(comb[target_index][2]) * mpf("1e9")
    return psd * b_ch


def path_gsnr_db(spans, launch_dbm, center_thz, symbol_rate_gbd,
                 ref_bandwidth_hz=mpf("12.5e9")):
    """Chain a single channel through ``spans``.

    spans: list of dicts with keys length_km, attenuation_db_km,
    gamma_per_w_km, dispersion_ps_nm_km, conn_in_db, conn_out_db,
    gain_db, nf_db. NLI enters at fiber input, ASE at amplifier output;
    both ride the same downstream losses and gains as the signal.
    """
    sig = mpf("1e-3") * db_to_lin(launch_dbm)
    ase = mpf(0)
    nli = mpf(0)
    b_ch_hz = mpf(symbol_rate_gbd) * mpf("1e9")
    for sp in spans:
        cin = db_to_lin(-mpf(sp["conn_in_db"]))
        sig *= cin
        ase *= cin
        nli *= cin
        nli += single_span_nli_w(
            sp["attenuation_db_km"], sp["length_km"], sp["gamma_per_w_km"],
            sp["dispersion_ps_nm_km"],
            [(center_thz, sig, symbol_rate_gbd)], 0)
        fib = db_to_lin(-mpf(sp["attenuation_db_km"]) * mpf(sp["length_km"]))
        cout = db_to_lin(-mpf(sp["conn_out_db"]))
        g = db_to_lin(mpf(sp["gain_db"]))
        for f in (fib, cout, g):
            sig *= f
            ase *= f
            nli *= f
        ase += ase_w(sp["gain_db"], sp["nf_db"], center_thz, ref_bandwidth_hz)
    ase_in_bch = ase * b_ch_hz / ref_bandwidth_hz
    return lin_to_db(sig / (ase_in_bch + nli))


def nominal_span(length_km, conn_db=0.5):
    return {
        "length_km": mpf(length_km),
        "attenuation_db_km": mpf("0.20"),
        "gamma_per_w_km": mpf("1.3"),
        "dispersion_ps_nm_km": mpf("16.7"),
        "conn_in_db": mpf(conn_db),
        "conn_out_db": mpf(conn_db),
        "gain_db": mpf("0.20") * mpf(length_km) + 2 * mpf(conn_db),
        "nf_db": mpf("5.0"),
    }


def main():
    mp.dps = 30
    print("ase golden (gain 20 dB, NF 5 dB, 193.1 THz, 12.5 GHz), mW:")
    print("  ", mp.nstr(ase_w(20, 5, mpf("193.1"), mpf("12.5e9")) * 1000, 17))

    comb1 = [(mpf("193.1"), mpf("1e-3"), mpf(64))]
    print("single-span NLI golden (80 km, single 64 GBd ch at 0 dBm), mW:")
    print("  ", mp.nstr(
        single_span_nli_w("0.20", 80, "1.3", "16.7", comb1, 0) * 1000, 17))

    spans = [nominal_span(82), nominal_span(90), nominal_span(70)]
    print("path 5-6-1 GSNR golden (one 400G at 193.1 THz, 0 dBm), dB:")
    print("  ", mp.nstr(
        path_gsnr_db(spans, 0, mpf("193.1"), 64), 17))

    print("beta2 at 193.1 THz, ps^2/km:")
    print("  ", mp.nstr(beta2_s2_m("16.7", "193.1") * mpf("1e27"), 17))
    print("effective length 80 km span, km:")
    print("  ", mp.nstr(effective_length_km("0.20", 80), 17))


if __name__ == "__main__":
    main()
