"""Physical constants and dB/linear conversion helpers."""

import math

PLANCK_J_S = 6.62607015e-34
LIGHT_SPEED_M_S = 299792458.0


def db_to_lin(value_db: float) -> float:
    """Convert a dB value to a linear ratio."""
    return 10 ** (value_db / 10)


def lin_to_db(value: float) -> float:
    """Convert a linear ratio to dB. value must be > 0."""
    return 10 * math.log10(value)


def dbm_to_mw(power_dbm: float) -> float:
    return 10 ** (power_dbm / 10)


def mw_to_dbm(power_mw: float) -> float:
    return 10 * math.log10(power_mw)
