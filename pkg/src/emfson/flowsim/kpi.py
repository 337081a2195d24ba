"""Window KPI estimators shared by the simulator and the analytic model."""

import numpy as np

from ..errors import NoMeasurement


def measure_load(busy_time_s, window_length_s):
    """Busy-time fraction of a cell's resources over a completed window."""
    if window_length_s <= 0:
        raise NoMeasurement("empty measurement window")
    return float(np.clip(busy_time_s / window_length_s, 0.0, 1.0))


def measure_outage(observed_rates_bps, target_bps=1.5e6):
    """Fraction of active-user observations whose rate is below ``target_bps``."""
    rates = np.asarray(observed_rates_bps, dtype=float)
    if rates.size == 0:
        raise NoMeasurement("no active-user observations in the window")
    return float(np.mean(rates < target_bps))


def harmonic_capacity(rates_bps, areas=None):
    """Area-weighted harmonic mean rate, i.e. the throughput at load one."""
    rates = np.asarray(rates_bps, dtype=float)
    if rates.size == 0:
        raise NoMeasurement("empty coverage region")
    w = np.ones_like(rates) if areas is None else np.asarray(areas, dtype=float)
    return float(w.sum() / np.sum(w / rates))
