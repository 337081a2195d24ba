"""Scenario builders shared by several test modules."""

import numpy as np

from emfson.config import preset

PEAK_RATE = 6.0 * 50 * 180e3  # eta_max * bandwidth: every location of a noiseless cell


def isolated_cell_config(arrival_rate, horizon_s, direction="DL"):
    """One omni macro, no shadowing, interference or fading: every flow sees PEAK_RATE."""
    cfg = preset("table1")
    d, r, t = cfg.deployment, cfg.radio, cfg.traffic
    d.rings, d.sectors_per_site, d.sc_per_sector = 0, 1, 0
    d.shadowing_std_db = 0.0
    d.grid_resolution_m = 10.0
    r.interference, r.fading, r.abs_mute_ratio = "off", "none", 0.0
    t.arrival_rate = arrival_rate
    t.ul_fraction = 1.0 if direction == "UL" else 0.0
    cfg.experiment.horizon_s = horizon_s
    cfg.validate()
    return cfg


def measured_ftts(trace):
    return np.array([f.duration for f in trace.flows
                     if f.done and f.arrival_time >= trace.warmup_s])
