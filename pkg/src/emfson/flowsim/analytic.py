"""Frozen-traffic analytic model of loads, capacities and outage.

Every cell interferes at full activity (DL) or at a fixed rise over thermal
(UL), so the peak rate of a location depends only on its serving cell.  The
load integral then becomes a sum over the zone-A pixel grid, and the DL
outage follows from the processor-sharing occupancy law of the cell.
"""

from __future__ import annotations

import numpy as np

from ..netmodel import best_servers, dbm_to_w
from ..radio import noise_per_prb_w
from .engine import efficiency_table


class AnalyticModel:
    """Grid evaluation of per-cell KPIs for a fixed layout and traffic mix.

    Parameters
    ----------
    scenario : ScenarioConfig
    layout : NetworkLayout
    """

    def __init__(self, scenario, layout):
        self.cfg = scenario
        self.layout = layout
        rc, tr = scenario.radio, scenario.traffic
        self.pixels = layout.zone_a_pixels
        self.gain_db = np.ascontiguousarray(layout.pixel_gain_db[self.pixels])
        gain = 10.0 ** (self.gain_db / 10.0)
        n = len(self.pixels)
        self.weight = np.full(n, 1.0 / n)  # arrival probability per pixel
        eff = efficiency_table(rc.fading, rc.quadrature_nodes, rc.se_attenuation, rc.se_max)
        noise = noise_per_prb_w(rc.noise_density_dbm_hz, rc.w_prb_hz)
        n_prb, w = rc.n_prb, rc.w_prb_hz
        bw = n_prb * w

        # UL peak rate: alone in the cell, all PRBs, fixed rise over thermal
        pl = np.maximum(-self.gain_db, 0.0)
        p_dbm = np.minimum(rc.ue_p_max_dbm, rc.p0_dbm + 10.0 * np.log10(n_prb) + rc.alpha * pl)
        sinr_ul = dbm_to_w(p_dbm) / n_prb * gain / (noise * 10.0 ** (rc.ul_iot_db / 10.0))
        self.rate_ul = bw * eff(sinr_ul)

        # DL peak rate: every cell transmitting, macros muted on ABS subframes
        prb_w = dbm_to_w(layout.tx_power_dbm) / n_prb
        rx = gain * prb_w[None, :]
        total = rx.sum(axis=1, keepdims=True)
        sc = layout.is_small_cell
        total_muted = (rx * sc[None, :]).sum(axis=1, keepdims=True)
        m = rc.abs_mute_ratio
        sinr_on = rx / (noise + total - rx)
        sinr_off = rx / (noise + total_muted - rx * sc[None, :])
        eff_dl = (1.0 - m) * eff(sinr_on) + np.where(sc[None, :], m * eff(sinr_off), 0.0)
        self.rate_dl = bw * eff_dl

        self.lam_ul = tr.arrival_rate * tr.ul_fraction * tr.file_size_ul_bits
        self.lam_dl = tr.arrival_rate * (1.0 - tr.ul_fraction) * tr.file_size_dl_bits
        self.target = tr.coverage_target_bps
        self.n_cells = layout.n_cells

    def serving(self, offsets):
        return best_servers(self.gain_db, offsets)

    def loads(self, offsets):
        """``(ul_load, dl_load)`` per cell, unclipped (values above 1 mean overload)."""
        s = self.serving(offsets)
        idx = np.arange(len(s))
        ul = np.bincount(s, self.weight * self.lam_ul / self.rate_ul[idx, s], self.n_cells)
        dl = np.bincount(s, self.weight * self.lam_dl / self.rate_dl[idx, s], self.n_cells)
        return ul, dl

    def capacity(self, offsets, direction="DL"):
        """Harmonic-mean peak rate of every cell over its zone-A region (NaN if empty)."""
        s = self.serving(offsets)
        idx = np.arange(len(s))
        rate = (self.rate_ul if direction == "UL" else self.rate_dl)[idx, s]
        area = np.bincount(s, self.weight, self.n_cells)
        inv = np.bincount(s, self.weight / rate, self.n_cells)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(area > 0, area / inv, np.nan)

    def outage(self, offsets, dl_load=None):
        """Share of active-user observations whose DL rate is below the coverage target.

        Under multi-class processor sharing an observed user sits at ``r``
        with probability ``rho_r / rho`` and shares the cell with a total of
        ``N`` users, ``P(N = n) = n (1 - rho)^2 rho^(n-1)`` (the size-biased
        geometric law).  Its rate ``R(r) / N`` misses the target ``T`` when
        ``N >= k = floor(R/T) + 1``, which happens with probability
        ``rho^(k-1) (1 + (k-1)(1 - rho))``.  An overloaded cell is in full
        outage; an empty region gives NaN.
        """
        s = self.serving(offsets)
        idx = np.arange(len(s))
        if dl_load is None:
            dl_load = self.loads(offsets)[1]
        rate = self.rate_dl[idx, s]
        rho = dl_load[s]
        m = np.floor(rate / self.target)  # k - 1
        with np.errstate(invalid="ignore", over="ignore", under="ignore"):
            tail = np.where(m == 0, 1.0, rho ** m * (1.0 + m * (1.0 - rho)))
        below = np.where(rho >= 1.0, 1.0, tail)
        presence = self.weight / rate  # rho_r / rho up to the cell constant
        tot = np.bincount(s, presence, self.n_cells)
        bad = np.bincount(s, presence * below, self.n_cells)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(tot > 0, bad / tot, np.nan)

    def kpis(self, offsets):
        """``(ul_load clipped to [0, 1], outage)`` as consumed by the SON drift."""
        ul, dl = self.loads(offsets)
        return np.clip(ul, 0.0, 1.0), self.outage(offsets, dl)


def analytic_kpis(scenario, layout, offsets):
    return AnalyticModel(scenario, layout).kpis(offsets)


def mean_ftt(rate_bps, mean_bits, load):
    """M/G/1/PS mean transfer time ``E[sigma] / (R (1 - rho))``."""
    if load >= 1:
        return np.inf
    return mean_bits / (rate_bps * (1.0 - load))

