"""Event-driven flow-level simulator.

Flows arrive as a Poisson process over zone A, attach to their best server
and are served under Round Robin sharing until their file is transferred.
Rates are quasi-stationary: they are recomputed from the current allocation
and interference snapshot whenever the set of active flows changes (and on
scheduling ticks when a cell has more flows than PRBs), and flows drain at
those rates in between.  Zone-B macros host a background population that
only generates interference.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from .. import kernels
from ..config import ConfigError
from ..errors import SimulationFault
from ..exposure import ExposureLedger
from ..netmodel import best_servers, dbm_to_w, handover_trigger
from ..radio import DL, UL, EfficiencyTable, LinkAbstraction, fading_model, noise_per_prb_w
from .records import FlowRecord, KpiWindow, SimClock, SimulationTrace

_UL, _DL = 0, 1

# event priorities at equal timestamps
_P_TICK, _P_WINDOW, _P_WARMUP, _P_ARRIVAL, _P_END = 0, 1, 2, 3, 9


@lru_cache(maxsize=8)
def efficiency_table(fading, nodes, beta, eta_max):
    return EfficiencyTable(fading_model(fading, nodes), LinkAbstraction(beta, eta_max))


class FlowSimulator:
    """One simulation run.  Use :func:`run` unless you need the live object."""

    def __init__(self, scenario, layout, offsets, seed, horizon_s=None, controller=None):
        self.cfg = scenario
        self.layout = layout
        self.offsets = offsets
        self.seed = seed
        self.controller = controller
        self.horizon = float(scenario.experiment.horizon_s if horizon_s is None else horizon_s)
        tr = scenario.traffic
        self.warmup = tr.warmup_fraction * self.horizon
        if self.horizon <= self.warmup:
            raise ConfigError("horizon must exceed the warmup period")

        rc = scenario.radio
        self.n_cells = layout.n_cells
        self.n_prb = rc.n_prb
        self.w_prb = rc.w_prb_hz
        self.noise_w = noise_per_prb_w(rc.noise_density_dbm_hz, rc.w_prb_hz)
        self.iot = 10.0 ** (rc.ul_iot_db / 10.0)
        self.mute = rc.abs_mute_ratio
        self.eff = efficiency_table(rc.fading, rc.quadrature_nodes, rc.se_attenuation, rc.se_max)
        self.cell_tx_w = dbm_to_w(layout.tx_power_dbm)
        self.cell_prb_w = self.cell_tx_w / self.n_prb
        self.is_sc = layout.is_small_cell
        # every cell radiates at full power towards exposed users; macros are
        # silent on muted subframes
        self.incident_weight = self.cell_tx_w * np.where(self.is_sc, 1.0, 1.0 - self.mute)

        ss = np.random.SeedSequence(seed)
        arrival_ss, background_ss = ss.spawn(2)
        self.rng = np.random.default_rng(arrival_ss)
        self.bg_rng = np.random.default_rng(background_ss)

        self.zone_a_pixels = layout.zone_a_pixels
        self.kpi_cells = layout.zone_a_cells
        zone_b = [s.id for s in layout.sectors if s.id not in layout.zone_a_sector_ids]
        self.zone_b_cells = np.array(zone_b, dtype=np.int64)
        region = layout.macro_region
        self.zone_b_pixels = {c: np.flatnonzero(region == c) for c in zone_b}
        self.zone_a_sectors = np.array(sorted(layout.zone_a_sector_ids), dtype=np.int64)

        self._alloc(64)
        self.ledger = ExposureLedger.from_config(scenario.exposure, self.horizon - self.warmup)
        self.trace = SimulationTrace(kpi_cells=self.kpi_cells, exposure=self.ledger,
                                     warmup_s=self.warmup, horizon_s=self.horizon)
        self.clock = SimClock(tr.tick_s)
        self.next_flow_id = 0
        self.rotation = 0
        self.window_index = 0
        self.bg_intensity = 0.0
        self._reset_window(0.0)

    # ------------------------------------------------------------------
    # flow storage (struct of arrays, slots are recycled)

    def _alloc(self, cap):
        c = self.n_cells
        self.cap = cap
        self.n_slots = 0
        self.free = []
        self.active = np.zeros(cap, dtype=bool)
        self.background = np.zeros(cap, dtype=bool)
        self.counted = np.zeros(cap, dtype=bool)
        self.fid = np.zeros(cap, dtype=np.int64)
        self.direction = np.zeros(cap, dtype=np.int8)
        self.serving = np.zeros(cap, dtype=np.int64)
        self.pos = np.zeros((cap, 2))
        self.gain_db = np.zeros((cap, c))
        self.gain_lin = np.zeros((cap, c))
        self.volume = np.zeros(cap)
        self.remaining = np.zeros(cap)
        self.arrival = np.zeros(cap)
        self.tx_int = np.zeros(cap)
        self.rx_int = np.zeros(cap)
        self.exp_ul = np.zeros(cap)
        self.exp_dl = np.zeros(cap)
        self.rate = np.zeros(cap)
        self.tx_w = np.zeros(cap)
        self.incident_w = np.zeros(cap)
        self.below = np.zeros(cap, dtype=bool)

    _ARRAYS = ("active", "background", "counted", "fid", "direction", "serving", "pos",
               "gain_db", "gain_lin", "volume", "remaining", "arrival", "tx_int", "rx_int",
               "exp_ul", "exp_dl", "rate", "tx_w", "incident_w", "below")

    def _grow(self):
        new_cap = self.cap * 2
        for name in self._ARRAYS:
            old = getattr(self, name)
            new = np.zeros((new_cap,) + old.shape[1:], dtype=old.dtype)
            new[: self.cap] = old
            setattr(self, name, new)
        self.cap = new_cap

    def _new_slot(self):
        if self.free:
            return self.free.pop()
        if self.n_slots == self.cap:
            self._grow()
        self.n_slots += 1
        return self.n_slots - 1

    def _add(self, positions, directions, volumes, serving=None, background=False):
        positions = np.atleast_2d(positions)
        gdb = self.layout.gain_db(positions)
        if serving is None:
            serving = best_servers(gdb, self.offsets)
        slots = []
        for i in range(len(positions)):
            j = self._new_slot()
            self.active[j] = True
            self.background[j] = background
            self.counted[j] = (not background) and self.clock.now >= self.warmup
            self.fid[j] = -1 if background else self.next_flow_id
            if not background:
                self.next_flow_id += 1
            self.direction[j] = directions[i]
            self.serving[j] = serving[i]
            self.pos[j] = positions[i]
            self.gain_db[j] = gdb[i]
            self.gain_lin[j] = 10.0 ** (gdb[i] / 10.0)
            self.volume[j] = volumes[i]
            self.remaining[j] = volumes[i]
            self.arrival[j] = self.clock.now
            self.tx_int[j] = self.rx_int[j] = 0.0
            self.exp_ul[j] = self.exp_dl[j] = 0.0
            slots.append(j)
        return slots

    def _remove(self, j):
        self.active[j] = False
        self.rate[j] = self.tx_w[j] = self.incident_w[j] = 0.0
        self.below[j] = False
        self.free.append(j)

    # ------------------------------------------------------------------
    # rates

    def _recompute(self):
        act = np.flatnonzero(self.active[: self.n_slots])
        d = self.direction[act]
        ul = act[d == _UL]
        dl = act[d == _DL]
        mode = self.cfg.radio.interference
        n_prb, w = self.n_prb, self.w_prb

        # -- uplink: Round Robin PRB chunks, fractional power control
        if ul.size:
            s_ul = self.serving[ul]
            start, size = kernels.round_robin(s_ul, self.n_cells, n_prb, self.rotation)
            has = size > 0
            m = np.maximum(size, 1)
            rc = self.cfg.radio
            pl = np.maximum(-self.gain_db[ul, s_ul], 0.0)
            p_dbm = np.minimum(rc.ue_p_max_dbm, rc.p0_dbm + 10.0 * np.log10(m) + rc.alpha * pl)
            p_w = np.where(has, dbm_to_w(p_dbm), 0.0)
            k = np.arange(n_prb)
            mask = (k[None, :] >= start[:, None]) & (k[None, :] < (start + size)[:, None])
            prb_power = np.ascontiguousarray(mask * (p_w / m)[:, None])
            if mode == "dynamic":
                sinr = kernels.ul_sinr_matrix(prb_power, np.ascontiguousarray(self.gain_lin[ul]),
                                              s_ul, self.noise_w)
            else:
                floor = self.noise_w * (self.iot if mode == "frozen" else 1.0)
                sinr = prb_power * self.gain_lin[ul, s_ul][:, None] / floor
            self.rate[ul] = w * np.sum(self.eff(sinr) * mask, axis=1)
            self.tx_w[ul] = p_w
            self.ul_max_per_cell = int(np.bincount(s_ul, minlength=self.n_cells).max())
        else:
            self.ul_max_per_cell = 0

        # -- downlink: full-power cells, fractional Round Robin share, ABS mixing
        n_dl = np.bincount(self.serving[dl], minlength=self.n_cells)
        if dl.size:
            s_dl = self.serving[dl]
            if mode == "frozen":
                tx_on = np.ones(self.n_cells)
            else:
                tx_on = (n_dl > 0).astype(float)
            interf_w = tx_on if mode != "off" else np.zeros(self.n_cells)
            g = np.ascontiguousarray(self.gain_lin[dl])
            rx = g * self.cell_prb_w[None, :]
            sinr_u = kernels.dl_sinr_vector(rx, interf_w, s_dl, self.noise_w)
            eff = (1.0 - self.mute) * self.eff(sinr_u)
            if self.mute > 0:
                muted_w = interf_w * self.is_sc
                sinr_m = kernels.dl_sinr_vector(rx, muted_w, s_dl, self.noise_w)
                eff = eff + np.where(self.is_sc[s_dl], self.mute * self.eff(sinr_m), 0.0)
            rate = (n_prb / n_dl[s_dl]) * w * eff
            self.rate[dl] = rate
            self.incident_w[dl] = g @ self.incident_weight
            if self.cfg.traffic.outage_mode == "rate":
                self.below[dl] = rate < self.cfg.traffic.coverage_target_bps
            else:
                thr = 10.0 ** (self.cfg.traffic.outage_sinr_db / 10.0)
                self.below[dl] = sinr_u < thr

        real = ~self.background[act]
        self._real = act[real]
        self._real_ul = ul[~self.background[ul]]
        self._real_dl = dl[~self.background[dl]]
        self._busy_ul = np.bincount(self.serving[self._real_ul], minlength=self.n_cells) > 0
        self._busy_dl = np.bincount(self.serving[self._real_dl], minlength=self.n_cells) > 0
        self._n_real = np.bincount(self.serving[self._real], minlength=self.n_cells)

        r = self._real
        pos = self.rate[r] > 0
        if np.any(pos):
            t = self.remaining[r[pos]] / self.rate[r[pos]]
            i = int(np.argmin(t))
            self.next_departure = (self.clock.now + float(t[i]), int(r[pos][i]))
        else:
            self.next_departure = (math.inf, -1)

    # ------------------------------------------------------------------
    # time advance and accounting

    def _advance(self, t):
        dt = t - self.clock.now
        if dt < 0:
            raise SimulationFault(f"time regression to {t} from {self.clock.now}")
        if dt > 0:
            r = self._real
            self.remaining[r] = np.maximum(self.remaining[r] - self.rate[r] * dt, 0.0)
            ul, dl = self._real_ul, self._real_dl
            self.tx_int[ul] += self.tx_w[ul] * dt
            self.rx_int[dl] += self.incident_w[dl] * dt
            if self.clock.now >= self.warmup:
                self.exp_ul[ul] += self.tx_w[ul] * dt
                self.exp_dl[dl] += self.incident_w[dl] * dt
            self.busy_ul += self._busy_ul * dt
            self.busy_dl += self._busy_dl * dt
            self.user_time += self._n_real * dt
        self.clock.advance_to(t)

    def _reset_window(self, t):
        c = self.n_cells
        self.window_start = t
        self.busy_ul = np.zeros(c)
        self.busy_dl = np.zeros(c)
        self.user_time = np.zeros(c)
        self.obs = np.zeros(c, dtype=np.int64)
        self.obs_below = np.zeros(c, dtype=np.int64)
        self.ftt_sum = np.zeros((2, c))
        self.ftt_n = np.zeros((2, c), dtype=np.int64)
        live = np.flatnonzero(self.active[: self.n_slots] & ~self.background[: self.n_slots])
        self.win_users = np.bincount(self.serving[live], minlength=c)

    # ------------------------------------------------------------------
    # event handlers

    def _arrival(self):
        tr = self.cfg.traffic
        rng = self.rng
        pix = self.zone_a_pixels[rng.integers(len(self.zone_a_pixels))]
        res = self.layout.grid_resolution
        pos = self.layout.pixel_centers[pix] + rng.uniform(-0.5 * res, 0.5 * res, size=2)
        is_ul = rng.random() < tr.ul_fraction
        mean = tr.file_size_ul_bits if is_ul else tr.file_size_dl_bits
        volume = rng.exponential(mean)
        (j,) = self._add(pos[None, :], [_UL if is_ul else _DL], [volume])
        self.win_users[self.serving[j]] += 1
        self.clock.schedule(self.clock.now + rng.exponential(1.0 / tr.arrival_rate), "arrival",
                            priority=_P_ARRIVAL)

    def _depart(self, j):
        now = self.clock.now
        self.remaining[j] = 0.0
        d = int(self.direction[j])
        cell = int(self.serving[j])
        self.ftt_sum[d, cell] += now - self.arrival[j]
        self.ftt_n[d, cell] += 1
        self._record(j, now, done=True)
        self._remove(j)

    def _record(self, j, departure, done):
        rec = FlowRecord(id=int(self.fid[j]), location=(float(self.pos[j, 0]), float(self.pos[j, 1])),
                         serving_cell=int(self.serving[j]),
                         direction=UL if self.direction[j] == _UL else DL,
                         volume_bits=float(self.volume[j]),
                         volume_remaining=float(self.remaining[j]),
                         arrival_time=float(self.arrival[j]), departure_time=departure,
                         tx_power_time_integral=float(self.tx_int[j]),
                         rx_power_time_integral=float(self.rx_int[j]), done=done)
        self.trace.flows.append(rec)
        if self.counted[j]:
            group = "sc" if self.is_sc[rec.serving_cell] else "macro"
            self.ledger.add_totals(rec.id, group, float(self.exp_ul[j]), float(self.exp_dl[j]))

    def _tick(self, i):
        dl = self._real_dl
        if dl.size:
            cells = self.serving[dl]
            self.obs += np.bincount(cells, minlength=self.n_cells)
            self.obs_below += np.bincount(cells, weights=self.below[dl], minlength=self.n_cells).astype(np.int64)
        self.clock.schedule((i + 1) * self.cfg.traffic.tick_s, "tick", i + 1, priority=_P_TICK)
        if self.ul_max_per_cell > self.n_prb:
            self.rotation += 1
            return True
        return False

    def _close_window(self, j):
        now = self.clock.now
        length = now - self.window_start
        with np.errstate(invalid="ignore", divide="ignore"):
            ul_load = np.clip(self.busy_ul / length, 0.0, 1.0)
            dl_load = np.clip(self.busy_dl / length, 0.0, 1.0)
            outage = np.where(self.obs > 0, self.obs_below / np.maximum(self.obs, 1), np.nan)
            ftt = np.where(self.ftt_n > 0, self.ftt_sum / np.maximum(self.ftt_n, 1), np.nan)
        win = KpiWindow(index=self.window_index, t_start=self.window_start, t_end=now,
                        ul_load=ul_load, dl_load=dl_load, outage=outage,
                        outage_samples=self.obs.copy(), mean_ftt_ul=ftt[_UL],
                        mean_ftt_dl=ftt[_DL], active_users=self.win_users.copy(),
                        warmup=self.window_start < self.warmup)
        self.trace.windows.append(win)
        mean_users = self.user_time / length
        per_sector = np.bincount(self.layout.parent_macro, weights=mean_users,
                                 minlength=self.n_cells)
        self.bg_intensity = float(per_sector[self.zone_a_sectors].mean())
        self.window_index += 1
        self._reset_window(now)
        if self.controller is not None:
            new = self.controller(win, self)
            if new is not None:
                self.apply_offsets(new)
        self._resample_background()
        self.clock.schedule((j + 1) * self.cfg.traffic.window_s, "window", j + 1,
                            priority=_P_WINDOW)

    def apply_offsets(self, offsets):
        """Switch offsets; active flows hand over when the A3 condition holds."""
        self.offsets = offsets
        live = np.flatnonzero(self.active[: self.n_slots] & ~self.background[: self.n_slots])
        if live.size == 0:
            return
        cand = best_servers(self.gain_db[live], offsets)
        hyst = self.layout.config.hysteresis_db
        for j, n in zip(live, cand):
            s = int(self.serving[j])
            n = int(n)
            if n == s:
                continue
            q_s = offsets.pilot_dbm[s] + self.gain_db[j, s]
            q_n = offsets.pilot_dbm[n] + self.gain_db[j, n]
            if handover_trigger(s, n, q_s, q_n, hyst, offsets):
                self.serving[j] = n
                self.win_users[n] += 1

    def _resample_background(self):
        tr = self.cfg.traffic
        bg = np.flatnonzero(self.active[: self.n_slots] & self.background[: self.n_slots])
        for j in bg:
            self._remove(j)
        if not tr.zone_b_traffic or self.zone_b_cells.size == 0:
            return
        rng = self.bg_rng
        counts = np.minimum(rng.poisson(self.bg_intensity, size=self.zone_b_cells.size),
                            tr.max_users_zone_b)
        res = self.layout.grid_resolution
        for cell, n in zip(self.zone_b_cells, counts):
            pixels = self.zone_b_pixels[int(cell)]
            if n == 0 or pixels.size == 0:
                continue
            pix = pixels[rng.integers(pixels.size, size=n)]
            pos = self.layout.pixel_centers[pix] + rng.uniform(-0.5 * res, 0.5 * res, size=(n, 2))
            dirs = np.where(rng.random(n) < tr.ul_fraction, _UL, _DL)
            self._add(pos, dirs, np.full(n, np.inf), serving=np.full(n, cell), background=True)

    def _start_measurement(self):
        live = np.flatnonzero(self.active[: self.n_slots] & ~self.background[: self.n_slots])
        self.counted[live] = True

    # ------------------------------------------------------------------

    def run(self):
        tr = self.cfg.traffic
        clock = self.clock
        if tr.arrival_rate > 0:
            clock.schedule(self.rng.exponential(1.0 / tr.arrival_rate), "arrival",
                           priority=_P_ARRIVAL)
        clock.schedule(tr.tick_s, "tick", 1, priority=_P_TICK)
        clock.schedule(tr.window_s, "window", 1, priority=_P_WINDOW)
        clock.schedule(self.warmup, "warmup", priority=_P_WARMUP)
        clock.schedule(self.horizon, "end", priority=_P_END)
        self._recompute()
        while True:
            t_dep, j_dep = self.next_departure
            t_evt = clock.peek_time()
            if t_dep < t_evt:
                self._advance(t_dep)
                self._depart(j_dep)
                self._recompute()
                continue
            self._advance(t_evt)
            kind, payload = clock.pop()
            if kind == "end":
                break
            if kind == "tick":
                if payload * tr.tick_s > self.horizon:
                    continue
                if self._tick(payload):
                    self._recompute()
                continue
            if kind == "arrival":
                self._arrival()
            elif kind == "window":
                if payload * tr.window_s > self.horizon + 1e-9:
                    continue
                self._close_window(payload)
            elif kind == "warmup":
                self._start_measurement()
                continue
            self._recompute()
        live = np.flatnonzero(self.active[: self.n_slots] & ~self.background[: self.n_slots])
        for j in live:
            self._record(j, None, done=False)
        self.trace.flows.sort(key=lambda f: f.id)
        return self.trace


def run(scenario, layout, offsets, horizon_s=None, seed=0, controller=None):
    """Simulate one scenario and return its :class:`SimulationTrace`."""
    return FlowSimulator(scenario, layout, offsets, seed, horizon_s, controller).run()
