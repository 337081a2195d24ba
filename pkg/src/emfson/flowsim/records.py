"""Flow records, KPI windows, the event clock and the simulation trace."""

from __future__ import annotations

import csv
import heapq
import itertools
from dataclasses import dataclass, field

import numpy as np

from ..errors import SimulationFault


@dataclass
class FlowRecord:
    id: int
    location: tuple[float, float]
    serving_cell: int
    direction: str
    volume_bits: float
    volume_remaining: float
    arrival_time: float
    departure_time: float | None = None
    tx_power_time_integral: float = 0.0  # W*s, UL
    rx_power_time_integral: float = 0.0  # W*s, DL incident
    done: bool = False

    @property
    def duration(self):
        return None if self.departure_time is None else self.departure_time - self.arrival_time

    @property
    def mean_tx_power_w(self):
        d = self.duration
        if not d:
            return 0.0
        return self.tx_power_time_integral / d


@dataclass
class KpiWindow:
    """Per-cell measurements over one completed window; NaN marks "no measurement"."""

    index: int
    t_start: float
    t_end: float
    ul_load: np.ndarray
    dl_load: np.ndarray
    outage: np.ndarray
    outage_samples: np.ndarray
    mean_ftt_ul: np.ndarray
    mean_ftt_dl: np.ndarray
    active_users: np.ndarray
    warmup: bool = False

    @property
    def window_length(self):
        return self.t_end - self.t_start


class SimClock:
    """Monotone simulation clock over a heap of scheduled events."""

    def __init__(self, tick_length):
        if tick_length <= 0:
            raise SimulationFault("tick length must be positive")
        self.now = 0.0
        self.tick_length = tick_length
        self._queue = []
        self._seq = itertools.count()

    def schedule(self, time, kind, payload=None, priority=0):
        """Queue an event; equal times are ordered by ``priority`` then insertion."""
        if time < self.now:
            raise SimulationFault(f"event {kind} scheduled in the past ({time} < {self.now})")
        heapq.heappush(self._queue, (time, priority, next(self._seq), kind, payload))

    def peek_time(self):
        return self._queue[0][0] if self._queue else float("inf")

    def pop(self):
        time, _, _, kind, payload = heapq.heappop(self._queue)
        self.advance_to(time)
        return kind, payload

    def advance_to(self, time):
        if time < self.now:
            raise SimulationFault(f"time regression: {time} < {self.now}")
        self.now = time


WINDOW_COLUMNS = ["time_s", "cell_id", "ul_load", "dl_load", "outage", "mean_ftt_ul_s",
                  "mean_ftt_dl_s", "active_users"]
FLOW_COLUMNS = ["flow_id", "cell_id", "arrival_s", "departure_s", "direction", "bits",
                "mean_tx_power_w"]


def _fmt(x):
    x = float(x)
    return "" if np.isnan(x) else repr(x)


@dataclass
class SimulationTrace:
    windows: list = field(default_factory=list)
    flows: list = field(default_factory=list)
    kpi_cells: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    exposure: object = None
    son_rows: list = field(default_factory=list)
    warmup_s: float = 0.0
    horizon_s: float = 0.0
    events: list = field(default_factory=list)

    def measured_windows(self):
        return [w for w in self.windows if not w.warmup]

    def write_windows_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(WINDOW_COLUMNS)
            for win in self.windows:
                for c in self.kpi_cells:
                    w.writerow([repr(float(win.t_end)), int(c), _fmt(win.ul_load[c]),
                                _fmt(win.dl_load[c]), _fmt(win.outage[c]),
                                _fmt(win.mean_ftt_ul[c]), _fmt(win.mean_ftt_dl[c]),
                                int(win.active_users[c])])

    def write_flows_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(FLOW_COLUMNS)
            for f in self.flows:
                w.writerow([f.id, f.serving_cell, repr(float(f.arrival_time)),
                            "" if f.departure_time is None else repr(float(f.departure_time)),
                            f.direction, repr(float(f.volume_bits)),
                            repr(float(f.mean_tx_power_w))])
