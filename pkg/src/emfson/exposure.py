"""Power-time exposure bookkeeping and the UL/DL exposure metrics.

UL exposure is the time-averaged, SAR-weighted transmit power of the user
devices.  DL exposure is the SAR-weighted power incident on active users from
every transmitting cell, scaled by the activity coefficient to account for
exposure outside communication periods.  Both are normalized per user.
"""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass, field

from .errors import DomainError, NoMeasurement, UndefinedGain

GROUPS = ("macro", "sc")
COMPONENTS = ("ul", "dl", "total")


@dataclass
class ExposureLedger:
    horizon_s: float
    sar_ul_weight: float = 8e-5
    sar_dl_weight: float = 4.7e-3
    activity_coefficient: float = 20.0
    ul_power_time: dict = field(default_factory=lambda: defaultdict(float))
    dl_incident_power_time: dict = field(default_factory=lambda: defaultdict(float))
    group: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.activity_coefficient < 1:
            raise DomainError("activity coefficient must be >= 1")
        if self.horizon_s <= 0:
            raise DomainError("horizon must be positive")

    @classmethod
    def from_config(cls, exposure_cfg, horizon_s):
        return cls(horizon_s=horizon_s, sar_ul_weight=exposure_cfg.sar_ul_weight,
                   sar_dl_weight=exposure_cfg.sar_dl_weight,
                   activity_coefficient=exposure_cfg.activity_coefficient)

    @property
    def total_users(self):
        return len(self.group)

    def register(self, flow_id, group="macro"):
        """Count a user even if it never accrues power-time."""
        if group not in GROUPS:
            raise DomainError(f"unknown cell group {group!r}")
        self.group[flow_id] = group
        self.ul_power_time[flow_id] += 0.0
        self.dl_incident_power_time[flow_id] += 0.0
        return self

    def accumulate(self, flow_id, dt, tx_power_w=0.0, incident_dl_power_w=0.0, group=None):
        if dt <= 0:
            raise DomainError("dt must be > 0")
        if tx_power_w < 0 or incident_dl_power_w < 0:
            raise DomainError("powers must be >= 0")
        if group is not None or flow_id not in self.group:
            self.register(flow_id, group or "macro")
        self.ul_power_time[flow_id] += tx_power_w * dt
        self.dl_incident_power_time[flow_id] += incident_dl_power_w * dt
        return self

    def add_totals(self, flow_id, group, ul_power_time, dl_incident_power_time):
        """Bulk entry point used by the simulator (already integrated values)."""
        if ul_power_time < 0 or dl_incident_power_time < 0:
            raise DomainError("power-time integrals must be >= 0")
        self.register(flow_id, group)
        self.ul_power_time[flow_id] += ul_power_time
        self.dl_incident_power_time[flow_id] += dl_incident_power_time
        return self

    def _sums(self, group=None):
        ids = [f for f, g in self.group.items() if group is None or g == group]
        return (sum(self.ul_power_time[f] for f in ids),
                sum(self.dl_incident_power_time[f] for f in ids))

    def f_ul(self, group=None):
        if self.total_users == 0:
            raise NoMeasurement("no users in the exposure ledger")
        ul, _ = self._sums(group)
        return self.sar_ul_weight * ul / self.total_users / self.horizon_s

    def f_dl(self, group=None):
        if self.total_users == 0:
            raise NoMeasurement("no users in the exposure ledger")
        _, dl = self._sums(group)
        return (self.activity_coefficient * self.sar_dl_weight * dl
                / self.total_users / self.horizon_s)

    def report(self):
        by_group = {g: {"ul": self.f_ul(g), "dl": self.f_dl(g)} for g in GROUPS}
        for vals in by_group.values():
            vals["total"] = vals["ul"] + vals["dl"]
        f_ul, f_dl = self.f_ul(), self.f_dl()
        return ExposureReport(f_ul=f_ul, f_dl=f_dl, by_group=by_group,
                              total_users=self.total_users)


def f_ul(ledger):
    return ledger.f_ul()


def f_dl(ledger):
    return ledger.f_dl()


@dataclass
class ExposureReport:
    """Exposure metrics in W/kg.  Group values are shares of the all-cell total."""

    f_ul: float
    f_dl: float
    by_group: dict
    total_users: int = 0
    gain_vs_baseline_percent: dict | None = None

    @property
    def f_total(self):
        return self.f_ul + self.f_dl

    def value(self, component, group="all"):
        if group == "all":
            return {"ul": self.f_ul, "dl": self.f_dl, "total": self.f_total}[component]
        return self.by_group[group][component]

    def rows(self):
        out = []
        for group in ("all",) + GROUPS:
            for comp in COMPONENTS:
                gain = None
                if self.gain_vs_baseline_percent is not None:
                    gain = self.gain_vs_baseline_percent.get((comp, group))
                out.append((comp, group, self.value(comp, group), gain))
        return out

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["component", "cell_group", "value_w_per_kg", "gain_percent"])
            for comp, group, value, gain in self.rows():
                w.writerow([comp, group, repr(float(value)), "" if gain is None else repr(float(gain))])

    def summary(self):
        lines = [f"exposure over {self.total_users} users"]
        for comp, group, value, gain in self.rows():
            g = "" if gain is None else f"  gain {gain:+.2f} %"
            lines.append(f"  {comp:>5} {group:>5}: {value:.6e} W/kg{g}")
        return "\n".join(lines)


def gain_percent(baseline, scenario):
    if baseline == 0:
        raise UndefinedGain("baseline exposure is zero")
    return 100.0 * (baseline - scenario) / baseline


def exposure_gain(baseline, scenario):
    """Relative reduction (percent) per ``(component, group)``; positive means less exposure.

    Pairs whose baseline is zero are omitted; if the all-cell baseline is
    zero :class:`UndefinedGain` is raised.
    """
    gains = {}
    for group in ("all",) + GROUPS:
        for comp in COMPONENTS:
            base = baseline.value(comp, group)
            if base == 0:
                if group == "all":
                    raise UndefinedGain(f"baseline {comp} exposure is zero")
                continue
            gains[(comp, group)] = gain_percent(base, scenario.value(comp, group))
    return gains
