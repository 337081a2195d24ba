"""Flow-level simulation of elastic UL/DL traffic."""

from .engine import FlowSimulator, run
from .kpi import harmonic_capacity, measure_load, measure_outage
from .records import FlowRecord, KpiWindow, SimClock, SimulationTrace

__all__ = ["FlowSimulator", "run", "FlowRecord", "KpiWindow", "SimClock", "SimulationTrace",
           "harmonic_capacity", "measure_load", "measure_outage"]
