"""Flow-level HetNet simulator with SON load balancing for EMF exposure reduction."""

from .config import ScenarioConfig, load_config, preset
from .exposure import ExposureLedger, ExposureReport, exposure_gain
from .kernels import BACKEND
from .netmodel import NetworkLayout, PowerOffsetVector, build_layout

__version__ = "0.1.0"

__all__ = ["BACKEND", "ExposureLedger", "ExposureReport", "NetworkLayout", "PowerOffsetVector",
           "ScenarioConfig", "build_layout", "exposure_gain", "load_config", "preset"]
