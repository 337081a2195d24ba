"""Scenario configuration: dataclasses, presets and YAML round-tripping."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigError


@dataclass
class DeploymentConfig:
    inter_site_distance_m: float = 500.0
    rings: int = 2
    sectors_per_site: int = 3
    sc_per_sector: int = 4
    macro_tx_power_dbm: float = 46.0
    sc_tx_power_dbm: float = 30.0
    macro_pathloss: tuple[float, float] = (128.1, 37.6)  # A + B*log10(d_km)
    sc_pathloss: tuple[float, float] = (140.7, 36.7)
    shadowing_std_db: float = 6.0
    min_distance_m: float = 10.0
    macro_antenna_gain_dbi: float = 14.0
    macro_beamwidth_deg: float = 70.0
    macro_front_to_back_db: float = 20.0
    sc_antenna_gain_dbi: float = 5.0
    ue_antenna_gain_dbi: float = 0.0
    sc_annulus: tuple[float, float] = (0.7, 0.9)  # fraction of the sector edge radius
    sc_max_redraws: int = 1000
    grid_resolution_m: float = 20.0
    hysteresis_db: float = 0.0
    layout_seed: int = 0

    def validate(self):
        if self.rings < 0:
            raise ConfigError(f"rings must be >= 0, got {self.rings}")
        if self.sectors_per_site not in (1, 3):
            raise ConfigError("sectors_per_site must be 1 (omni) or 3")
        if self.inter_site_distance_m <= 0 or self.grid_resolution_m <= 0:
            raise ConfigError("distances and grid resolution must be positive")
        if self.sc_per_sector < 0:
            raise ConfigError("sc_per_sector must be >= 0")
        lo, hi = self.sc_annulus
        if not 0 < lo < hi:
            raise ConfigError(f"bad sc_annulus {self.sc_annulus}")
        if self.shadowing_std_db < 0:
            raise ConfigError("shadowing_std_db must be >= 0")


@dataclass
class RadioConfig:
    n_prb: int = 50
    w_prb_hz: float = 180e3
    noise_density_dbm_hz: float = -174.0
    ue_p_max_dbm: float = 23.0
    p0_dbm: float = -58.0
    alpha: float = 0.8
    se_attenuation: float = 0.75
    se_max: float = 6.0
    fading: str = "rayleigh"  # "rayleigh" | "none"
    quadrature_nodes: int = 32
    abs_mute_ratio: float = 0.125
    abs_period: int = 8
    # "dynamic": interference from the live allocation; "frozen": fixed UL
    # rise over thermal and every cell transmitting on DL; "off": noise only
    interference: str = "dynamic"
    ul_iot_db: float = 3.0

    def validate(self):
        if self.n_prb < 1 or self.w_prb_hz <= 0:
            raise ConfigError("n_prb and w_prb_hz must be positive")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.ue_p_max_dbm < self.p0_dbm:
            raise ConfigError("ue_p_max_dbm must be >= p0_dbm")
        if self.fading not in ("rayleigh", "none"):
            raise ConfigError(f"unknown fading model {self.fading!r}")
        if self.interference not in ("dynamic", "frozen", "off"):
            raise ConfigError(f"unknown interference mode {self.interference!r}")
        if not 0.0 <= self.abs_mute_ratio <= 1.0:
            raise ConfigError("abs_mute_ratio must be in [0, 1]")
        if self.abs_period < 1:
            raise ConfigError("abs_period must be >= 1")


@dataclass
class TrafficConfig:
    arrival_rate: float = 5.0  # flows/s over zone A
    file_size_ul_bits: float = 15e6
    file_size_dl_bits: float = 15e6
    ul_fraction: float = 0.3
    coverage_target_bps: float = 1.5e6
    max_users_zone_b: int = 8
    outage_mode: str = "rate"  # "rate" | "sinr"
    outage_sinr_db: float = -6.0
    tick_s: float = 0.1
    window_s: float = 6.0
    warmup_fraction: float = 0.2
    zone_b_traffic: bool = True

    def validate(self):
        if self.arrival_rate < 0:
            raise ConfigError("arrival_rate must be >= 0")
        if not 0.0 <= self.ul_fraction <= 1.0:
            raise ConfigError("ul_fraction must be in [0, 1]")
        if self.file_size_ul_bits <= 0 or self.file_size_dl_bits <= 0:
            raise ConfigError("file sizes must be positive")
        if self.tick_s <= 0 or self.window_s <= 0:
            raise ConfigError("tick_s and window_s must be positive")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise ConfigError("warmup_fraction must be in [0, 1)")
        if self.outage_mode not in ("rate", "sinr"):
            raise ConfigError(f"unknown outage mode {self.outage_mode!r}")


@dataclass
class ExposureConfig:
    sar_ul_weight: float = 8e-5  # W/kg per W
    sar_dl_weight: float = 4.7e-3
    activity_coefficient: float = 20.0

    def validate(self):
        if self.activity_coefficient < 1:
            raise ConfigError("activity_coefficient must be >= 1")
        if self.sar_ul_weight < 0 or self.sar_dl_weight < 0:
            raise ConfigError("SAR weights must be >= 0")


@dataclass
class SonConfig:
    epsilon: float = 2.0
    theta_bar: float = 0.05
    cio_min_db: float = -2.0
    cio_max_db: float = 12.0
    initial_cio_db: float = -2.0
    convergence_window: int = 20
    tol_offset_db: float = 0.5
    tol_outage: float = 0.01
    # a window without DL observations on a small cell: "zero" reads it as no
    # outage events, "hold" freezes that cell's offset for the window
    missing_outage: str = "zero"

    def validate(self):
        if self.epsilon <= 0:
            raise ConfigError("epsilon must be > 0")
        if not 0.0 < self.theta_bar <= 1.0:
            raise ConfigError("theta_bar must be in (0, 1]")
        if self.cio_min_db > self.cio_max_db:
            raise ConfigError("cio_min_db must be <= cio_max_db")
        if not self.cio_min_db <= self.initial_cio_db <= self.cio_max_db:
            raise ConfigError("initial_cio_db outside the CIO bounds")
        if self.missing_outage not in ("zero", "hold"):
            raise ConfigError(f"unknown missing_outage policy {self.missing_outage!r}")


@dataclass
class ExperimentConfig:
    mode: str = "sweep"  # "sweep" | "son" | "single"
    cio_values: list[float] = field(default_factory=lambda: [-2.0, 2.0, 6.0, 10.0])
    baseline_cio_db: float = -2.0
    horizon_s: float = 1800.0
    seeds: list[int] = field(default_factory=lambda: [1, 2, 3, 4, 5])
    out_dir: str = "out"
    workers: int = 1

    def validate(self):
        if self.mode not in ("sweep", "son", "single"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if not self.seeds:
            raise ConfigError("seed list is empty")
        if not self.cio_values:
            raise ConfigError("cio_values is empty")
        if self.horizon_s <= 0:
            raise ConfigError("horizon_s must be positive")


@dataclass
class ScenarioConfig:
    deployment: DeploymentConfig = field(default_factory=DeploymentConfig)
    radio: RadioConfig = field(default_factory=RadioConfig)
    traffic: TrafficConfig = field(default_factory=TrafficConfig)
    exposure: ExposureConfig = field(default_factory=ExposureConfig)
    son: SonConfig = field(default_factory=SonConfig)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)

    def validate(self):
        for section in (self.deployment, self.radio, self.traffic, self.exposure,
                        self.son, self.experiment):
            section.validate()
        warmup = self.traffic.warmup_fraction * self.experiment.horizon_s
        if self.experiment.horizon_s <= warmup:
            raise ConfigError("horizon must exceed the warmup period")
        for cio in self.experiment.cio_values:
            if not self.son.cio_min_db <= cio <= self.son.cio_max_db:
                raise ConfigError(f"CIO {cio} outside [{self.son.cio_min_db}, {self.son.cio_max_db}]")
        return self

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data):
        data = dict(data or {})
        unknown = set(data) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        kwargs = {}
        for f in dataclasses.fields(cls):
            section_cls = type(getattr(cls(), f.name))
            kwargs[f.name] = _section_from_dict(section_cls, data.get(f.name, {}))
        return cls(**kwargs)


def _section_from_dict(section_cls, data):
    if not isinstance(data, dict):
        raise ConfigError(f"section {section_cls.__name__} must be a mapping")
    names = {f.name: f for f in dataclasses.fields(section_cls)}
    unknown = set(data) - set(names)
    if unknown:
        raise ConfigError(f"unknown keys in {section_cls.__name__}: {sorted(unknown)}")
    defaults = section_cls()
    kwargs = {}
    for key, value in data.items():
        current = getattr(defaults, key)
        if isinstance(current, tuple):
            value = tuple(float(v) for v in value)
        elif isinstance(current, bool):
            value = bool(value)
        elif isinstance(current, int):
            value = int(value)
        elif isinstance(current, float):
            value = float(value)
        elif isinstance(current, list):
            value = [type(current[0])(v) for v in value] if current else list(value)
        kwargs[key] = value
    return section_cls(**kwargs)


def table1_preset():
    """Full-scale deployment: two rings of tri-sector sites (57 sectors)."""
    return ScenarioConfig()


def desk_preset():
    """Reduced deployment for laptop-scale runs: one ring (21 sectors)."""
    cfg = ScenarioConfig()
    cfg.deployment.rings = 1
    cfg.deployment.grid_resolution_m = 25.0
    cfg.experiment.horizon_s = 1800.0
    # zone-A offered traffic that keeps the macros heavily loaded but stable
    cfg.traffic.arrival_rate = 2.0
    # with P0 = -58 dBm nearly every UE sits at the power ceiling; -80 dBm keeps
    # fractional power control active so UL power tracks the serving link
    cfg.radio.p0_dbm = -80.0
    return cfg


PRESETS = {"table1": table1_preset, "desk": desk_preset}


def preset(name):
    try:
        return PRESETS[name]()
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def dump_config(cfg, path=None):
    data = _plain(cfg.to_dict())
    text = yaml.safe_dump(data, sort_keys=False)
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def load_config(path):
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return ScenarioConfig.from_dict(data).validate()


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj
