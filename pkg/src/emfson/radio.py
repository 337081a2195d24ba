"""Uplink power control, UL/DL SINR, link abstraction and fading-averaged rates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ContractViolation, DomainError
from .netmodel import db_to_lin

UL = "UL"
DL = "DL"


# ---------------------------------------------------------------------------
# resource grid


def round_robin_counts(n_prb, n_flows):
    """PRB count per flow under Round Robin: ``floor`` or ``ceil`` of ``n_prb/n``."""
    if n_flows <= 0:
        return np.zeros(0, dtype=np.int64)
    base, extra = divmod(n_prb, n_flows)
    counts = np.full(n_flows, base, dtype=np.int64)
    counts[:extra] += 1
    return counts


@dataclass
class ResourceGrid:
    n_prb: int = 50
    w_prb_hz: float = 180e3
    abs_mute_pattern: tuple[bool, ...] = (True, False, False, False, False, False, False, False)
    allocation: dict = field(default_factory=dict)  # cell -> {flow id -> PRB indices}

    @classmethod
    def with_mute_ratio(cls, n_prb, w_prb_hz, mute_ratio, period=8):
        n_muted = int(round(mute_ratio * period))
        pattern = tuple(i < n_muted for i in range(period))
        return cls(n_prb=n_prb, w_prb_hz=w_prb_hz, abs_mute_pattern=pattern)

    @property
    def bandwidth_hz(self):
        return self.n_prb * self.w_prb_hz

    @property
    def mute_ratio(self):
        if not self.abs_mute_pattern:
            return 0.0
        return sum(self.abs_mute_pattern) / len(self.abs_mute_pattern)

    def macro_muted(self, subframe):
        if not self.abs_mute_pattern:
            return False
        return self.abs_mute_pattern[subframe % len(self.abs_mute_pattern)]

    def allocate_round_robin(self, cell, flow_ids, rotation=0):
        """Split the PRBs of ``cell`` into contiguous Round Robin chunks.

        With more flows than PRBs, ``rotation`` selects which flows are served
        on this scheduling interval.
        """
        flow_ids = list(flow_ids)
        serving = np.zeros(len(flow_ids), dtype=np.int64)
        start, size = kernels.round_robin(serving, 1, self.n_prb, rotation)
        self.allocation[cell] = {fid: np.arange(s, s + n)
                                 for fid, s, n in zip(flow_ids, start, size)}
        return self.allocation[cell]


# ---------------------------------------------------------------------------
# uplink power control


@dataclass(frozen=True)
class PowerControlParams:
    p_max: float = 23.0  # dBm
    p0: float = -58.0  # dBm
    alpha: float = 0.8

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise DomainError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.p_max < self.p0:
            raise DomainError("p_max must be >= p0")


def ul_tx_power_dbm(params, n_prb_allocated, dl_pathloss_db):
    """Open-loop fractional power control: ``min(Pmax, P0 + 10log10(M) + alpha*PL)``.

    Vectorized over ``n_prb_allocated`` and ``dl_pathloss_db``.  The power is
    split evenly over the allocated PRBs (see :func:`ul_prb_power_dbm`).
    """
    m = np.asarray(n_prb_allocated, dtype=float)
    pl = np.asarray(dl_pathloss_db, dtype=float)
    if np.any(m < 1):
        raise ContractViolation("at least one PRB must be allocated")
    if np.any(pl < 0):
        raise DomainError("pathloss must be >= 0 dB")
    out = np.minimum(params.p_max, params.p0 + 10.0 * np.log10(m) + params.alpha * pl)
    return float(out) if out.ndim == 0 else out


def ul_prb_power_dbm(params, n_prb_allocated, dl_pathloss_db):
    total = ul_tx_power_dbm(params, n_prb_allocated, dl_pathloss_db)
    return total - 10.0 * np.log10(np.asarray(n_prb_allocated, dtype=float))


# ---------------------------------------------------------------------------
# SINR


@dataclass(frozen=True)
class SinrSample:
    value_linear: float
    direction: str
    prb_index: int = 0

    def __post_init__(self):
        if not (self.value_linear >= 0 and math.isfinite(self.value_linear)):
            raise DomainError(f"invalid SINR {self.value_linear}")

    @property
    def value_db(self):
        return 10.0 * math.log10(self.value_linear) if self.value_linear > 0 else -math.inf


def noise_per_prb_w(noise_density_dbm_hz, w_prb_hz):
    return 10.0 ** ((noise_density_dbm_hz - 30.0) / 10.0) * w_prb_hz


def ul_sinr(signal_power_w, signal_gain, interferers, noise_density_dbm_hz, grid, prb_index=0):
    """UL SINR of one flow on one PRB.

    Parameters
    ----------
    signal_power_w : float
        Per-PRB transmit power of the target flow (W).
    signal_gain : float
        Linear gain from the target UE to its serving cell.
    interferers : iterable of (flow_id, power_w, gain)
        Flows of *other* cells on the same PRB; ``gain`` is towards the
        target's serving cell.
    """
    noise = noise_per_prb_w(noise_density_dbm_hz, grid.w_prb_hz)
    interference = 0.0
    for _fid, p, g in interferers:
        interference += p * g
    return SinrSample(signal_power_w * signal_gain / (noise + interference), UL, prb_index)


def dl_sinr(serving, cell_powers_dbm, gains_db, abs_mask, noise_density_dbm_hz, grid,
            prb_index=0):
    """DL SINR on one PRB.

    ``cell_powers_dbm`` is the per-PRB data power of every cell (``-inf`` when
    the cell is silent), ``gains_db`` the total gain from every cell to the
    user (floats or :class:`~emfson.netmodel.LinkGain`), ``abs_mask`` flags
    cells muted on this subframe.
    """
    gains = np.array([g.total_gain_db if hasattr(g, "total_gain_db") else g for g in gains_db],
                     dtype=float)
    power = np.asarray(cell_powers_dbm, dtype=float)
    muted = np.asarray(abs_mask, dtype=bool)
    if muted[serving] or not np.isfinite(power[serving]):
        raise ContractViolation(f"serving cell {serving} is muted on a scheduled PRB")
    rx = np.where(np.isfinite(power), 10.0 ** ((power + gains - 30.0) / 10.0), 0.0)
    rx = np.where(muted, 0.0, rx)
    noise = noise_per_prb_w(noise_density_dbm_hz, grid.w_prb_hz)
    others = np.delete(rx, serving)
    interference = others.sum()
    return SinrSample(float(rx[serving] / (noise + interference)), DL, prb_index)


# ---------------------------------------------------------------------------
# link abstraction and fading


@dataclass(frozen=True)
class LinkAbstraction:
    """Truncated attenuated Shannon bound ``min(eta_max, beta*log2(1+x))``."""

    beta: float = 0.75
    eta_max: float = 6.0

    def __call__(self, sinr):
        return spectral_efficiency(sinr, self.beta, self.eta_max)


def spectral_efficiency(sinr, beta=0.75, eta_max=6.0):
    x = np.asarray(sinr, dtype=float)
    if np.any(x < 0):
        raise DomainError("SINR must be >= 0")
    out = np.minimum(eta_max, beta * np.log2(1.0 + x))
    return float(out) if out.ndim == 0 else out


class NoFading:
    name = "none"

    def average(self, func, sinr):
        return func(np.asarray(sinr, dtype=float))


class RayleighFading:
    """Unit-mean exponential power fading, averaged by Gauss-Laguerre quadrature."""

    name = "rayleigh"

    def __init__(self, n_nodes=32):
        self.nodes, self.weights = np.polynomial.laguerre.laggauss(n_nodes)

    def average(self, func, sinr):
        x = np.asarray(sinr, dtype=float)
        vals = func(x[..., None] * self.nodes)
        return vals @ self.weights


def fading_model(name, n_nodes=32):
    if name == "none":
        return NoFading()
    if name == "rayleigh":
        return RayleighFading(n_nodes)
    raise DomainError(f"unknown fading model {name!r}")


def expected_rate(sinr_per_prb, w_prb_hz, fading, link=LinkAbstraction()):
    """Fading-averaged rate (bit/s) over a PRB set: ``sum_k W * E[phi(SINR_k * xi)]``."""
    sinr = np.atleast_1d(np.asarray(sinr_per_prb, dtype=float))
    if sinr.size == 0:
        raise ContractViolation("PRB set must not be empty")
    return float(w_prb_hz * np.sum(fading.average(link, sinr)))


class EfficiencyTable:
    """Tabulated ``E[phi(x * xi)]`` on a uniform dB grid for the simulator hot loop.

    Entries are computed with the same fading model as :func:`expected_rate`;
    lookups interpolate linearly in dB and scale linearly below the grid.
    """

    def __init__(self, fading, link=LinkAbstraction(), db_min=-40.0, db_max=60.0, step_db=0.01):
        self.db_min = float(db_min)
        self.step_db = float(step_db)
        n = int(round((db_max - db_min) / step_db)) + 1
        grid = db_to_lin(self.db_min + step_db * np.arange(n))
        self.table = np.ascontiguousarray(fading.average(link, grid))

    def __call__(self, sinr):
        arr = np.ascontiguousarray(sinr, dtype=float)
        return kernels.efficiency_lookup(arr, self.db_min, self.step_db, self.table)
