"""Distributed self-optimizing load balancing of small-cell offsets.

Every small cell moves its CIO by ``epsilon * h_s`` per KPI window, where
``h_s`` balances its UL load against the UL load broadcast by its parent
macro while its DL outage is below ``theta_bar``, and otherwise pulls the
outage back towards the constraint.  Offsets are projected onto the CIO box.

Besides the controller this module carries the numerical diagnostics of the
iteration: a hull oracle for the set-valued drift at discontinuities, the
Lyapunov function of the constraint set and a convergence verdict.
"""

from __future__ import annotations

import csv
import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError
from .netmodel import PowerOffsetVector

LOAD_BALANCE = "load_balance"
CONSTRAINT = "constraint"


@dataclass(frozen=True)
class DriftValue:
    value: float
    branch: str
    inputs: tuple[float, float, float]


def drift(macro_ul_load, sc_ul_load, sc_outage, theta_bar):
    """Drift of one small cell.

    Examples
    --------
    >>> drift(0.8, 0.3, 0.02, 0.05).value
    0.5
    >>> drift(0.8, 0.3, 0.05, 0.05).branch
    'constraint'
    """
    for name, v in (("macro_ul_load", macro_ul_load), ("sc_ul_load", sc_ul_load),
                    ("sc_outage", sc_outage), ("theta_bar", theta_bar)):
        if not 0.0 <= v <= 1.0:
            raise DomainError(f"{name} must be in [0, 1], got {v}")
    inputs = (float(macro_ul_load), float(sc_ul_load), float(sc_outage))
    if sc_outage < theta_bar:
        return DriftValue(float(macro_ul_load - sc_ul_load), LOAD_BALANCE, inputs)
    return DriftValue(float(theta_bar - sc_outage), CONSTRAINT, inputs)


def drift_vector(ul_load, outage, sc_ids, parent, theta_bar):
    """Vectorized drift over ``sc_ids``; NaN where a KPI is missing."""
    ul_load = np.asarray(ul_load, dtype=float)
    outage = np.asarray(outage, dtype=float)
    m = ul_load[parent[sc_ids]]
    s = ul_load[sc_ids]
    th = outage[sc_ids]
    constrained = th >= theta_bar
    value = np.where(constrained, theta_bar - th, m - s)
    value = np.where(np.isnan(m) | np.isnan(s) | np.isnan(th), np.nan, value)
    return value, constrained


def project(cio_db, lo, hi):
    return np.clip(np.asarray(cio_db, dtype=float), lo, hi)


def lyapunov(offsets, outages, theta_bar):
    """``max_s 1{theta_s > theta_bar} * ||P|| * (theta_s - theta_bar)**2``.

    ``offsets`` is a :class:`PowerOffsetVector` (its small-cell ``pilot + CIO``
    entries form ``P``) or a plain array of those entries; ``outages`` holds
    one value per small cell.  NaN outages count as satisfied.
    """
    p = offsets.entries if isinstance(offsets, PowerOffsetVector) else np.asarray(offsets, float)
    th = np.asarray(outages, dtype=float)
    norm = float(np.linalg.norm(p))
    excess = np.where(th > theta_bar, th - theta_bar, 0.0)
    excess = np.nan_to_num(excess, nan=0.0)
    if excess.size == 0:
        return 0.0
    return float(np.max(norm * excess ** 2))


# ---------------------------------------------------------------------------
# state and iteration


@dataclass(frozen=True)
class HistoryEntry:
    iteration: int
    sc_ids: np.ndarray
    cio_db: np.ndarray  # after the update
    offset_dbm: np.ndarray  # pilot + CIO after the update
    drift: np.ndarray
    constrained: np.ndarray
    ul_load_sc: np.ndarray
    ul_load_macro: np.ndarray
    outage: np.ndarray
    lyapunov: float
    skipped: bool = False


@dataclass(frozen=True)
class SonState:
    offsets: PowerOffsetVector
    parent: np.ndarray
    epsilon: float = 2.0
    theta_bar: float = 0.05
    iteration: int = 0
    history: tuple = ()
    skips: tuple = ()
    missing_outage: str = "zero"

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ConfigError("epsilon must be > 0")
        if not 0.0 < self.theta_bar <= 1.0:
            raise ConfigError("theta_bar must be in (0, 1]")

    @classmethod
    def initial(cls, layout, son_cfg, cio_db=None):
        start = son_cfg.initial_cio_db if cio_db is None else cio_db
        offsets = PowerOffsetVector.uniform(layout, start, son_cfg.cio_min_db, son_cfg.cio_max_db)
        return cls(offsets=offsets, parent=np.asarray(layout.parent_macro),
                   epsilon=son_cfg.epsilon, theta_bar=son_cfg.theta_bar,
                   missing_outage=son_cfg.missing_outage)

    def _next(self, offsets, entry, skipped=False):
        skips = self.skips + (self.iteration,) if skipped else self.skips
        return SonState(offsets, self.parent, self.epsilon, self.theta_bar, self.iteration + 1,
                        self.history + (entry,), skips, self.missing_outage)

    @property
    def sc_ids(self):
        return self.offsets.sc_indices


def son_step(state, kpis):
    """One projected stochastic-approximation step from a window of KPIs.

    ``kpis`` exposes per-cell ``ul_load`` and ``outage`` arrays (a
    :class:`~emfson.flowsim.KpiWindow` or anything shaped alike).  Small
    cells whose load is missing hold their offset, as do cells without an
    outage measurement under the ``"hold"`` policy (the ``"zero"`` policy
    counts them as free of outage events).  A missing macro load skips the
    iteration.
    """
    sc = state.sc_ids
    ul = np.asarray(kpis.ul_load, dtype=float)
    out = np.array(kpis.outage, dtype=float)
    if state.missing_outage == "zero":
        out[sc] = np.nan_to_num(out[sc], nan=0.0)
    macro_load = ul[state.parent[sc]]
    if np.all(np.isnan(macro_load)):
        skipped = HistoryEntry(state.iteration, sc, state.offsets.sc_cio_db,
                               state.offsets.entries, np.zeros(sc.size), np.zeros(sc.size, bool),
                               ul[sc], macro_load, out[sc],
                               lyapunov(state.offsets, out[sc], state.theta_bar), skipped=True)
        return state._next(state.offsets, skipped, skipped=True)
    value, constrained = drift_vector(ul, out, sc, state.parent, state.theta_bar)
    step = np.nan_to_num(value, nan=0.0)
    new = state.offsets.with_sc_cio(state.offsets.sc_cio_db + state.epsilon * step)
    entry = HistoryEntry(state.iteration, sc, new.sc_cio_db, new.entries, value, constrained,
                         ul[sc], macro_load, out[sc],
                         lyapunov(state.offsets, out[sc], state.theta_bar))
    return state._next(new, entry)


class SonController:
    """Window callback for the flow simulator: one SON iteration per KPI window."""

    def __init__(self, state):
        self.state = state

    def __call__(self, window, simulator=None):
        self.state = son_step(self.state, window)
        return self.state.offsets


def iterate(state, kpi_fn, n_iter):
    """Run ``n_iter`` steps against a deterministic ``kpi_fn(offsets) -> (ul_load, outage)``."""

    class _Kpis:
        __slots__ = ("ul_load", "outage")

    for _ in range(n_iter):
        k = _Kpis()
        k.ul_load, k.outage = kpi_fn(state.offsets)
        state = son_step(state, k)
    return state


# ---------------------------------------------------------------------------
# set-valued drift


def drift_at(offsets, kpi_fn, parent, theta_bar):
    ul, out = kpi_fn(offsets)
    value, _ = drift_vector(ul, out, offsets.sc_indices, parent, theta_bar)
    return value


def hull_oracle(offsets, kpi_fn, parent, theta_bar, gammas=(1.0, 0.1, 0.01, 0.001),
                n_samples=32, seed=0):
    """Interval hull of the drift over perturbations of the small-cell CIOs.

    For every radius in ``gammas`` (decreasing), ``n_samples`` offset vectors
    are drawn uniformly from the box of that radius around ``offsets``
    (the centre itself excluded) and the per-SC min/max of ``h_s`` recorded.
    Returns ``(lo, hi)`` arrays for the smallest radius; the full sequence is
    available through :func:`hull_sequence`.
    """
    seq = hull_sequence(offsets, kpi_fn, parent, theta_bar, gammas, n_samples, seed)
    return seq[-1][1], seq[-1][2]


def hull_sequence(offsets, kpi_fn, parent, theta_bar, gammas=(1.0, 0.1, 0.01, 0.001),
                  n_samples=32, seed=0):
    if n_samples < 2:
        raise ConfigError("hull_oracle needs at least two samples")
    gammas = sorted((float(g) for g in gammas), reverse=True)
    if not gammas or gammas[-1] <= 0:
        raise ConfigError("radii must be positive")
    rng = np.random.default_rng(seed)
    base = offsets.sc_cio_db
    out = []
    for g in gammas:
        wide = PowerOffsetVector(offsets.pilot_dbm, offsets.cio_db, offsets.is_small_cell,
                                 offsets.cio_min_db - g, offsets.cio_max_db + g)
        vals = []
        for _ in range(n_samples):
            delta = rng.uniform(-g, g, size=base.size)
            cio = np.array(wide.cio_db)
            cio[wide.is_small_cell] = base + delta
            p = PowerOffsetVector(wide.pilot_dbm, cio, wide.is_small_cell,
                                  wide.cio_min_db, wide.cio_max_db)
            vals.append(drift_at(p, kpi_fn, parent, theta_bar))
        vals = np.array(vals)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)  # SCs with an empty region
            out.append((g, np.nanmin(vals, axis=0), np.nanmax(vals, axis=0)))
    return out


# ---------------------------------------------------------------------------
# convergence


class Verdict(enum.Enum):
    CONVERGED = "converged"
    RUNNING = "running"
    OSCILLATING = "oscillating"


def convergence_check(history, window=20, tol_offset=0.5, tol_outage=0.01, theta_bar=0.05):
    """Verdict over the last ``window`` iterations of a SON history.

    Converged means every small-cell offset stayed within ``tol_offset`` dB
    and every small cell's mean outage over the window (missing values
    ignored) is at most ``theta_bar + tol_outage``.  A history whose offset
    increments alternate in sign with magnitude above ``tol_offset`` is
    reported as oscillating.
    """
    entries = [h for h in history if not h.skipped]
    if len(entries) < window:
        return Verdict.RUNNING
    last = entries[-window:]
    offs = np.array([h.cio_db for h in last])
    span = offs.max(axis=0) - offs.min(axis=0)
    if offs.shape[0] >= 3:
        d = np.diff(offs, axis=0)
        alternating = np.all(d[1:] * d[:-1] < 0, axis=0) & np.all(np.abs(d) > tol_offset, axis=0)
        if np.any(alternating):
            return Verdict.OSCILLATING
    outs = np.array([h.outage for h in last], dtype=float)
    seen = ~np.isnan(outs)
    mean_out = np.where(seen, outs, 0.0).sum(axis=0) / np.maximum(seen.sum(axis=0), 1)
    if np.all(span <= tol_offset) and np.all(mean_out <= theta_bar + tol_outage):
        return Verdict.CONVERGED
    return Verdict.RUNNING


def first_convergence(history, window=20, tol_offset=0.5, tol_outage=0.01, theta_bar=0.05):
    """Iteration index at which the verdict first becomes CONVERGED, or ``None``."""
    entries = [h for h in history if not h.skipped]
    for k in range(window, len(entries) + 1):
        if convergence_check(entries[:k], window, tol_offset, tol_outage,
                             theta_bar) is Verdict.CONVERGED:
            return entries[k - 1].iteration
    return None


# ---------------------------------------------------------------------------
# trace output

SON_COLUMNS = ["iteration", "sc_id", "offset_dbm", "drift", "branch", "ul_load_sc",
               "ul_load_macro", "outage", "V"]


def _num(x):
    x = float(x)
    return "" if math.isnan(x) else repr(x)


def son_rows(history):
    rows = []
    for h in history:
        for i, sc in enumerate(h.sc_ids):
            if h.skipped:
                branch = "skipped"
            elif math.isnan(h.drift[i]):
                branch = "hold"
            else:
                branch = CONSTRAINT if h.constrained[i] else LOAD_BALANCE
            rows.append([h.iteration, int(sc), _num(h.offset_dbm[i]), _num(h.drift[i]), branch,
                         _num(h.ul_load_sc[i]), _num(h.ul_load_macro[i]), _num(h.outage[i]),
                         _num(h.lyapunov)])
    return rows


def write_son_trace(history, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(SON_COLUMNS)
        w.writerows(son_rows(history))


__all__ = ["DriftValue", "HistoryEntry", "SonController", "SonState", "Verdict", "drift",
           "drift_vector", "project", "lyapunov", "son_step", "iterate", "hull_oracle",
           "hull_sequence", "convergence_check", "first_convergence", "write_son_trace",
           "SON_COLUMNS"]
