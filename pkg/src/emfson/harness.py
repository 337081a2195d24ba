"""Experiment orchestration: CIO sweeps, SON campaigns and report emission.

A campaign runs every seed of the scenario, summarizes each run (loads,
outage, transfer times, UL transmit powers, exposure) and aggregates the
summaries across seeds.  Reports are written deterministically: no
timestamps, stable ordering and a ``manifest.json`` of SHA-256 digests.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import dump_config
from .errors import ContractViolation, DomainError, NoMeasurement, SimulationFault
from .exposure import COMPONENTS, GROUPS, exposure_gain
from .flowsim import run
from .netmodel import PowerOffsetVector, build_layout, coverage_map, write_coverage_csv
from .son import SonController, SonState, convergence_check, first_convergence, write_son_trace

log = logging.getLogger(__name__)

# dBm thresholds of the UL transmit power CCDF
CCDF_GRID_DBM = np.arange(-40.0, 23.5, 0.5)


def _nanmean(a, axis=0):
    a = np.asarray(a, dtype=float)
    seen = ~np.isnan(a)
    n = seen.sum(axis=axis)
    total = np.where(seen, a, 0.0).sum(axis=axis)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(n > 0, total / np.maximum(n, 1), np.nan)


@dataclass
class RunSummary:
    """Condensed outcome of one simulation run."""

    label: str
    seed: int
    cio_db: np.ndarray  # final small-cell CIOs
    ul_load: np.ndarray  # per cell, mean over measured windows
    dl_load: np.ndarray
    outage: np.ndarray
    ftt_ul: np.ndarray
    ftt_dl: np.ndarray
    ul_tx_power_w: np.ndarray  # per completed UL flow, post warmup
    exposure: object
    n_flows: int
    trace: object = field(default=None, repr=False)
    son_history: tuple = ()
    converged_at: int | None = None
    verdict: str | None = None

    def group_mean(self, values, cells):
        return float(_nanmean(np.asarray(values)[cells]))


def summarize(label, seed, trace, offsets, son_history=(), son_cfg=None):
    wins = trace.measured_windows()
    if not wins:
        raise NoMeasurement("no measured KPI windows; extend the horizon")
    stack = lambda name: np.array([getattr(w, name) for w in wins], dtype=float)  # noqa: E731
    ul_power = np.array([f.mean_tx_power_w for f in trace.flows
                         if f.direction == "UL" and f.done and f.arrival_time >= trace.warmup_s])
    conv = verdict = None
    if son_history:
        kw = dict(window=son_cfg.convergence_window, tol_offset=son_cfg.tol_offset_db,
                  tol_outage=son_cfg.tol_outage, theta_bar=son_cfg.theta_bar)
        conv = first_convergence(son_history, **kw)
        verdict = convergence_check(son_history, **kw).value
    return RunSummary(label=label, seed=seed, cio_db=np.array(offsets.sc_cio_db),
                      ul_load=_nanmean(stack("ul_load")), dl_load=_nanmean(stack("dl_load")),
                      outage=_nanmean(stack("outage")), ftt_ul=_nanmean(stack("mean_ftt_ul")),
                      ftt_dl=_nanmean(stack("mean_ftt_dl")), ul_tx_power_w=ul_power,
                      exposure=trace.exposure.report(), n_flows=len(trace.flows), trace=trace,
                      son_history=tuple(son_history), converged_at=conv, verdict=verdict)


def run_single(scenario, layout, seed, cio_db=None, son=False, horizon_s=None, label=None):
    """One run at a uniform small-cell CIO, or a SON run when ``son`` is true."""
    son_cfg = scenario.son
    if son:
        state = SonState.initial(layout, son_cfg)
        ctl = SonController(state)
        trace = run(scenario, layout, state.offsets, horizon_s, seed, controller=ctl)
        offsets, history = ctl.state.offsets, ctl.state.history
        trace.son_rows = history
    else:
        cio = scenario.experiment.baseline_cio_db if cio_db is None else cio_db
        offsets = PowerOffsetVector.uniform(layout, cio, son_cfg.cio_min_db, son_cfg.cio_max_db)
        trace = run(scenario, layout, offsets, horizon_s, seed)
        history = ()
    label = label or ("son" if son else f"cio_{float(cio):g}")
    log.info("run %s seed %d: %d flows", label, seed, len(trace.flows))
    return summarize(label, seed, trace, offsets, history, son_cfg)


@dataclass(frozen=True)
class FailedRun:
    """A run that raised; the campaign carries on without it."""

    label: str
    seed: int
    error: str
    message: str


# per-run failures that do not invalidate the other runs of a campaign
_RUN_ERRORS = (SimulationFault, ContractViolation, DomainError, NoMeasurement)


def _job_label(scenario, cio, son):
    if son:
        return "son"
    cio = scenario.experiment.baseline_cio_db if cio is None else cio
    return f"cio_{float(cio):g}"


def _safe_run(scenario, layout, seed, cio, son, horizon):
    try:
        return run_single(scenario, layout, seed, cio, son, horizon)
    except _RUN_ERRORS as exc:
        label = _job_label(scenario, cio, son)
        log.error("run %s seed %d failed: %s", label, seed, exc)
        return FailedRun(label, seed, type(exc).__name__, str(exc))


def _job(args):
    scenario, seed, cio, son, horizon = args
    return _safe_run(scenario, build_layout(scenario.deployment), seed, cio, son, horizon)


def _run_jobs(scenario, jobs, layout=None):
    workers = max(1, int(scenario.experiment.workers))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_job, [(scenario,) + j for j in jobs]))
    layout = layout or build_layout(scenario.deployment)
    return [_safe_run(scenario, layout, seed, cio, son, horizon)
            for seed, cio, son, horizon in jobs]


def _collect(results):
    runs, failures = {}, []
    for r in results:
        if isinstance(r, FailedRun):
            failures.append(r)
        else:
            runs.setdefault(r.label, []).append(r)
    return runs, failures


# ---------------------------------------------------------------------------
# campaigns


@dataclass
class CampaignResult:
    mode: str
    scenario: object
    layout: object
    runs: dict  # label -> list of RunSummary, one per successful seed (seed order)
    seeds: list
    baseline_label: str | None = None
    failures: list = field(default_factory=list)

    def labels(self):
        return list(self.runs)

    def metric(self, label, fn):
        """Per-seed values of ``fn(summary)`` for one label."""
        return np.array([fn(r) for r in self.runs[label]], dtype=float)

    def mean_std(self, label, fn):
        v = self.metric(label, fn)
        std = float(np.std(v, ddof=1)) if v.size > 1 else 0.0
        return float(np.mean(v)), std

    def gains(self, label):
        """Per-seed exposure gains of ``label`` against the baseline runs."""
        if self.baseline_label is None:
            raise NoMeasurement("campaign has no baseline")
        base = {r.seed: r for r in self.runs.get(self.baseline_label, [])}
        return [exposure_gain(base[r.seed].exposure, r.exposure)
                for r in self.runs[label] if r.seed in base]

    def mean_gain(self, label, component, group="all"):
        vals = np.array([g[(component, group)] for g in self.gains(label)
                         if (component, group) in g])
        if vals.size == 0:
            return float("nan"), float("nan")
        return float(vals.mean()), (float(vals.std(ddof=1)) if vals.size > 1 else 0.0)


def run_baseline_sweep(scenario, seeds=None, horizon_s=None, layout=None):
    seeds = list(scenario.experiment.seeds if seeds is None else seeds)
    cios = [float(c) for c in scenario.experiment.cio_values]
    jobs = [(s, c, False, horizon_s) for c in cios for s in seeds]
    layout = layout or build_layout(scenario.deployment)
    runs, failures = _collect(_run_jobs(scenario, jobs, layout))
    base = f"cio_{float(scenario.experiment.baseline_cio_db):g}"
    return CampaignResult("sweep", scenario, layout, runs, seeds,
                          base if base in runs else None, failures)


def run_son_campaign(scenario, seeds=None, horizon_s=None, layout=None):
    """SON runs plus baseline runs at the baseline CIO for the same seeds."""
    seeds = list(scenario.experiment.seeds if seeds is None else seeds)
    base_cio = float(scenario.experiment.baseline_cio_db)
    jobs = [(s, base_cio, False, horizon_s) for s in seeds]
    jobs += [(s, None, True, horizon_s) for s in seeds]
    layout = layout or build_layout(scenario.deployment)
    runs, failures = _collect(_run_jobs(scenario, jobs, layout))
    base = f"cio_{base_cio:g}"
    return CampaignResult("son", scenario, layout, runs, seeds,
                          base if base in runs else None, failures)


def run_campaign(scenario, seeds=None, horizon_s=None):
    mode = scenario.experiment.mode
    if mode == "sweep":
        return run_baseline_sweep(scenario, seeds, horizon_s)
    if mode == "son":
        return run_son_campaign(scenario, seeds, horizon_s)
    seeds = list(scenario.experiment.seeds if seeds is None else seeds)
    layout = build_layout(scenario.deployment)
    cio = float(scenario.experiment.baseline_cio_db)
    runs, failures = _collect(_run_jobs(scenario, [(s, cio, False, horizon_s) for s in seeds],
                                        layout))
    return CampaignResult("single", scenario, layout, runs, seeds, None, failures)


# ---------------------------------------------------------------------------
# derived tables


def ccdf(values_w, grid_dbm=CCDF_GRID_DBM):
    """Empirical ``P(X > x)`` of powers (W) on a dBm grid."""
    v = np.asarray(values_w, dtype=float)
    if v.size == 0:
        return np.full(grid_dbm.shape, np.nan)
    x = 10.0 ** ((grid_dbm - 30.0) / 10.0)
    return (v[None, :] > x[:, None]).mean(axis=1)


def mean_ccdf(result, label, grid_dbm=CCDF_GRID_DBM):
    return np.mean([ccdf(r.ul_tx_power_w, grid_dbm) for r in result.runs[label]], axis=0)


def group_cells(layout):
    za = np.array(sorted(layout.zone_a_sector_ids), dtype=np.int64)
    sc = np.flatnonzero(layout.is_small_cell)
    return {"macro": za, "sc": sc}


SWEEP_METRICS = ("ul_load", "dl_load", "outage", "ftt_ul", "ftt_dl")


def sweep_rows(result):
    cells = group_cells(result.layout)
    rows = []
    for label in result.labels():
        for group, idx in cells.items():
            for m in SWEEP_METRICS:
                mean, std = result.mean_std(label, lambda r, m=m, idx=idx: r.group_mean(getattr(r, m), idx))
                rows.append([label, group, m, mean, std])
        mean, std = result.mean_std(label, lambda r: float(np.mean(r.ul_tx_power_w)) if r.ul_tx_power_w.size else np.nan)
        rows.append([label, "all", "mean_ul_tx_power_w", mean, std])
    return rows


def exposure_rows(result):
    rows = []
    for label in result.labels():
        for group in ("all",) + GROUPS:
            for comp in COMPONENTS:
                mean, std = result.mean_std(label, lambda r, c=comp, g=group: r.exposure.value(c, g))
                gain = gstd = None
                if result.baseline_label is not None and label != result.baseline_label:
                    try:
                        gain, gstd = result.mean_gain(label, comp, group)
                    except (KeyError, ValueError):
                        pass
                rows.append([label, comp, group, mean, std, gain, gstd])
    return rows


# ---------------------------------------------------------------------------
# reports


def _fmt(x):
    if x is None:
        return ""
    x = float(x)
    return "" if np.isnan(x) else repr(x)


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) or v is None else v
                        for v in row])


def summary_text(result):
    lines = [f"mode: {result.mode}", f"seeds: {','.join(str(s) for s in result.seeds)}"]
    cells = group_cells(result.layout)
    for label in result.labels():
        lines.append(f"[{label}]")
        for group, idx in cells.items():
            parts = []
            for m in ("ul_load", "dl_load", "outage"):
                mean, std = result.mean_std(label, lambda r, m=m, idx=idx: r.group_mean(getattr(r, m), idx))
                parts.append(f"{m} {mean:.4f} +/- {std:.4f}")
            lines.append(f"  {group:>5}: " + ", ".join(parts))
        mean, std = result.mean_std(label, lambda r: r.exposure.f_total)
        lines.append(f"  exposure total {mean:.6e} +/- {std:.2e} W/kg")
        runs = result.runs[label]
        if runs[0].son_history:
            finals = np.array([r.cio_db for r in runs])
            lines.append(f"  final CIO mean {finals.mean():.2f} dB (min {finals.min():.2f}, max {finals.max():.2f})")
            lines.append("  convergence: " + ", ".join(
                f"seed {r.seed} {r.verdict} at {r.converged_at}" for r in runs))
        if result.baseline_label is not None and label != result.baseline_label:
            for comp, group in (("total", "all"), ("ul", "macro"), ("total", "macro"), ("dl", "all")):
                g, s = result.mean_gain(label, comp, group)
                lines.append(f"  gain {comp}/{group}: {g:+.2f} % +/- {s:.2f}")
            g_macro = result.mean_gain(label, "total", "macro")[0]
            g_all = result.mean_gain(label, "total", "all")[0]
            g_dl = result.mean_gain(label, "dl", "all")[0]
            inside = []
            if 25.0 <= g_macro <= 35.0:
                inside.append("macro combined gain near 30 %")
            if 15.0 <= g_all <= 20.0:
                inside.append("zone-A gain within 15-20 %")
            if -20.0 <= g_dl <= -10.0:
                inside.append("DL increase within 10-20 %")
            lines.append("  full-scale reference bands matched: " + (", ".join(inside) or "none"))
    for f in result.failures:
        lines.append(f"FAILED {f.label} seed {f.seed}: {f.error}: {f.message}")
    return "\n".join(lines) + "\n"


def emit_reports(result, out_dir):
    """Write per-run files, aggregate tables, summary and manifest under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    # the output location is not part of the results: keep reports relocatable
    cfg = copy.deepcopy(result.scenario)
    cfg.experiment.out_dir = "."
    dump_config(cfg, out / "config.yaml")
    (out / "layout.json").write_bytes(result.layout.serialize())
    for label, runs in result.runs.items():
        for r in runs:
            d = out / "runs" / f"{label}_seed{r.seed}"
            d.mkdir(parents=True, exist_ok=True)
            r.trace.write_windows_csv(d / "windows.csv")
            r.trace.write_flows_csv(d / "flows.csv")
            r.exposure.write_csv(d / "exposure.csv")
            if r.son_history:
                write_son_trace(r.son_history, d / "son_trace.csv")
        final = runs[0]
        offsets = PowerOffsetVector.uniform(result.layout, 0.0).with_sc_cio(final.cio_db)
        write_coverage_csv(coverage_map(offsets, result.layout), result.layout,
                           out / "runs" / f"{label}_seed{final.seed}" / "coverage.csv")

    agg = out / "aggregates"
    agg.mkdir(exist_ok=True)
    header = ["tx_power_dbm"] + result.labels()
    cols = [mean_ccdf(result, label) for label in result.labels()]
    _write_csv(agg / "ul_tx_power_ccdf.csv", header,
               [[float(x)] + [float(c[i]) for c in cols] for i, x in enumerate(CCDF_GRID_DBM)])
    _write_csv(agg / "sweep_summary.csv", ["label", "cell_group", "metric", "mean", "std"],
               sweep_rows(result))
    _write_csv(agg / "exposure_summary.csv",
               ["label", "component", "cell_group", "mean_w_per_kg", "std_w_per_kg",
                "gain_percent", "gain_std"], exposure_rows(result))
    (out / "summary.txt").write_text(summary_text(result), encoding="utf-8")
    return write_manifest(out)


def write_manifest(out_dir):
    out = Path(out_dir)
    files = sorted(p for p in out.rglob("*") if p.is_file() and p.name != "manifest.json")
    entries = {p.relative_to(out).as_posix(): hashlib.sha256(p.read_bytes()).hexdigest()
               for p in files}
    digest = hashlib.sha256(json.dumps(entries, sort_keys=True).encode()).hexdigest()
    manifest = {"files": entries, "digest": digest}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                       encoding="utf-8")
    return manifest


def verify_manifest(out_dir):
    """Re-hash the files listed in ``manifest.json``; returns ``(manifest, mismatches)``."""
    out = Path(out_dir)
    manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
    bad = []
    for rel, digest in sorted(manifest["files"].items()):
        path = out / rel
        if not path.is_file() or hashlib.sha256(path.read_bytes()).hexdigest() != digest:
            bad.append(rel)
    return manifest, bad


def with_overrides(scenario, seeds=None, horizon_s=None, out_dir=None, mode=None):
    cfg = copy.deepcopy(scenario)
    if seeds is not None:
        cfg.experiment.seeds = list(seeds)
    if horizon_s is not None:
        cfg.experiment.horizon_s = float(horizon_s)
    if out_dir is not None:
        cfg.experiment.out_dir = str(out_dir)
    if mode is not None:
        cfg.experiment.mode = mode
    return cfg.validate()
