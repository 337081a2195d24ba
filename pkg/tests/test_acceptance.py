"""End-to-end acceptance checks, one per criterion.

Each test records a ``CRITERION n: PASS|FAIL ...`` line (printed in the
pytest terminal summary) and then asserts.  Run standalone with
``python3 tests/test_acceptance.py``.
"""

import copy
import math
import time

import numpy as np
import pytest

from emfson import harness
from emfson.cli import main as cli_main
from emfson.config import preset
from emfson.flowsim import run
from emfson.flowsim.analytic import AnalyticModel, mean_ftt
from emfson.kernels import dl_sinr_vector, round_robin, ul_sinr_matrix
from emfson.netmodel import PowerOffsetVector, build_layout
from emfson.radio import (LinkAbstraction, RayleighFading, ResourceGrid, dl_sinr, noise_per_prb_w,
                          ul_sinr)
from emfson.son import SonState, drift_vector, hull_oracle, iterate

from helpers import PEAK_RATE, isolated_cell_config, measured_ftts

RESULTS = []
SEEDS = [1, 2, 3, 4, 5]


def record(n, ok, detail, t0):
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'}  {detail}  [{time.perf_counter() - t0:.1f} s]"
    RESULTS.append(line)
    print(line)
    assert ok, line


# ---------------------------------------------------------------------------
# shared campaigns (desk preset, 5 seeds)


@pytest.fixture(scope="module")
def desk():
    cfg = preset("desk")
    return cfg, build_layout(cfg.deployment)


@pytest.fixture(scope="module")
def son_campaign(desk):
    cfg, layout = desk
    cfg = harness.with_overrides(cfg, seeds=SEEDS, mode="son")
    return harness.run_son_campaign(cfg, layout=layout)


@pytest.fixture(scope="module")
def sweep_campaign(desk):
    cfg, layout = desk
    cfg = harness.with_overrides(cfg, seeds=SEEDS, mode="sweep")
    return harness.run_baseline_sweep(cfg, layout=layout)


# ---------------------------------------------------------------------------


def test_criterion_1_mg1ps_transfer_time():
    t0 = time.perf_counter()
    rho = 0.5
    lam = rho * PEAK_RATE / 15e6
    cfg = isolated_cell_config(lam, 9000.0)
    layout = build_layout(cfg.deployment)
    trace = run(cfg, layout, PowerOffsetVector.uniform(layout, 0.0), seed=1)
    ftt = measured_ftts(trace)
    expected = mean_ftt(PEAK_RATE, 15e6, rho)
    err = ftt.mean() / expected - 1.0
    ok = ftt.size >= 10_000 and abs(err) <= 0.05
    record(1, ok, f"mean FTT {ftt.mean():.4f} s vs {expected:.4f} s ({err:+.2%}) over {ftt.size} flows",
           t0)


def _ul_oracle(prb_power, gain, serving, noise, f, k):
    s = serving[f]
    interference = 0.0
    for o in range(len(serving)):
        if serving[o] != s:
            interference += prb_power[o][k] * gain[o][s]
    return prb_power[f][k] * gain[f][s] / (noise + interference)


def _dl_oracle(p_dbm, g_db, active, serving, noise):
    rx = [10.0 ** ((p + g - 30.0) / 10.0) for p, g in zip(p_dbm, g_db)]
    interference = 0.0
    for c in range(len(rx)):
        if c != serving and active[c]:
            interference += rx[c]
    return rx[serving] / (noise + interference)


def test_criterion_2_sinr_oracles():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    grid = ResourceGrid()
    n0 = -174.0
    noise = noise_per_prb_w(n0, grid.w_prb_hz)
    worst = 0.0
    for _ in range(100):
        # uplink: a Round Robin snapshot over several cells
        n_cells = int(rng.integers(2, 8))
        n_flows = int(rng.integers(2, 20))
        serving = rng.integers(0, n_cells, size=n_flows).astype(np.int64)
        start, size = round_robin(serving, n_cells, grid.n_prb, 0)
        power = np.zeros((n_flows, grid.n_prb))
        for f in range(n_flows):
            power[f, start[f]:start[f] + size[f]] = rng.uniform(1e-4, 0.2) / max(size[f], 1)
        gain = 10.0 ** rng.uniform(-15, -8, size=(n_flows, n_cells))
        got = ul_sinr_matrix(np.ascontiguousarray(power), np.ascontiguousarray(gain), serving, noise)
        for f in range(n_flows):
            for k in range(start[f], start[f] + size[f]):
                ref = _ul_oracle(power.tolist(), gain.tolist(), serving.tolist(), noise, f, k)
                worst = max(worst, abs(got[f, k] / ref - 1.0))
        f, k = 0, int(start[0])
        if size[0]:
            inter = [(o, power[o, k], gain[o, serving[0]]) for o in range(n_flows)
                     if serving[o] != serving[0]]
            one = ul_sinr(power[0, k], gain[0, serving[0]], inter, n0, grid).value_linear
            worst = max(worst, abs(one / _ul_oracle(power.tolist(), gain.tolist(),
                                                    serving.tolist(), noise, 0, k) - 1.0))

        # downlink: per-PRB powers of every cell, some cells silent
        n_cells = int(rng.integers(2, 10))
        p_dbm = np.where(rng.random(n_cells) < 0.5, 46.0, 30.0) - 10 * math.log10(grid.n_prb)
        g_db = rng.uniform(-140, -70, size=n_cells)
        active = rng.random(n_cells) < 0.7
        s = int(rng.integers(n_cells))
        active[s] = True
        ref = _dl_oracle(p_dbm.tolist(), g_db.tolist(), active.tolist(), s, noise)
        one = dl_sinr(s, np.where(active, p_dbm, -np.inf), g_db, np.zeros(n_cells, bool), n0,
                      grid).value_linear
        rx = 10.0 ** ((p_dbm + g_db - 30.0) / 10.0)
        vec = dl_sinr_vector(rx[None, :], active.astype(float), np.array([s]), noise)[0]
        worst = max(worst, abs(one / ref - 1.0), abs(vec / ref - 1.0))
    record(2, worst <= 1e-12, f"max relative deviation {worst:.2e} over 100 UL + 100 DL instances",
           t0)


def test_criterion_3_rate_quadrature():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    sinr = 10.0 ** rng.uniform(-2, 2, size=20)
    link = LinkAbstraction()
    quad = RayleighFading(32).average(link, sinr)
    xi = rng.exponential(size=1_000_000)
    mc = np.array([link(x * xi).mean() for x in sinr])
    err = np.max(np.abs(quad / mc - 1.0))
    record(3, err <= 0.01, f"max relative gap {err:.3%} on 20 SINRs in [0.01, 100]", t0)


def _jump_points(model, layout, rng, per_sc=1):
    """Bisect one small cell's CIO onto jumps of its outage (others held fixed)."""
    points = []
    sc_ids = np.flatnonzero(layout.is_small_cell)
    for i, sc in enumerate(sc_ids):
        base = rng.uniform(4.0, 10.0, size=sc_ids.size)
        found = 0
        grid = np.arange(-2.0, 12.0 + 1e-9, 0.25)
        vals = []
        for c in grid:
            cio = base.copy()
            cio[i] = c
            off = PowerOffsetVector.uniform(layout, 0.0).with_sc_cio(cio)
            vals.append(model.kpis(off)[1][sc])
        for j in range(len(grid) - 1):
            # an empty region (NaN outage) on either side is not a branch switch
            if (found >= per_sc or np.isnan(vals[j]) or np.isnan(vals[j + 1])
                    or vals[j] == vals[j + 1]):
                continue
            lo, hi = grid[j], grid[j + 1]
            v_lo = vals[j]
            while hi - lo > 1e-9:
                mid = 0.5 * (lo + hi)
                cio = base.copy()
                cio[i] = mid
                off = PowerOffsetVector.uniform(layout, 0.0).with_sc_cio(cio)
                v = model.kpis(off)[1][sc]
                if v == v_lo:
                    lo = mid
                else:
                    hi = mid
            sides = []
            for c in (lo, hi):
                cio = base.copy()
                cio[i] = c
                off = PowerOffsetVector.uniform(layout, 0.0).with_sc_cio(cio)
                sides.append((model.kpis(off)[1][sc], off))
            (th_a, off_a), (th_b, off_b) = sides
            theta, off = (th_a, off_a) if th_a > th_b else (th_b, off_b)
            if 0.0 < theta <= 1.0 and not np.isnan(min(th_a, th_b)):
                points.append((i, off, float(theta)))
                found += 1
    return points


def test_criterion_4_hull_membership(desk, son_campaign):
    t0 = time.perf_counter()
    cfg, layout = desk
    model = AnalyticModel(cfg, layout)
    parent = layout.parent_macro
    rng = np.random.default_rng(4)
    points = _jump_points(model, layout, rng)
    inside = spans = 0
    for i, off, theta in points:
        lo, hi = hull_oracle(off, model.kpis, parent, theta, n_samples=32, seed=len(RESULTS))
        ul, out = model.kpis(off)
        h, _ = drift_vector(ul, out, off.sc_indices, parent, theta)
        inside += bool(lo[i] - 1e-12 <= h[i] <= hi[i] + 1e-12)
        spans += bool(hi[i] - lo[i] > 0)

    # sampling noise of the drift: window-to-window spread at a fixed offset vector
    sc = np.flatnonzero(layout.is_small_cell)
    spread = []
    for r in son_campaign.runs[son_campaign.baseline_label]:
        d = np.array([w.ul_load[parent[sc]] - w.ul_load[sc] for w in r.trace.measured_windows()])
        spread.append(np.nanstd(d, axis=0))
    noise = float(np.nanmedian(spread))
    widths = []
    for _ in range(10):
        off = PowerOffsetVector.uniform(layout, 0.0).with_sc_cio(rng.uniform(-2, 12, sc.size))
        assert np.nanmax(model.kpis(off)[1][sc]) < 1.0  # theta_bar = 1 keeps every SC balancing
        lo, hi = hull_oracle(off, model.kpis, parent, 1.0, n_samples=32)
        widths.append(float(np.nanmax(hi - lo)))
    ok = (len(points) >= 10 and inside == len(points) and spans == len(points)
          and max(widths) < noise)
    record(4, ok, f"h in hull at {inside}/{len(points)} jump points ({spans} spanning both "
                  f"branches); continuity width max {max(widths):.2e} vs sampling noise "
                  f"{noise:.2e}", t0)


def _violating_stretches(v):
    runs, cur = [], []
    for t, x in enumerate(v):
        if x > 0:
            cur.append(t)
        elif cur:
            runs.append(cur)
            cur = []
    if cur:
        runs.append(cur)
    return runs


def test_criterion_5_lyapunov_descent(desk):
    t0 = time.perf_counter()
    cfg, layout = desk
    model = AnalyticModel(cfg, layout)
    parts, ok = [], True
    for eps in (2.0, 1.0):
        son_cfg = copy.deepcopy(cfg.son)
        son_cfg.epsilon = eps
        state = iterate(SonState.initial(layout, son_cfg, cio_db=12.0), model.kpis, 150)
        v = np.array([h.lyapunov for h in state.history])
        steps = np.flatnonzero(v[:-1] > 0)
        frac = float(np.mean(v[steps + 1] <= v[steps] + 1e-12)) if steps.size else 1.0
        slopes = []
        for stretch in _violating_stretches(v):
            for a in range(0, len(stretch) - 49, 50):
                seg = stretch[a:a + 50]
                slopes.append(np.polyfit(seg, v[seg], 1)[0])
        worst = max(slopes) if slopes else float("nan")
        ok &= steps.size > 0 and frac >= 0.9 and all(s < 0 for s in slopes)
        parts.append(f"eps={eps:g}: non-increasing {frac:.0%} of {steps.size} violating steps, "
                     f"max 50-step slope {worst:+.3g}")
    record(5, ok, "; ".join(parts), t0)


def test_criterion_6_constraint_enforcement(son_campaign):
    t0 = time.perf_counter()
    theta_bar = son_campaign.scenario.son.theta_bar
    sc = np.flatnonzero(son_campaign.layout.is_small_cell)
    per_seed, missing = [], []
    for r in son_campaign.runs["son"]:
        if r.converged_at is None:
            missing.append(r.seed)
            continue
        wins = [w for w in r.trace.measured_windows() if w.index > r.converged_at]
        out = np.array([w.outage[sc] for w in wins])
        per_seed.append(np.nanmean(np.where(np.isnan(out), np.nan, out), axis=0)
                        if wins else np.full(sc.size, np.nan))
    mean = np.nanmean(per_seed, axis=0) if per_seed else np.full(sc.size, np.nan)
    worst = float(np.nanmax(mean)) if np.any(~np.isnan(mean)) else float("nan")
    conv = [r.converged_at for r in son_campaign.runs["son"]]
    ok = not missing and worst <= theta_bar + 0.015
    record(6, ok, f"converged at iterations {conv}; worst per-SC mean outage after convergence "
                  f"{worst:.4f} (limit {theta_bar + 0.015:.3f})", t0)


def test_criterion_7_sweep_trends(sweep_campaign):
    t0 = time.perf_counter()
    res = sweep_campaign
    labels = [f"cio_{c:g}" for c in res.scenario.experiment.cio_values]
    cells = harness.group_cells(res.layout)
    txp = [res.mean_std(lb, lambda r: float(np.mean(r.ul_tx_power_w)))[0] for lb in labels]
    ccdfs = [harness.mean_ccdf(res, lb) for lb in labels]
    dominated = all(np.all(ccdfs[0] >= c) for c in ccdfs[1:])
    a = dominated and all(txp[0] > t for t in txp[1:])
    macro = [res.mean_std(lb, lambda r: r.group_mean(r.ul_load, cells["macro"]))[0]
             for lb in labels]
    b = all(x > y for x, y in zip(macro, macro[1:]))
    sc_out = [res.mean_std(lb, lambda r: r.group_mean(r.outage, cells["sc"]))[0] for lb in labels]
    c = sc_out[-1] > sc_out[0]
    gap = max(float(np.max(c_ - ccdfs[0])) for c_ in ccdfs[1:])
    detail = (f"(a) mean Tx power {', '.join(f'{t * 1e3:.3f}' for t in txp)} mW, "
              f"CCDF dominance {'yes' if dominated else f'no (max excess {gap:.4f})'}; "
              f"(b) macro UL load {', '.join(f'{x:.4f}' for x in macro)}; "
              f"(c) SC outage {sc_out[0]:.4f} -> {sc_out[-1]:.4f}")
    record(7, a and b and c, detail, t0)


def test_criterion_8_exposure_gains(son_campaign):
    t0 = time.perf_counter()
    g_all = son_campaign.mean_gain("son", "total", "all")
    g_ul_macro = son_campaign.mean_gain("son", "ul", "macro")
    g_dl = son_campaign.mean_gain("son", "dl", "all")
    ok = g_all[0] >= 10.0 and g_ul_macro[0] >= 20.0 and g_dl[0] <= 0.0
    text = harness.summary_text(son_campaign)
    band = [ln.strip() for ln in text.splitlines() if "reference bands" in ln]
    record(8, ok, f"combined {g_all[0]:+.1f}% (std {g_all[1]:.1f}), macro UL {g_ul_macro[0]:+.1f}% "
                  f"(std {g_ul_macro[1]:.1f}), DL {g_dl[0]:+.1f}% (std {g_dl[1]:.1f}); "
                  f"{band[-1] if band else ''}", t0)


def test_criterion_9_determinism_audit(tmp_path, capsys):
    t0 = time.perf_counter()
    digests = []
    for name in ("a", "b"):
        code = cli_main(["son", "--preset", "desk", "--seeds", "1,2,3", "--out",
                         str(tmp_path / name)])
        assert code == 0
        out = capsys.readouterr().out
        digests.append(out.strip().splitlines()[-1].split()[-1])
    record(9, digests[0] == digests[1],
           f"manifest digests {digests[0][:16]} / {digests[1][:16]}", t0)


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q"]))
