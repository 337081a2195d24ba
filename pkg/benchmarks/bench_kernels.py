"""Compare the numba and numpy kernel paths on simulator-sized inputs.

Run from the repository root::

    python3 benchmarks/bench_kernels.py [--repeat 20]

An end-to-end timing of a short desk-scale simulation under each backend
is printed as well (each in a fresh interpreter, since the backend is
chosen at import time).
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from emfson import kernels

SIM_SNIPPET = """
import time
from emfson.config import preset
from emfson.netmodel import build_layout, PowerOffsetVector
from emfson.flowsim import run
cfg = preset("desk")
lay = build_layout(cfg.deployment)
off = PowerOffsetVector.uniform(lay, 6.0)
run(cfg, lay, off, horizon_s=30.0, seed=0)  # warm caches and JIT
t = time.perf_counter()
run(cfg, lay, off, horizon_s={horizon}, seed=1)
print(time.perf_counter() - t)
"""


def cases(rng):
    n_pix, n_cells = 20000, 69
    gain_db = rng.normal(-100, 15, size=(n_pix, n_cells))
    bias = rng.normal(40, 5, size=n_cells)
    n_flows, n_prb = 200, 50
    serving = rng.integers(0, n_cells, size=n_flows)
    start, size = kernels.np_round_robin(serving, n_cells, n_prb, 0)
    k = np.arange(n_prb)
    mask = (k >= start[:, None]) & (k < (start + size)[:, None])
    prb_power = np.ascontiguousarray(mask * rng.uniform(1e-3, 0.2, size=(n_flows, 1)))
    gain = np.ascontiguousarray(10 ** (rng.normal(-110, 15, size=(n_flows, n_cells)) / 10))
    rx = gain * 0.8
    tx_w = (rng.random(n_cells) < 0.7).astype(float)
    table = np.linspace(0.0, 6.0, 10001)
    sinr = 10 ** (rng.uniform(-30, 50, size=(n_flows, n_prb)) / 10)
    noise = 1e-15
    return {
        "best_server": (kernels.nb_best_server, kernels.np_best_server, (gain_db, bias)),
        "round_robin": (kernels.nb_round_robin, kernels.np_round_robin,
                        (serving, n_cells, n_prb, 3)),
        "ul_sinr": (kernels.nb_ul_sinr, kernels.np_ul_sinr, (prb_power, gain, serving, noise)),
        "dl_sinr": (kernels.nb_dl_sinr, kernels.np_dl_sinr, (rx, tx_w, serving, noise)),
        "efficiency_lookup": (kernels.nb_efficiency_lookup, kernels.np_efficiency_lookup,
                              (sinr, -40.0, 0.01, table)),
    }


def bench_kernels(repeat):
    rng = np.random.default_rng(0)
    print(f"{'kernel':<20}{'numba [ms]':>12}{'numpy [ms]':>12}{'speedup':>10}")
    for name, (nb, npf, args) in cases(rng).items():
        nb(*args)  # compile
        t_nb = min(timeit.repeat(lambda: nb(*args), number=1, repeat=repeat)) * 1e3
        t_np = min(timeit.repeat(lambda: npf(*args), number=1, repeat=repeat)) * 1e3
        print(f"{name:<20}{t_nb:>12.3f}{t_np:>12.3f}{t_np / t_nb:>10.1f}")


def bench_simulation(horizon):
    print(f"\ndesk-scale simulation, {horizon:g} s horizon")
    for backend, flag in (("numba", "0"), ("numpy", "1")):
        env = dict(os.environ, EMFSON_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", SIM_SNIPPET.format(horizon=horizon)],
                             env=env, capture_output=True, text=True, check=True)
        print(f"  {backend:<6} {float(out.stdout.strip()):8.2f} s")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--horizon", type=float, default=600.0)
    ap.add_argument("--skip-sim", action="store_true")
    args = ap.parse_args()
    print(f"active backend: {kernels.BACKEND}")
    bench_kernels(args.repeat)
    if not args.skip_sim:
        bench_simulation(args.horizon)


if __name__ == "__main__":
    main()
