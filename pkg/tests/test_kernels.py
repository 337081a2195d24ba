"""The numba and numpy kernel paths must agree."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emfson import kernels


@settings(max_examples=60, deadline=None)
@given(n_pix=st.integers(1, 40), n_cells=st.integers(1, 12), seed=st.integers(0, 2**31),
       ties=st.booleans())
def test_best_server_parity(n_pix, n_cells, seed, ties):
    rng = np.random.default_rng(seed)
    g = rng.normal(-100, 10, size=(n_pix, n_cells))
    if ties:
        g = np.round(g / 5) * 5  # plenty of exact ties
    bias = np.round(rng.normal(30, 5, size=n_cells))
    a = kernels.nb_best_server(np.ascontiguousarray(g), bias)
    b = kernels.np_best_server(g, bias)
    np.testing.assert_array_equal(a, b)


def test_best_server_tie_goes_to_lowest_id():
    g = np.zeros((1, 4))
    bias = np.array([0.0, 1.0, 1.0, 1.0])
    assert kernels.nb_best_server(g, bias)[0] == 1
    assert kernels.np_best_server(g, bias)[0] == 1


@settings(max_examples=60, deadline=None)
@given(serving=st.lists(st.integers(0, 4), min_size=0, max_size=120),
       n_prb=st.integers(1, 60), rotation=st.integers(0, 500))
def test_round_robin_parity_and_partition(serving, n_prb, rotation):
    s = np.array(serving, dtype=np.int64)
    a = kernels.nb_round_robin(s, 5, n_prb, rotation)
    b = kernels.np_round_robin(s, 5, n_prb, rotation)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])
    start, size = a
    for c in range(5):
        idx = np.flatnonzero(s == c)
        if idx.size == 0:
            continue
        # chunks are disjoint, contiguous and cover all PRBs of the cell
        used = np.zeros(n_prb, dtype=int)
        for i in idx:
            used[start[i]:start[i] + size[i]] += 1
        assert used.max() == 1 and used.sum() == n_prb
        served = size[idx][size[idx] > 0]
        assert served.max() - served.min() <= 1


@settings(max_examples=40, deadline=None)
@given(n_flows=st.integers(1, 30), n_cells=st.integers(1, 8), n_prb=st.integers(1, 12),
       seed=st.integers(0, 2**31))
def test_ul_sinr_parity(n_flows, n_cells, n_prb, seed):
    rng = np.random.default_rng(seed)
    serving = rng.integers(0, n_cells, size=n_flows)
    p = rng.uniform(0, 0.2, size=(n_flows, n_prb)) * (rng.random((n_flows, n_prb)) < 0.5)
    g = 10 ** (rng.normal(-110, 10, size=(n_flows, n_cells)) / 10)
    a = kernels.nb_ul_sinr(np.ascontiguousarray(p), np.ascontiguousarray(g), serving, 1e-15)
    b = kernels.np_ul_sinr(p, g, serving, 1e-15)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=0)


@settings(max_examples=40, deadline=None)
@given(n_flows=st.integers(1, 30), n_cells=st.integers(1, 8), seed=st.integers(0, 2**31))
def test_dl_sinr_parity(n_flows, n_cells, seed):
    rng = np.random.default_rng(seed)
    serving = rng.integers(0, n_cells, size=n_flows)
    rx = 10 ** (rng.normal(-100, 10, size=(n_flows, n_cells)) / 10)
    w = (rng.random(n_cells) < 0.6).astype(float)
    a = kernels.nb_dl_sinr(np.ascontiguousarray(rx), w, serving, 1e-15)
    b = kernels.np_dl_sinr(rx, w, serving, 1e-15)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=0)


def test_efficiency_lookup_parity_and_edges():
    table = np.linspace(0.0, 6.0, 1001)
    x = np.concatenate([[0.0, 1e-9, 1e-4], 10 ** (np.linspace(-4, 6, 500) / 10), [1e12]])
    a = kernels.nb_efficiency_lookup(x, -40.0, 0.1, table)
    b = kernels.np_efficiency_lookup(x, -40.0, 0.1, table)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-15)
    assert a[0] == 0.0
    assert a[-1] == table[-1]  # clamped above the grid
    assert np.all(np.diff(a) >= -1e-15)


def test_backend_flag_reflects_selection():
    assert kernels.BACKEND in ("numba", "numpy")
    expected = kernels.nb_best_server if kernels.BACKEND == "numba" else kernels.np_best_server
    assert kernels.best_server_index is expected


@pytest.mark.parametrize("flag, backend", [("1", "numpy"), ("0", "numba")])
def test_env_flag_switches_backend(flag, backend):
    import subprocess
    import sys

    out = subprocess.run([sys.executable, "-c", "import emfson.kernels as k; print(k.BACKEND)"],
                         env={"EMFSON_DISABLE_NUMBA": flag, "PATH": ""}, capture_output=True,
                         text=True, check=True)
    assert out.stdout.strip() == backend
