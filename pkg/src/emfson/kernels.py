"""Hot numeric kernels used by the flow simulator and the coverage maps.

Every kernel exists twice: a numba ``@njit`` loop version (``nb_*``) and a
vectorized numpy version (``np_*``).  The module-level public names are bound
to one or the other according to :data:`emfson._accel.USE_NUMBA`.  Both paths
must agree to floating-point rounding; ``tests/test_kernels.py`` checks this.

Conventions: ``gain`` arrays are linear power gains of shape
``(n_flows, n_cells)``, powers are in watts, ``serving`` holds the serving
cell index of every flow.
"""

import numpy as np

from ._accel import USE_NUMBA, njit

# ---------------------------------------------------------------------------
# best server


@njit
def nb_best_server(gain_db, bias_db):
    n_pix, n_cells = gain_db.shape
    out = np.empty(n_pix, dtype=np.int64)
    for p in range(n_pix):
        best = 0
        best_val = gain_db[p, 0] + bias_db[0]
        for c in range(1, n_cells):
            v = gain_db[p, c] + bias_db[c]
            if v > best_val:  # strict: ties keep the lowest cell id
                best_val = v
                best = c
        out[p] = best
    return out


def np_best_server(gain_db, bias_db):
    return np.argmax(gain_db + bias_db[None, :], axis=1).astype(np.int64)


# ---------------------------------------------------------------------------
# round robin PRB allocation


@njit
def nb_round_robin(serving, n_cells, n_prb, rotation):
    n = serving.shape[0]
    counts = np.zeros(n_cells, dtype=np.int64)
    rank = np.empty(n, dtype=np.int64)
    for i in range(n):
        rank[i] = counts[serving[i]]
        counts[serving[i]] += 1
    start = np.zeros(n, dtype=np.int64)
    size = np.zeros(n, dtype=np.int64)
    for i in range(n):
        m = counts[serving[i]]
        r = rank[i]
        if m > n_prb:
            r = (r + rotation) % m
        base = n_prb // m
        extra = n_prb % m
        if r < extra:
            size[i] = base + 1
            start[i] = r * (base + 1)
        else:
            size[i] = base
            start[i] = extra * (base + 1) + (r - extra) * base
    return start, size


def np_round_robin(serving, n_cells, n_prb, rotation):
    serving = np.asarray(serving, dtype=np.int64)
    n = serving.shape[0]
    if n == 0:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    order = np.argsort(serving, kind="stable")
    counts = np.bincount(serving, minlength=n_cells)
    first = np.concatenate(([0], np.cumsum(counts)[:-1]))
    rank = np.empty(n, dtype=np.int64)
    rank[order] = np.arange(n) - first[serving[order]]
    m = counts[serving]
    r = np.where(m > n_prb, (rank + rotation) % m, rank)
    base = n_prb // m
    extra = n_prb % m
    small = r < extra
    size = np.where(small, base + 1, base)
    start = np.where(small, r * (base + 1), extra * (base + 1) + (r - extra) * base)
    return start.astype(np.int64), size.astype(np.int64)


# ---------------------------------------------------------------------------
# uplink SINR per (flow, PRB)


@njit
def nb_ul_sinr(prb_power, gain, serving, noise_w):
    n_flows, n_prb = prb_power.shape
    n_cells = gain.shape[1]
    interf = np.zeros((n_prb, n_cells))
    for f in range(n_flows):
        s = serving[f]
        for k in range(n_prb):
            p = prb_power[f, k]
            if p > 0.0:
                for c in range(n_cells):
                    if c != s:
                        interf[k, c] += p * gain[f, c]
    out = np.zeros((n_flows, n_prb))
    for f in range(n_flows):
        s = serving[f]
        g = gain[f, s]
        for k in range(n_prb):
            p = prb_power[f, k]
            if p > 0.0:
                out[f, k] = p * g / (noise_w + interf[k, s])
    return out


def np_ul_sinr(prb_power, gain, serving, noise_w):
    n_flows = prb_power.shape[0]
    rows = np.arange(n_flows)
    foreign = gain.copy()
    foreign[rows, serving] = 0.0
    interf = prb_power.T @ foreign  # (n_prb, n_cells), own-cell terms excluded
    signal = prb_power * gain[rows, serving][:, None]
    return signal / (noise_w + interf[:, serving].T)


# ---------------------------------------------------------------------------
# downlink SINR per flow (uniform power over PRBs)


@njit
def nb_dl_sinr(rx_prb, tx_weight, serving, noise_w):
    n_flows, n_cells = rx_prb.shape
    out = np.empty(n_flows)
    for f in range(n_flows):
        s = serving[f]
        acc = 0.0
        for c in range(n_cells):
            if c != s:
                acc += tx_weight[c] * rx_prb[f, c]
        out[f] = rx_prb[f, s] / (noise_w + acc)
    return out


def np_dl_sinr(rx_prb, tx_weight, serving, noise_w):
    rows = np.arange(rx_prb.shape[0])
    weighted = rx_prb * tx_weight[None, :]
    weighted[rows, serving] = 0.0
    return rx_prb[rows, serving] / (noise_w + weighted.sum(axis=1))


# ---------------------------------------------------------------------------
# tabulated fading-averaged spectral efficiency


@njit
def nb_efficiency_lookup(sinr, db_min, db_step, table):
    flat = sinr.ravel()
    out = np.empty(flat.shape[0])
    n = table.shape[0]
    lin_min = 10.0 ** (db_min / 10.0)
    for i in range(flat.shape[0]):
        x = flat[i]
        if x <= 0.0:
            out[i] = 0.0
            continue
        pos = (10.0 * np.log10(x) - db_min) / db_step
        if pos <= 0.0:
            out[i] = table[0] * x / lin_min
        elif pos >= n - 1:
            out[i] = table[n - 1]
        else:
            j = int(pos)
            frac = pos - j
            out[i] = table[j] * (1.0 - frac) + table[j + 1] * frac
    return out.reshape(sinr.shape)


def np_efficiency_lookup(sinr, db_min, db_step, table):
    sinr = np.asarray(sinr, dtype=float)
    n = table.shape[0]
    lin_min = 10.0 ** (db_min / 10.0)
    with np.errstate(divide="ignore"):
        pos = (10.0 * np.log10(sinr) - db_min) / db_step
    grid = np.arange(n, dtype=float)
    out = np.interp(pos, grid, table)
    out = np.where(pos <= 0.0, table[0] * sinr / lin_min, out)
    return np.where(sinr > 0.0, out, 0.0)


# ---------------------------------------------------------------------------

if USE_NUMBA:
    best_server_index = nb_best_server
    round_robin = nb_round_robin
    ul_sinr_matrix = nb_ul_sinr
    dl_sinr_vector = nb_dl_sinr
    efficiency_lookup = nb_efficiency_lookup
else:
    best_server_index = np_best_server
    round_robin = np_round_robin
    ul_sinr_matrix = np_ul_sinr
    dl_sinr_vector = np_dl_sinr
    efficiency_lookup = np_efficiency_lookup

BACKEND = "numba" if USE_NUMBA else "numpy"
