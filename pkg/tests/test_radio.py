import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from emfson.errors import ContractViolation, DomainError
from emfson.radio import (EfficiencyTable, LinkAbstraction, NoFading, PowerControlParams,
                          RayleighFading, ResourceGrid, SinrSample, dl_sinr, expected_rate,
                          fading_model, noise_per_prb_w, round_robin_counts, spectral_efficiency,
                          ul_prb_power_dbm, ul_sinr, ul_tx_power_dbm)

GRID = ResourceGrid()
N0 = -174.0


def test_power_control_examples():
    p = PowerControlParams(p_max=23.0, p0=-58.0, alpha=0.8)
    assert ul_tx_power_dbm(p, 50, 100.0) == 23.0
    assert ul_tx_power_dbm(p, 1, 60.0) == pytest.approx(-10.0, abs=1e-12)
    flat = PowerControlParams(p_max=23.0, p0=-58.0, alpha=0.0)
    assert ul_tx_power_dbm(flat, 10, 60.0) == ul_tx_power_dbm(flat, 10, 120.0)


def test_power_control_errors():
    with pytest.raises(ContractViolation):
        ul_tx_power_dbm(PowerControlParams(), 0, 100.0)
    with pytest.raises(DomainError):
        PowerControlParams(alpha=1.2)
    with pytest.raises(DomainError):
        PowerControlParams(p_max=-70.0, p0=-58.0)


@given(st.integers(1, 50), st.integers(1, 50), st.floats(0.0, 160.0), st.floats(0.0, 160.0),
       st.floats(0.0, 1.0))
def test_power_control_monotone_and_capped(m1, m2, pl1, pl2, alpha):
    p = PowerControlParams(alpha=alpha)
    (ma, mb), (pa, pb) = sorted((m1, m2)), sorted((pl1, pl2))
    assert ul_tx_power_dbm(p, ma, pa) <= ul_tx_power_dbm(p, mb, pa) + 1e-12
    assert ul_tx_power_dbm(p, ma, pa) <= ul_tx_power_dbm(p, ma, pb) + 1e-12
    assert ul_tx_power_dbm(p, mb, pb) <= p.p_max


def test_prb_power_splits_total():
    p = PowerControlParams()
    total = ul_tx_power_dbm(p, 10, 90.0)
    assert ul_prb_power_dbm(p, 10, 90.0) == pytest.approx(total - 10.0)


@given(st.integers(1, 200), st.integers(1, 50))
def test_round_robin_share(n_flows, n_prb):
    counts = round_robin_counts(n_prb, n_flows)
    assert counts.sum() == n_prb
    assert set(np.unique(counts)) <= {n_prb // n_flows, -(-n_prb // n_flows)}


def test_lone_user_gets_all_prbs():
    grid = ResourceGrid()
    alloc = grid.allocate_round_robin(0, [7])
    assert list(alloc[7]) == list(range(50))
    alloc = grid.allocate_round_robin(1, [1, 2, 3])
    sets = [set(v) for v in alloc.values()]
    assert set().union(*sets) == set(range(50))
    assert sum(len(s) for s in sets) == 50


def test_mute_pattern():
    g = ResourceGrid.with_mute_ratio(50, 180e3, 0.125)
    assert g.mute_ratio == 0.125
    assert [g.macro_muted(t) for t in range(9)] == [True] + [False] * 7 + [True]


def test_ul_sinr_noise_floor():
    noise = noise_per_prb_w(N0, GRID.w_prb_hz)
    s = ul_sinr(noise, 1.0, [], N0, GRID)
    assert s.value_linear == 1.0 and s.direction == "UL"


def test_ul_sinr_symmetric_interferer():
    s = ul_sinr(1e-3, 1e-6, [(1, 1e-3, 1e-6)], -250.0, GRID)
    assert s.value_linear == pytest.approx(1.0, abs=1e-6)


def test_ul_sinr_random_instance():
    rng = np.random.default_rng(5)
    p, g = rng.uniform(1e-4, 0.2), 10 ** rng.uniform(-13, -9)
    inter = [(i, rng.uniform(1e-4, 0.2), 10 ** rng.uniform(-15, -10)) for i in range(5)]
    noise = 10 ** ((N0 - 30) / 10) * 180e3
    total = noise
    for _, pi, gi in inter:
        total += pi * gi
    assert ul_sinr(p, g, inter, N0, GRID).value_linear == pytest.approx(p * g / total, rel=1e-12)


def test_dl_sinr_single_cell():
    s = dl_sinr(0, [10.0], [-100.0], [False], N0, GRID)
    rx = 10 ** ((10.0 - 100.0 - 30) / 10)
    assert s.value_linear == pytest.approx(rx / noise_per_prb_w(N0, 180e3), rel=1e-12)


def test_dl_sinr_three_cells():
    powers, gains = [29.0, 13.0, 29.0], [-105.0, -92.0, -118.0]
    s = dl_sinr(1, powers, gains, [False, False, False], N0, GRID)
    rx = [10 ** ((p + g - 30) / 10) for p, g in zip(powers, gains)]
    expected = rx[1] / (noise_per_prb_w(N0, 180e3) + rx[0] + rx[2])
    assert s.value_linear == pytest.approx(expected, rel=1e-12)


def test_dl_muting_helps_sc_edge_user():
    powers, gains = [29.0, 13.0], [-100.0, -100.0]
    on = dl_sinr(1, powers, gains, [False, False], N0, GRID).value_linear
    muted = dl_sinr(1, powers, gains, [True, False], N0, GRID).value_linear
    assert muted > on


def test_dl_sinr_serving_muted_is_bug():
    with pytest.raises(ContractViolation):
        dl_sinr(0, [29.0, 13.0], [-100.0, -90.0], [True, False], N0, GRID)


@settings(max_examples=30)
@given(st.floats(1e-3, 1e3), st.lists(st.floats(1e-3, 1.0), min_size=1, max_size=5))
def test_sinr_homogeneous(c, powers):
    inter = [(i, p, 1e-10) for i, p in enumerate(powers)]
    base = ul_sinr(0.1, 1e-9, inter, -400.0, GRID).value_linear
    scaled = ul_sinr(0.1 * c, 1e-9, [(i, p * c, g) for i, p, g in inter], -400.0, GRID)
    assert scaled.value_linear == pytest.approx(base, rel=1e-9)
    dbm = [20.0] + [10 * math.log10(p * 1e3) for p in powers]
    gains = [-90.0] + [-100.0] * len(powers)
    shift = 10 * math.log10(c)
    a = dl_sinr(0, dbm, gains, [False] * len(dbm), -400.0, GRID).value_linear
    b = dl_sinr(0, [d + shift for d in dbm], gains, [False] * len(dbm), -400.0, GRID).value_linear
    assert b == pytest.approx(a, rel=1e-9)


def test_sinr_sample_invariants():
    with pytest.raises(DomainError):
        SinrSample(-1.0, "UL")
    with pytest.raises(DomainError):
        SinrSample(float("inf"), "DL")
    assert SinrSample(0.0, "UL").value_db == -math.inf


def test_spectral_efficiency_examples():
    assert spectral_efficiency(0.0) == 0.0
    assert spectral_efficiency(1.0, beta=1.0, eta_max=math.inf) == 1.0
    assert spectral_efficiency(1e6) == 6.0
    with pytest.raises(DomainError):
        spectral_efficiency(-0.1)


def test_expected_rate_no_fading():
    link = LinkAbstraction(beta=1.0, eta_max=math.inf)
    assert expected_rate([1.0], 180e3, NoFading(), link) == pytest.approx(180e3)
    with pytest.raises(ContractViolation):
        expected_rate([], 180e3, NoFading())


def test_expected_rate_fading_limits():
    fad = RayleighFading()
    assert expected_rate([1e-12], 180e3, fad) < 1e-3
    assert expected_rate([0.0], 180e3, fad) == 0.0


def test_rayleigh_unit_sinr_monte_carlo():
    # E[log2(1+xi)] for xi ~ Exp(1), quadrature against a 1e6-draw sample
    link = LinkAbstraction(beta=1.0, eta_max=math.inf)
    quad = expected_rate([1.0], 180e3, RayleighFading(), link)
    xi = np.random.default_rng(42).exponential(size=1_000_000)
    mc = 180e3 * np.log2(1.0 + xi).mean()
    assert quad == pytest.approx(mc, rel=5e-3)
    # closed form: e * E1(1) / ln 2
    from scipy.special import exp1
    assert quad == pytest.approx(180e3 * math.e * exp1(1.0) / math.log(2), rel=1e-9)


@settings(max_examples=30)
@given(st.lists(st.floats(0.0, 1e4), min_size=1, max_size=6),
       st.lists(st.floats(0.0, 1e4), min_size=1, max_size=6), st.floats(0.0, 10.0))
def test_expected_rate_monotone_and_additive(a, b, bump):
    fad = RayleighFading()
    ra, rb = expected_rate(a, 180e3, fad), expected_rate(b, 180e3, fad)
    assert expected_rate(a + b, 180e3, fad) == pytest.approx(ra + rb, rel=1e-12, abs=1e-9)
    up = list(a)
    up[0] += bump
    assert expected_rate(up, 180e3, fad) >= ra - 1e-9


def test_fading_model_factory():
    assert isinstance(fading_model("none"), NoFading)
    assert isinstance(fading_model("rayleigh", 16), RayleighFading)
    with pytest.raises(DomainError):
        fading_model("nakagami")


def test_efficiency_table_matches_direct():
    fad = RayleighFading()
    table = EfficiencyTable(fad)
    x = 10 ** (np.random.default_rng(3).uniform(-3.5, 5.5, size=200))
    direct = fad.average(LinkAbstraction(), x)
    assert np.allclose(table(x), direct, rtol=2e-4, atol=1e-9)
    assert table(np.array([0.0]))[0] == 0.0
    assert table(np.array([1e9]))[0] == pytest.approx(6.0, rel=1e-6)
