import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import marcum_quad
from xlpol.channel import ChannelMatrix, assemble_channel
from xlpol.metrics import (DetectionConfig, MetricsReport, detection_threshold, effective_xpd_factor,
                           false_alarm_rate, marcum_q1, pd_analytic, pd_monte_carlo, required_snr,
                           roc_curve, ser_closed_form, ser_gain, ser_monte_carlo, ser_with_as,
                           sinr_post_selection, snr_improvement, spectral_efficiency)
from xlpol.scenario import ArrayConfig, PathConfig, ScenarioConfig
from xlpol.selection import power_profile, select_antennas


def _rand_channel(rng, n):
    return ChannelMatrix.from_blocks(rng.standard_normal((n, 2, 2)) + 1j * rng.standard_normal((n, 2, 2)))


# -- SINR ---------------------------------------------------------------------------

def test_sinr_infinite_without_leakage():
    rng = np.random.default_rng(0)
    hc = _rand_channel(rng, 4)
    hx = ChannelMatrix.from_blocks(np.zeros((4, 2, 2)))
    assert sinr_post_selection(np.ones(4, bool), hc, hx, (0.5, 0.0), 0.0) == math.inf
    assert sinr_post_selection(np.ones(4, bool), hc, hx, (0.5, 0.0), 1e-14) == math.inf


def test_sinr_symmetry_gives_one():
    rng = np.random.default_rng(1)
    hc = _rand_channel(rng, 5)
    assert sinr_post_selection(np.ones(5, bool), hc, hc, (0.7, 0.3), 0.0) == pytest.approx(1.0)


def test_sinr_matches_direct_norms():
    rng = np.random.default_rng(2)
    for _ in range(20):
        n = int(rng.integers(1, 9))
        hc, hx = _rand_channel(rng, n), _rand_channel(rng, n)
        mask = rng.random(n) < 0.6
        mask[0] = True
        delta, theta = float(rng.uniform(0, math.pi / 2)), float(rng.uniform(0, 2 * math.pi))
        nv = float(rng.uniform(0, 2))
        # selection matrix with one row per selected (antenna, pol)
        rows = [2 * i + p for i in range(n) if mask[i] for p in range(2)]
        s = np.eye(2 * n)[rows]
        e = np.array([math.sin(delta) * np.exp(1j * theta), math.cos(delta)])
        ref = np.linalg.norm(s @ hc.h @ e) ** 2 / (np.linalg.norm(s @ hx.h @ e) ** 2 + nv)
        assert sinr_post_selection(mask, hc, hx, (delta, theta), nv) == pytest.approx(ref, rel=1e-12)


def test_sinr_errors_and_branch():
    rng = np.random.default_rng(3)
    h = _rand_channel(rng, 3)
    with pytest.raises(ValueError):
        sinr_post_selection(np.zeros(3, bool), h, h, (0.1, 0.0), 1.0)
    with pytest.raises(ValueError):
        sinr_post_selection(np.ones(3, bool), h, h, (0.1, 0.0), 1.0, branch="x")
    hb = sinr_post_selection(np.ones(3, bool), h, h, (0.1, 0.0), 0.0, branch="h")
    assert hb == pytest.approx(1.0)


def test_spectral_efficiency():
    assert spectral_efficiency(1.0) == 1.0
    assert spectral_efficiency(0.0) == 0.0


# -- SER ----------------------------------------------------------------------------

def test_xpd_factor():
    assert effective_xpd_factor(0.0) == 1.0
    assert effective_xpd_factor(1.0) == 0.5
    with pytest.raises(ValueError):
        effective_xpd_factor(-0.1)


def test_ser_closed_form_examples():
    assert ser_closed_form(0.0) == 0.5
    assert ser_closed_form(math.inf) == 0.0
    assert ser_closed_form(1e12) < 1e-12
    assert ser_closed_form(1.0) == pytest.approx(0.5 * (1 - math.sqrt(0.5)))
    assert ser_closed_form(1.0) == pytest.approx(0.1464, abs=1e-4)
    with pytest.raises(ValueError):
        ser_closed_form(-1.0)


def test_ser_closed_form_strictly_decreasing():
    g = np.logspace(-3, 4, 200)
    assert np.all(np.diff(ser_closed_form(g)) < 0)


@given(st.floats(0, 1e4))
def test_ser_with_as_reduces_exactly(g):
    assert ser_with_as(g, 0.0) == ser_closed_form(g)


def test_ser_with_as_zero_snr():
    assert ser_with_as(0.0, 0.4) == 0.5


def test_ser_gain_identity():
    rng = np.random.default_rng(4)
    for _ in range(50):
        g, ga, chi = rng.exponential(10), rng.exponential(10), rng.uniform(0, 1)
        eta = 1 / (1 + chi)
        expect = 0.5 * (math.sqrt(ga * eta / (1 + ga * eta)) - math.sqrt(g / (1 + g)))
        assert ser_gain(g, ga, chi) == pytest.approx(expect, abs=1e-15)


def test_ser_monte_carlo_agrees_and_degrades_with_chi():
    rng = np.random.default_rng(5)
    est = ser_monte_carlo(10.0, 0.0, 1_000_000, rng)
    assert abs(est.value - ser_closed_form(10.0)) <= 3 * est.half_width
    integ = ser_monte_carlo(10.0, 0.0, 200_000, rng, method="integral")
    assert abs(integ.value - ser_closed_form(10.0)) <= 3 * integ.half_width
    zero = ser_monte_carlo(0.0, 0.0, 100_000, rng)
    assert abs(zero.value - 0.5) <= 3 * zero.half_width
    vals = [ser_monte_carlo(10.0, chi, 200_000, np.random.default_rng(6)).value for chi in (0, 0.3, 1)]
    assert vals[0] < vals[1] < vals[2]
    with pytest.raises(ValueError):
        ser_monte_carlo(1.0, 0.0, 100, rng)
    with pytest.raises(ValueError):
        ser_monte_carlo(1.0, 0.0, 10_000, rng, method="other")


def test_estimate_interval():
    rng = np.random.default_rng(0)
    est = ser_monte_carlo(3.0, 0.0, 10_000, rng)
    lo, hi = est.interval
    assert lo < est.value < hi and est.trials == 10_000


# -- detection ----------------------------------------------------------------------

def test_threshold():
    assert detection_threshold(math.exp(-1), 2.5) == pytest.approx(2.5)
    assert detection_threshold(1 - 1e-15, 1.0) < 1e-7
    for bad in (0.0, 1.0):
        with pytest.raises(ValueError):
            detection_threshold(bad, 1.0)


def test_detection_config_validation():
    DetectionConfig(1e-3, 4, 0.5)
    with pytest.raises(ValueError):
        DetectionConfig(pfa=0.0)
    with pytest.raises(ValueError):
        DetectionConfig(noise_power=0.0)
    with pytest.raises(ValueError):
        DetectionConfig(ref_cells=0)


def test_false_alarm_rate():
    rng = np.random.default_rng(7)
    for pfa in (1e-3, 1e-2):
        est = false_alarm_rate(2.0, pfa, 1_000_000, rng)
        assert abs(est.value - pfa) <= 3 * math.sqrt(pfa / 1e6) * 1.96


def test_marcum_edge_cases():
    for a in (0.0, 0.5, 3.0, 40.0):
        assert marcum_q1(a, 0.0) == 1.0
    for b in (0.1, 1.0, 5.0):
        assert marcum_q1(0.0, b) == pytest.approx(math.exp(-b * b / 2), abs=1e-15)
    with pytest.raises(ValueError):
        marcum_q1(-1.0, 1.0)
    v = marcum_q1(np.array([0.0, 1.0]), np.array([1.0, 1.0]))
    assert v.shape == (2,)


@pytest.mark.parametrize("a,b", [(0.3, 0.2), (1.0, 2.0), (2.0, 1.0), (5.0, 5.5), (10.0, 3.0),
                                 (3.0, 12.0), (30.0, 29.0), (60.0, 61.0), (0.01, 4.0)])
def test_marcum_matches_quadrature(a, b):
    assert marcum_q1(a, b) == pytest.approx(marcum_quad(a, b), abs=1e-10)


def test_marcum_monotone():
    a = np.linspace(0, 8, 33)
    b = np.linspace(0, 8, 33)
    grid = np.array([[marcum_q1(x, y) for y in b] for x in a])
    assert np.all(np.diff(grid, axis=0) >= -1e-12)
    assert np.all(np.diff(grid, axis=1) <= 1e-12)
    assert np.all((grid >= 0) & (grid <= 1))


def test_pd_analytic_limits():
    for pfa in (1e-4, 1e-3, 1e-2, 1e-1):
        assert pd_analytic(0.0, pfa) == pytest.approx(pfa, abs=1e-10)
    assert pd_analytic(1e6, 1e-3) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        pd_analytic(-1.0, 0.1)


def test_pd_monte_carlo_matches_analytic():
    rng = np.random.default_rng(8)
    for db in (0, 3, 10):
        sinr = 10 ** (db / 10)
        est = pd_monte_carlo(math.sqrt(sinr), 1.0, 1e-2, 100_000, rng)
        assert abs(est.value - pd_analytic(sinr, 1e-2)) <= 0.01
    zero = pd_monte_carlo(0.0, 1.0, 1e-2, 100_000, rng)
    assert abs(zero.value - 1e-2) <= 3 * zero.half_width


def test_pd_monte_carlo_monotone_in_amplitude():
    e1 = pd_monte_carlo(1.0, 1.0, 1e-2, 100_000, np.random.default_rng(1)).value
    e2 = pd_monte_carlo(2.0, 1.0, 1e-2, 100_000, np.random.default_rng(1)).value
    assert e2 > e1
    with pytest.raises(ValueError):
        pd_monte_carlo(1.0, 1.0, 1e-2, 10, np.random.default_rng(1))


def test_required_snr():
    assert required_snr(0.5, 0.25, 1) == pytest.approx(2.0)
    pds = [0.3, 0.5, 0.7, 0.9]
    vals = [required_snr(p, 1e-2, 3) for p in pds]
    assert all(a < b for a, b in zip(vals, vals[1:]))
    vals = [required_snr(0.9, p, 3) for p in (1e-4, 1e-3, 1e-2)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    with pytest.raises(ValueError):
        required_snr(0.1, 0.2)
    with pytest.raises(ValueError):
        required_snr(1.0, 0.2)
    with pytest.raises(ValueError):
        required_snr(0.5, 0.2, 0)


# -- AS improvement -----------------------------------------------------------------

def test_snr_improvement_examples():
    u = np.array([1.0, 2.0, 3.0])
    r = snr_improvement(np.ones(3, bool), u, np.zeros(3))
    assert r.ratio_total == 1.0 and r.ratio_useful == 1.0
    assert snr_improvement([True, False, False], np.zeros(3), np.zeros(3)).ratio_total == 0.0
    with pytest.raises(ValueError):
        snr_improvement(np.zeros(3, bool), u, u)


def test_snr_improvement_clean_half():
    useful = np.ones(8)
    interf = np.array([0.0] * 4 + [2.0] * 4)
    mask = np.array([True] * 4 + [False] * 4)
    r = snr_improvement(mask, useful, interf, noise_power=0.1, snr=10.0)
    assert r.sinr_as > r.sinr
    assert r.ratio_useful == 0.5 and r.snr_as == 5.0
    assert r.ratio_total == pytest.approx(4 / 16)


# -- ROC ----------------------------------------------------------------------------

def test_roc_diagonal_and_dominance():
    grid = np.logspace(-4, -0.1, 30)
    diag = roc_curve(0.0, grid)
    assert np.allclose([d for _, d in diag], grid, atol=1e-10)
    lo, hi = roc_curve(1.0, grid), roc_curve(5.0, grid)
    assert all(h[1] >= l[1] for h, l in zip(hi, lo))
    pd = [d for _, d in hi]
    assert np.all(np.diff(pd) >= 0) and all(0 <= d <= 1 for d in pd)


def test_roc_grid_validation():
    with pytest.raises(ValueError):
        roc_curve(1.0, [0.0, 0.5])
    with pytest.raises(ValueError):
        roc_curve(1.0, [0.5, 0.1])


def test_report_dict():
    d = MetricsReport(sinr_db=3.0, roc=[(0.1, 0.5)]).as_dict()
    assert d["sinr_db"] == 3.0 and "roc" not in d


# -- chi_AS ordering ----------------------------------------------------------------

def test_selection_reduces_leakage_ratio():
    # leakage-heavy scenario: measured chi over the kept comm antennas vs over the whole VR union
    cfg = ScenarioConfig(array=ArrayConfig(n_elements=64, xpd_db=3.0),
                         paths=(PathConfig(distance=8.0, aoa=0.3, chi=0.6),))
    w = (math.cos(cfg.sop_delta), math.sin(cfg.sop_delta))
    before, after = [], []
    for t in range(500):
        rng = np.random.default_rng(np.random.SeedSequence(11, spawn_key=(t,)))
        h = assemble_channel(cfg, rng)
        prof = power_profile(h, weights=w)
        sel = select_antennas(prof, list(h.visibility), strict=False)
        c = sel.comm_mask
        union = np.logical_or.reduce(h.visibility)
        before.append(prof.px_v_to_h[union].sum() / prof.p_h[union].sum())
        if c.any():
            after.append(prof.px_v_to_h[c].sum() / prof.p_h[c].sum())
    assert len(after) > 150
    assert np.median(after) < np.median(before)
