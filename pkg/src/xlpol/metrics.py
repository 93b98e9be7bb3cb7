"""SINR, spectral efficiency, SER and radar detection metrics."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import integrate
from scipy.special import i0e, ive, ndtr

from ._validation import check_mask, check_probability
from .channel import ChannelMatrix

SINR_INF = 1e12  # ratios above this are reported as +inf


def per_antenna_sinr(h: ChannelMatrix, weights, noise_variance: float, branch: str = "h",
                     leak_scale: float = 1.0) -> np.ndarray:
    """Co-pol power over (cross-pol power + noise) for each antenna on one branch."""
    w_h, w_v = (abs(w) ** 2 for w in weights)
    if branch == "h":
        s, i = np.abs(h.h_hh) ** 2 * w_h, np.abs(h.h_hv) ** 2 * w_v
    elif branch == "v":
        s, i = np.abs(h.h_vv) ** 2 * w_v, np.abs(h.h_vh) ** 2 * w_h
    else:
        raise ValueError("branch must be 'h' or 'v'")
    return s / (leak_scale ** 2 * i + noise_variance)


def sinr_post_selection(mask, h_c: ChannelMatrix, h_x: ChannelMatrix, sop, noise_variance: float,
                        branch: str = "both") -> float:
    """||S H_C E||^2 / (||S H_X E||^2 + noise) for an antenna mask.

    ``sop`` is the (delta, theta) transmit state; ``branch`` restricts the
    norm to the H rows, the V rows, or keeps both.
    """
    delta, theta = sop
    e = np.array([np.sin(delta) * np.exp(1j * theta), np.cos(delta)])  # (E^V, E^H) column order
    sel = check_mask(mask, h_c.n_elements, "mask")
    if not sel.any():
        raise ValueError("empty antenna selection")
    rows = np.repeat(sel, 2)
    if branch == "h":
        rows &= np.tile([False, True], sel.size)
    elif branch == "v":
        rows &= np.tile([True, False], sel.size)
    elif branch != "both":
        raise ValueError("branch must be 'both', 'h' or 'v'")
    sig = np.sum(np.abs(h_c.h[rows] @ e) ** 2)
    interf = np.sum(np.abs(h_x.h[rows] @ e) ** 2)
    den = interf + noise_variance
    if den == 0 or sig / den > SINR_INF:
        return math.inf
    return float(sig / den)


def spectral_efficiency(sinr: float) -> float:
    return float(np.log2(1.0 + sinr))


# -- SER ------------------------------------------------------------------------------

def effective_xpd_factor(chi_as):
    chi_as = np.asarray(chi_as, dtype=float)
    if np.any(chi_as < 0):
        raise ValueError("chi_as must be non-negative")
    out = 1.0 / (1.0 + chi_as)
    return float(out) if out.ndim == 0 else out


def ser_closed_form(mean_snr):
    """Rayleigh-faded binary-antipodal error rate 0.5*(1 - sqrt(g/(1+g)))."""
    g = np.asarray(mean_snr, dtype=float)
    if np.any(g < 0):
        raise ValueError("mean SNR must be non-negative")
    with np.errstate(invalid="ignore"):
        out = np.where(np.isinf(g), 0.0, 0.5 * (1.0 - np.sqrt(g / (1.0 + g))))
    return float(out) if out.ndim == 0 else out


def ser_with_as(mean_snr_as, chi_as):
    return ser_closed_form(np.asarray(mean_snr_as, dtype=float) * effective_xpd_factor(chi_as))


def ser_gain(mean_snr, mean_snr_as, chi_as):
    """SER without selection minus SER with selection and leakage factor."""
    return ser_closed_form(mean_snr) - ser_with_as(mean_snr_as, chi_as)


@dataclass(frozen=True)
class Estimate:
    value: float
    half_width: float  # 95 % confidence half-width
    trials: int

    @property
    def interval(self) -> tuple[float, float]:
        return self.value - self.half_width, self.value + self.half_width


def _binomial_estimate(hits: int, trials: int) -> Estimate:
    p = hits / trials
    return Estimate(p, 1.96 * math.sqrt(max(p * (1 - p), 1.0 / trials) / trials), trials)


def qfunc(x):
    return ndtr(-np.asarray(x, dtype=float))


def ser_monte_carlo(mean_snr: float, chi: float, trials: int, rng: np.random.Generator,
                    method: str = "symbols", batch: int = 1 << 18) -> Estimate:
    """Empirical Rayleigh SER for antipodal signalling with leakage-degraded SNR g/(1+chi).

    ``method="symbols"`` simulates symbols through CN(0,1) fades with
    coherent detection; ``method="integral"`` averages Q(sqrt(2*gamma))
    over exponential SNR draws.
    """
    if trials < 10_000:
        raise ValueError("at least 10^4 trials are required")
    g_eff = mean_snr / (1.0 + chi)
    if method == "integral":
        vals = np.empty(0)
        total, sq, done = 0.0, 0.0, 0
        while done < trials:
            m = min(batch, trials - done)
            gam = rng.exponential(g_eff, size=m) if g_eff > 0 else np.zeros(m)
            vals = qfunc(np.sqrt(2.0 * gam))
            total += vals.sum()
            sq += np.sum(vals ** 2)
            done += m
        mean = total / trials
        var = max(sq / trials - mean ** 2, 0.0)
        return Estimate(mean, 1.96 * math.sqrt(var / trials), trials)
    if method != "symbols":
        raise ValueError("method must be 'symbols' or 'integral'")
    errors = 0
    done = 0
    while done < trials:
        m = min(batch, trials - done)
        bits = rng.integers(0, 2, size=m)
        s = 1.0 - 2.0 * bits
        fade = (rng.standard_normal(m) + 1j * rng.standard_normal(m)) / math.sqrt(2.0)
        noise = (rng.standard_normal(m) + 1j * rng.standard_normal(m)) / math.sqrt(2.0)
        if g_eff > 0:
            y = fade * s + noise / math.sqrt(g_eff)
            decided = np.real(np.conj(fade) * y) < 0
        else:
            decided = rng.integers(0, 2, size=m).astype(bool)
        errors += int(np.count_nonzero(decided != bits.astype(bool)))
        done += m
    return _binomial_estimate(errors, trials)


# -- detection ------------------------------------------------------------------------

@dataclass(frozen=True)
class DetectionConfig:
    pfa: float = 1e-2
    ref_cells: int = 1
    noise_power: float = 1.0

    def __post_init__(self):
        check_probability(self.pfa, "pfa")
        if not self.noise_power > 0:
            raise ValueError("noise_power must be positive")
        if self.ref_cells < 1:
            raise ValueError("ref_cells must be >= 1")


def detection_threshold(pfa: float, noise_sigma: float) -> float:
    """Envelope threshold sigma*sqrt(-ln pfa) for a Rayleigh noise envelope with E|w|^2 = sigma^2."""
    check_probability(pfa, "pfa")
    return float(noise_sigma * math.sqrt(-math.log(pfa)))


_QUAD_SWITCH = 2500.0  # a*b above this uses quadrature


def _marcum_series(a: float, b: float) -> float:
    x = a * b
    kmax = int(x + 40.0 * math.sqrt(x + 1.0) + 60)
    k = np.arange(0, kmax + 1)
    scale = math.exp(-0.5 * (a - b) ** 2)
    if a < b:
        r = a / b
        with np.errstate(under="ignore"):
            terms = np.exp(k * math.log(r)) * ive(k, x) if r > 0 else np.where(k == 0, ive(0, x), 0.0)
        return float(min(1.0, max(0.0, scale * terms.sum())))
    r = b / a
    kk = k[1:]
    with np.errstate(under="ignore"):
        terms = np.exp(kk * math.log(r)) * ive(kk, x)
    return float(min(1.0, max(0.0, 1.0 - scale * terms.sum())))


def _marcum_quad(a: float, b: float) -> float:
    # integrand x*exp(-(x-a)^2/2)*i0e(a x) is I0-stable; mass sits near x ~ a
    f = lambda x: x * math.exp(-0.5 * (x - a) ** 2) * i0e(a * x)
    hi = max(a, b) + 40.0
    if b >= a:
        val, _ = integrate.quad(f, b, hi, epsabs=1e-14, epsrel=1e-12, limit=400)
        return float(min(1.0, max(0.0, val)))
    val, _ = integrate.quad(f, 0.0, b, epsabs=1e-14, epsrel=1e-12, limit=400, points=[max(0.0, a - 1.0)])
    return float(min(1.0, max(0.0, 1.0 - val)))


def marcum_q1(a, b):
    """First-order Marcum Q function Q_1(a, b)."""
    a_arr, b_arr = np.broadcast_arrays(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    if np.any(a_arr < 0) or np.any(b_arr < 0):
        raise ValueError("Marcum Q arguments must be non-negative")
    out = np.empty(a_arr.shape)
    for idx in np.ndindex(a_arr.shape):
        ai, bi = float(a_arr[idx]), float(b_arr[idx])
        if bi == 0.0:
            out[idx] = 1.0
        elif ai == 0.0:
            out[idx] = math.exp(-0.5 * bi * bi)
        elif np.isinf(ai):
            out[idx] = 1.0
        elif ai * bi > _QUAD_SWITCH:
            out[idx] = _marcum_quad(ai, bi)
        else:
            out[idx] = _marcum_series(ai, bi)
    return float(out) if out.ndim == 0 else out


def pd_analytic(sinr, pfa: float):
    check_probability(pfa, "pfa")
    s = np.asarray(sinr, dtype=float)
    if np.any(s < 0):
        raise ValueError("SINR must be non-negative")
    res = marcum_q1(np.sqrt(2.0 * s), math.sqrt(-2.0 * math.log(pfa)))
    return res


def pd_monte_carlo(amplitude: complex, noise_power: float, pfa: float, trials: int,
                   rng: np.random.Generator) -> Estimate:
    """Fraction of |E + w| above the fixed-Pfa threshold, w ~ CN(0, noise_power)."""
    if trials < 10_000:
        raise ValueError("at least 10^4 trials are required")
    check_probability(pfa, "pfa")
    sigma = math.sqrt(noise_power)
    thr = detection_threshold(pfa, sigma)
    w = sigma / math.sqrt(2.0) * (rng.standard_normal(trials) + 1j * rng.standard_normal(trials))
    hits = int(np.count_nonzero(np.abs(amplitude + w) > thr))
    return _binomial_estimate(hits, trials)


def false_alarm_rate(noise_power: float, pfa: float, trials: int, rng: np.random.Generator) -> Estimate:
    return pd_monte_carlo(0.0, noise_power, pfa, trials, rng)


def required_snr(pd: float, pfa: float, ref_cells: int = 1) -> float:
    check_probability(pd, "pd")
    check_probability(pfa, "pfa")
    if not pfa < pd:
        raise ValueError("pd must exceed pfa")
    if ref_cells < 1:
        raise ValueError("ref_cells must be >= 1")
    r = 1.0 / ref_cells
    return float(((pd / pfa) ** r - 1.0) / (1.0 - pd ** r))


@dataclass(frozen=True)
class SnrImprovement:
    ratio_total: float  # selected useful / total (useful + interference)
    ratio_useful: float  # selected useful / total useful
    snr_as: float  # ratio_useful * baseline SNR
    sinr: float  # baseline SINR over all antennas
    sinr_as: float  # SINR over the selection


def snr_improvement(selected_mask, useful, interf, noise_power: float = 1.0,
                    snr: float = 1.0) -> SnrImprovement:
    useful = np.asarray(useful, dtype=float)
    interf = np.asarray(interf, dtype=float)
    sel = check_mask(selected_mask, useful.size, "selected_mask")
    if not sel.any():
        raise ValueError("empty selection")
    tot_u = useful.sum()
    tot = tot_u + interf.sum()
    sel_u = useful[sel].sum()
    r_tot = sel_u / tot if tot > 0 else 0.0
    r_use = sel_u / tot_u if tot_u > 0 else 0.0
    sinr = tot_u / (interf.sum() + noise_power)
    sinr_as = sel_u / (interf[sel].sum() + noise_power)
    return SnrImprovement(float(r_tot), float(r_use), float(r_use * snr), float(sinr), float(sinr_as))


def roc_curve(sinr: float, pfa_grid) -> list[tuple[float, float]]:
    grid = np.asarray(pfa_grid, dtype=float)
    if np.any((grid <= 0) | (grid >= 1)):
        raise ValueError("pfa grid values must lie in (0, 1)")
    if np.any(np.diff(grid) < 0):
        raise ValueError("pfa grid must be ascending")
    pd = [pd_analytic(sinr, p) for p in grid]
    pd = np.maximum.accumulate(np.maximum(pd, grid))
    return [(float(p), float(d)) for p, d in zip(grid, pd)]


@dataclass
class MetricsReport:
    sinr_db: float = float("nan")
    se: float = float("nan")
    ser_analytic: float = float("nan")
    ser_mc: float = float("nan")
    ser_mc_ci: float = float("nan")
    pd_analytic: float = float("nan")
    pd_mc: float = float("nan")
    pd_mc_ci: float = float("nan")
    radar_sinr_db: float = float("nan")
    chi_as: float = float("nan")
    snr_improvement: float = float("nan")
    roc: list = field(default_factory=list)

    def as_dict(self) -> dict:
        d = asdict(self)
        d.pop("roc")
        return d
