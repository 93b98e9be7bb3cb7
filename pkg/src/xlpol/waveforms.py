"""Dual-polarized JRC signals: OFDM on H, LFM chirp on V, receive model and radar processing."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import windows

from .channel import ChannelMatrix

_QPSK_LEVELS = np.array([1.0, -1.0])  # gray: bit 0 -> +1, bit 1 -> -1
_QAM16_LEVELS = np.array([-3.0, -1.0, 3.0, 1.0])  # index = 2-bit gray code


@dataclass(frozen=True)
class SopSignal:
    delta: float
    theta: float
    h_stream: np.ndarray
    v_stream: np.ndarray

    @property
    def weights(self) -> tuple[complex, complex]:
        return complex(np.cos(self.delta)), complex(np.sin(self.delta) * np.exp(1j * self.theta))

    @property
    def e_h(self) -> np.ndarray:
        return self.weights[0] * self.h_stream

    @property
    def e_v(self) -> np.ndarray:
        return self.weights[1] * self.v_stream


def make_sop(delta: float, theta: float, h_stream, v_stream) -> SopSignal:
    if not 0.0 <= delta <= np.pi / 2:
        raise ValueError("delta must lie in [0, pi/2]")
    h = np.asarray(h_stream, dtype=complex)
    v = np.asarray(v_stream, dtype=complex)
    if h.shape != v.shape:
        raise ValueError("H and V streams must have the same length")
    return SopSignal(float(delta), float(theta), h, v)


# -- OFDM -----------------------------------------------------------------------

@dataclass(frozen=True)
class OfdmParams:
    n_subcarriers: int = 64
    cp_length: int = 16
    constellation: str = "QPSK"

    def __post_init__(self):
        if self.constellation not in ("QPSK", "16QAM"):
            raise ValueError("constellation must be QPSK or 16QAM")
        if not 0 <= self.cp_length < self.n_subcarriers:
            raise ValueError("cp_length must be smaller than n_subcarriers")

    @property
    def bits_per_symbol(self) -> int:
        return 2 if self.constellation == "QPSK" else 4

    @property
    def symbol_length(self) -> int:
        return self.n_subcarriers + self.cp_length


@dataclass(frozen=True)
class OfdmFrame:
    params: OfdmParams
    symbols: np.ndarray  # (n_subcarriers, n_ofdm_symbols)
    bits: np.ndarray


def map_bits(bits: np.ndarray, constellation: str) -> np.ndarray:
    b = np.asarray(bits, dtype=np.int8)
    if constellation == "QPSK":
        b = b.reshape(-1, 2)
        return (_QPSK_LEVELS[b[:, 0]] + 1j * _QPSK_LEVELS[b[:, 1]]) / np.sqrt(2.0)
    b = b.reshape(-1, 4)
    i = _QAM16_LEVELS[2 * b[:, 0] + b[:, 1]]
    q = _QAM16_LEVELS[2 * b[:, 2] + b[:, 3]]
    return (i + 1j * q) / np.sqrt(10.0)


def demap_symbols(sym: np.ndarray, constellation: str) -> np.ndarray:
    sym = np.asarray(sym).ravel()
    if constellation == "QPSK":
        out = np.empty((sym.size, 2), dtype=np.int8)
        out[:, 0] = sym.real < 0
        out[:, 1] = sym.imag < 0
        return out.ravel()
    scaled = sym * np.sqrt(10.0)

    def rail(x):
        # nearest of {-3,-1,1,3} then gray bits
        hi = (x > 0).astype(np.int8)
        lo = (np.abs(x) < 2).astype(np.int8)
        return hi, lo

    out = np.empty((sym.size, 4), dtype=np.int8)
    out[:, 0], out[:, 1] = rail(scaled.real)
    out[:, 2], out[:, 3] = rail(scaled.imag)
    return out.ravel()


def ofdm_modulate(bits, params: OfdmParams = OfdmParams()) -> tuple[OfdmFrame, np.ndarray]:
    """Map bits onto subcarriers and return the frame with its CP-prefixed time stream."""
    bits = np.asarray(bits, dtype=np.int8).ravel()
    per_ofdm = params.bits_per_symbol * params.n_subcarriers
    if bits.size == 0 or bits.size % per_ofdm:
        raise ValueError(f"bit count {bits.size} is not a multiple of {per_ofdm}")
    syms = map_bits(bits, params.constellation).reshape(-1, params.n_subcarriers).T
    time = np.fft.ifft(syms, axis=0, norm="ortho")
    with_cp = np.concatenate([time[params.n_subcarriers - params.cp_length:], time], axis=0)
    return OfdmFrame(params, syms, bits), with_cp.T.ravel()


def random_ofdm(n_ofdm_symbols: int, rng: np.random.Generator,
                params: OfdmParams = OfdmParams()) -> tuple[OfdmFrame, np.ndarray]:
    bits = rng.integers(0, 2, size=n_ofdm_symbols * params.n_subcarriers * params.bits_per_symbol)
    return ofdm_modulate(bits, params)


@dataclass(frozen=True)
class DemodResult:
    bits: np.ndarray
    symbols: np.ndarray
    bit_errors: int | None = None
    symbol_errors: int | None = None


def ofdm_demodulate(y_h, h_est, params: OfdmParams = OfdmParams(), mask=None,
                    frame: OfdmFrame | None = None) -> DemodResult:
    """MRC across selected antennas followed by per-subcarrier one-tap equalization.

    ``y_h`` is ``(antennas, samples)``. ``h_est`` holds the co-pol
    coefficient per antenna, shape ``(antennas,)`` for flat fading or
    ``(antennas, n_subcarriers, n_ofdm_symbols)`` for per-tone fades.
    If ``frame`` is given, bit and symbol errors are counted against it.
    """
    y = np.atleast_2d(np.asarray(y_h, dtype=complex))
    h = np.asarray(h_est, dtype=complex)
    if h.ndim == 1:
        h = h[:, None, None]
    if mask is None:
        mask = np.ones(y.shape[0], dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("no antenna selected for communication")
    y, h = y[mask], h[mask]
    if not np.any(np.abs(h) > 0):
        raise ValueError("selected communication antennas carry no channel energy")
    n_sym = y.shape[1] // params.symbol_length
    blocks = y[:, :n_sym * params.symbol_length].reshape(y.shape[0], n_sym, params.symbol_length)
    freq = np.fft.fft(blocks[:, :, params.cp_length:], axis=2, norm="ortho")
    freq = np.transpose(freq, (0, 2, 1))  # antenna, subcarrier, symbol
    num = np.sum(np.conj(h) * freq, axis=0)
    den = np.sum(np.abs(h) ** 2, axis=0)
    eq = num / np.where(den > 0, den, np.inf)
    bits = demap_symbols(eq.T.ravel(), params.constellation)
    bit_err = sym_err = None
    if frame is not None:
        ref_bits = frame.bits[:bits.size]
        bit_err = int(np.count_nonzero(bits != ref_bits))
        k = params.bits_per_symbol
        sym_err = int(np.count_nonzero(np.any((bits != ref_bits).reshape(-1, k), axis=1)))
    return DemodResult(bits, eq, bit_err, sym_err)


# -- chirp radar ----------------------------------------------------------------

@dataclass(frozen=True)
class ChirpSignal:
    bandwidth: float
    duration: float
    sample_rate: float
    samples: np.ndarray


def chirp_generate(bandwidth: float = 100e6, duration: float = 10e-6,
                   sample_rate: float = 200e6) -> ChirpSignal:
    """Unit-envelope LFM pulse exp(j*pi*(B/T)*t^2) with t measured from the pulse center."""
    if sample_rate < 2 * bandwidth:
        raise ValueError("sample_rate must be at least twice the bandwidth")
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate - duration / 2
    s = np.exp(1j * np.pi * (bandwidth / duration) * t ** 2)
    return ChirpSignal(bandwidth, duration, sample_rate, s)


@dataclass(frozen=True)
class RadarParams:
    n_pulses: int = 8
    n_fast: int = 4096
    pri: float = 25.6e-6
    range_window: str = "hamming"
    doppler_window: str = "hamming"

    def doppler_axis(self) -> np.ndarray:
        return np.fft.fftshift(np.fft.fftfreq(self.n_pulses, d=self.pri))


@dataclass(frozen=True)
class Echo:
    delay: int  # samples
    doppler: float  # Hz
    amplitude: complex = 1.0


def synthesize_echoes(chirp: ChirpSignal, echoes, params: RadarParams = RadarParams()) -> np.ndarray:
    """(n_pulses, n_fast) slow/fast-time matrix of delayed, Doppler-shifted pulses."""
    out = np.zeros((params.n_pulses, params.n_fast), dtype=complex)
    m = np.arange(params.n_pulses)
    n = chirp.samples.size
    for e in echoes:
        if e.delay + n > params.n_fast:
            raise ValueError("echo delay exceeds the fast-time window")
        slow = e.amplitude * np.exp(2j * np.pi * e.doppler * m * params.pri)
        out[:, e.delay:e.delay + n] += slow[:, None] * chirp.samples[None, :]
    return out


def delay_doppler_map(y_v, chirp: ChirpSignal, params: RadarParams = RadarParams()) -> np.ndarray:
    """Matched filter per pulse then slow-time FFT; returns |map| shaped (range, doppler).

    Both stages are tapered (Hamming by default) to keep sidelobes well
    under the -20 dB peak-detection floor.
    """
    y = np.atleast_2d(np.asarray(y_v, dtype=complex))
    if y.shape[0] < 2:
        raise ValueError("at least two pulses are needed for a Doppler axis")
    ref = chirp.samples
    if params.range_window:
        ref = ref * windows.get_window(params.range_window, ref.size, fftbins=False)
    nfft = 1 << int(np.ceil(np.log2(y.shape[1] + ref.size)))
    mf = np.fft.ifft(np.fft.fft(y, nfft, axis=1) * np.conj(np.fft.fft(ref, nfft))[None, :], axis=1)
    mf = mf[:, :y.shape[1]]
    if params.doppler_window:
        mf = mf * windows.get_window(params.doppler_window, y.shape[0], fftbins=False)[:, None]
    dd = np.fft.fftshift(np.fft.fft(mf, axis=0), axes=0)
    return np.abs(dd).T


def find_peaks_2d(amp: np.ndarray, floor_db: float = -20.0) -> list[tuple[int, int, float]]:
    """Local maxima (8-neighbourhood, Doppler axis circular) above ``floor_db`` of the global peak."""
    a = np.asarray(amp, dtype=float)
    p = np.pad(a, ((1, 1), (0, 0)), constant_values=-np.inf)
    p = np.concatenate([p[:, -1:], p, p[:, :1]], axis=1)
    core = p[1:-1, 1:-1]
    is_max = np.ones_like(core, dtype=bool)
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if dr == 0 and dc == 0:
                continue
            nb = p[1 + dr:p.shape[0] - 1 + dr, 1 + dc:p.shape[1] - 1 + dc]
            is_max &= core >= nb
    peak = a.max()
    if peak <= 0:
        return []
    rel = 20 * np.log10(np.maximum(a, 1e-300) / peak)
    idx = np.argwhere(is_max & (rel > floor_db))
    return [(int(r), int(c), float(rel[r, c])) for r, c in idx]


def dump_ddmap(amp: np.ndarray) -> str:
    rows = [" ".join(f"{v:.9g}" for v in row) for row in np.asarray(amp)]
    return "# rows: range bins, columns: doppler bins (fftshifted)\n" + "\n".join(rows) + "\n"


# -- receive model ----------------------------------------------------------------

@dataclass(frozen=True)
class ReceivedBundle:
    """Per-antenna H/V samples. ``leak_scale`` tracks how much cross-pol remains (1 = untouched)."""

    y_h: np.ndarray
    y_v: np.ndarray
    sig: SopSignal
    noise_h: np.ndarray = field(repr=False, default=None)
    noise_v: np.ndarray = field(repr=False, default=None)
    leak_scale: float = 1.0


def transmit_receive(h: ChannelMatrix, sig: SopSignal, noise_variance: float,
                     rng: np.random.Generator | None = None) -> ReceivedBundle:
    e_h, e_v = sig.e_h, sig.e_v
    y_v = np.outer(h.h_vv, e_v) + np.outer(h.h_vh, e_h)
    y_h = np.outer(h.h_hh, e_h) + np.outer(h.h_hv, e_v)
    if noise_variance > 0:
        if rng is None:
            raise ValueError("an rng is required for noisy reception")
        sd = np.sqrt(noise_variance / 2.0)
        noise_v = sd * (rng.standard_normal(y_v.shape) + 1j * rng.standard_normal(y_v.shape))
        noise_h = sd * (rng.standard_normal(y_h.shape) + 1j * rng.standard_normal(y_h.shape))
    else:
        noise_v = np.zeros_like(y_v)
        noise_h = np.zeros_like(y_h)
    return ReceivedBundle(y_h + noise_h, y_v + noise_v, sig, noise_h, noise_v)


def cross_terms(bundle: ReceivedBundle, h: ChannelMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Cross-pol components still present in (y_h, y_v)."""
    s = bundle.leak_scale
    return (s * np.outer(h.h_hv, bundle.sig.e_v), s * np.outer(h.h_vh, bundle.sig.e_h))


def mitigate_depolarization(bundle: ReceivedBundle, h: ChannelMatrix, residual: float) -> ReceivedBundle:
    """Scale the cross-pol terms by ``residual`` (0 removes them, 1 is a no-op)."""
    if not 0.0 <= residual <= 1.0:
        raise ValueError("residual must lie in [0, 1]")
    if residual == 1.0:
        return bundle
    scale = bundle.leak_scale * residual
    e_h, e_v = bundle.sig.e_h, bundle.sig.e_v
    if bundle.noise_h is None:
        x_h, x_v = cross_terms(bundle, h)
        keep = 1.0 - residual
        return ReceivedBundle(bundle.y_h - keep * x_h, bundle.y_v - keep * x_v, bundle.sig,
                              None, None, scale)
    # rebuild from components so residual = 0 leaves no rounding residue
    y_h = np.outer(h.h_hh, e_h) + scale * np.outer(h.h_hv, e_v) + bundle.noise_h
    y_v = np.outer(h.h_vv, e_v) + scale * np.outer(h.h_vh, e_h) + bundle.noise_v
    return ReceivedBundle(y_h, y_v, bundle.sig, bundle.noise_h, bundle.noise_v, scale)
