"""Dual-polarized near-field XL-MIMO channel synthesis.

Every antenna ``n`` owns a 2x2 block with rows (V_r, H_r) and columns
(V_t, H_t)::

    [[h_VrVt, h_VrHt],
     [h_HrVt, h_HrHt]]

A :class:`ChannelMatrix` stacks these blocks into a ``(2*N, 2)`` array, so
rows ``2n`` and ``2n + 1`` belong to antenna ``n``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import ArrayConfig, PathConfig, ScenarioConfig, vr_window_size

TWO_PI = 2.0 * np.pi


def wavenumber(array: ArrayConfig) -> float:
    return TWO_PI / array.wavelength


def element_offsets(array: ArrayConfig | int) -> np.ndarray:
    """Centered element offsets (2n - N - 1)/2 for n = 1..N."""
    n_el = array if isinstance(array, int) else array.n_elements
    n = np.arange(1, n_el + 1, dtype=float)
    return (2.0 * n - n_el - 1.0) / 2.0


def element_distance(d_bar, aoa, offset, spacing):
    """Scatterer-to-element distance from the law of cosines.

    Raises ``ValueError`` if the squared distance is negative.
    """
    x = np.asarray(offset, dtype=float) * spacing
    sq = d_bar ** 2 + x ** 2 - 2.0 * d_bar * x * np.sin(aoa)
    if np.any(sq < 0):
        raise ValueError("geometrically impossible element distance (negative square)")
    d = np.sqrt(sq)
    if np.ndim(d) == 0:
        return float(d)
    return d


def path_distances(array: ArrayConfig, path: PathConfig) -> np.ndarray:
    return element_distance(path.distance, path.aoa, element_offsets(array), array.element_spacing)


def steering_vector(array: ArrayConfig, path: PathConfig) -> np.ndarray:
    """Near-field steering vector, magnitude 1/sqrt(N) per entry."""
    d = path_distances(array, path)
    k = wavenumber(array)
    return np.exp(1j * k * (d - path.distance)) / np.sqrt(array.n_elements)


def pattern_value(array: ArrayConfig, aoa):
    if array.pattern == "dipole":
        return np.sin(aoa)
    if array.pattern == "patch":
        return np.cos(aoa) ** array.pattern_k
    return np.ones_like(np.asarray(aoa, dtype=float))


def copol_gain(array: ArrayConfig, aoa, distance):
    """Near-field co-pol gain G_max * f_co(aoa) / d * exp(-j k d)."""
    distance = np.asarray(distance, dtype=float)
    if np.any(distance <= 0):
        raise ValueError("distance must be positive")
    g = array.max_gain * pattern_value(array, aoa) / distance * np.exp(-1j * wavenumber(array) * distance)
    return complex(g) if g.ndim == 0 else g


def crosspol_gain(copol, xpd_linear):
    xpd_linear = np.asarray(xpd_linear, dtype=float)
    if np.any(xpd_linear <= 0):
        raise ValueError("XPD must be positive")
    g = copol / np.sqrt(xpd_linear)
    return complex(g) if np.ndim(g) == 0 else g


def element_gain_matrix(g_c, g_x) -> np.ndarray:
    """Per-element gain matrix [[G_C, G_X], [G_X, -G_C]]; broadcasts over leading axes."""
    g_c = np.asarray(g_c, dtype=complex)
    g_x = np.asarray(g_x, dtype=complex)
    out = np.empty(np.broadcast(g_c, g_x).shape + (2, 2), dtype=complex)
    out[..., 0, 0] = g_c
    out[..., 0, 1] = g_x
    out[..., 1, 0] = g_x
    out[..., 1, 1] = -g_c
    return out


def xpd_measured(gain: np.ndarray) -> float:
    """(|G_C| / |G_X|)^2 from an element gain matrix; ``inf`` when G_X = 0."""
    g_c, g_x = abs(gain[0, 0]), abs(gain[0, 1])
    if g_x == 0:
        return float("inf")
    return float((g_c / g_x) ** 2)


def depolarization_matrix(chi: float, phases) -> np.ndarray:
    if not 0.0 <= chi <= 1.0:
        raise ValueError("chi must lie in [0, 1]")
    a_hh, a_hv, a_vh, a_vv = phases
    s = np.sqrt(chi)
    x = np.array([[np.exp(1j * a_hh), s * np.exp(1j * a_hv)],
                  [s * np.exp(1j * a_vh), np.exp(1j * a_vv)]])
    return x / np.sqrt(1.0 + chi)


def rotation_matrix(angle) -> np.ndarray:
    """2-D rotation [[cos, sin], [-sin, cos]]; broadcasts over array-valued angles."""
    c, s = np.cos(angle), np.sin(angle)
    q = np.empty(np.shape(angle) + (2, 2))
    q[..., 0, 0] = c
    q[..., 0, 1] = s
    q[..., 1, 0] = -s
    q[..., 1, 1] = c
    return q


def path_length_excess(array: ArrayConfig, path: PathConfig, element=None, use_aoa: bool = False):
    """Extra path length to each element relative to the array center.

    With ``use_aoa`` the full law-of-cosines distance is used (angle dependent);
    otherwise the broadside form sqrt(d^2 + x^2) - d.
    """
    offs = element_offsets(array)
    if element is not None:
        offs = offs[element]
    x = offs * array.element_spacing
    if use_aoa:
        return element_distance(path.distance, path.aoa, offs, array.element_spacing) - path.distance
    return np.sqrt(path.distance ** 2 + x ** 2) - path.distance


def polarization_shift(path: PathConfig, array: ArrayConfig, element=None, deviation: float = 0.0,
                       rng: np.random.Generator | None = None, pol_angle0: float | None = None,
                       use_aoa: bool = False):
    """Per-element polarization angle, reduced mod 2*pi.

    ``element`` may be an index, an index array, or ``None`` for all
    elements. A uniform deviation in [-deviation, deviation] is added when
    ``deviation > 0`` (drawn from ``rng``).
    """
    phi0 = path.pol_angle0 if pol_angle0 is None else pol_angle0
    if phi0 is None:
        raise ValueError("pol_angle0 is random for this path; pass a realized value")
    angle = phi0 + wavenumber(array) * path_length_excess(array, path, element, use_aoa)
    if deviation > 0:
        if rng is None:
            raise ValueError("an rng is required when deviation > 0")
        angle = angle + rng.uniform(-deviation, deviation, size=np.shape(angle))
    return np.mod(angle, TWO_PI)


@dataclass(frozen=True)
class PathRealization:
    """Random quantities of one path drawn for one channel realization."""

    gain: complex
    depol_phases: tuple[float, float, float, float]
    pol_angle0: float
    visibility: np.ndarray  # boolean mask, length N
    deviation: np.ndarray  # per-element polarization deviation (radians)


def visibility_mask(indices, n_elements: int) -> np.ndarray:
    mask = np.zeros(n_elements, dtype=bool)
    mask[np.asarray(list(indices), dtype=int)] = True
    return mask


def realize_paths(cfg: ScenarioConfig, rng: np.random.Generator) -> list[PathRealization]:
    """Draw every per-realization random quantity in a fixed order."""
    n = cfg.array.n_elements
    out = []
    for p in cfg.paths:
        phase = rng.uniform(0.0, TWO_PI)
        depol = tuple(rng.uniform(0.0, TWO_PI, size=4))
        phi0 = rng.uniform(0.0, TWO_PI)
        start = rng.integers(0, n - vr_window_size(p.vr_width, n) + 1)
        dev = rng.uniform(-1.0, 1.0, size=n) * cfg.pol_deviation
        if p.visibility is not None:
            vis = visibility_mask(p.visibility, n)
        else:
            vis = np.zeros(n, dtype=bool)
            vis[start:start + vr_window_size(p.vr_width, n)] = True
        out.append(PathRealization(
            gain=p.gain_magnitude * np.exp(1j * (phase if p.gain_phase is None else p.gain_phase)),
            depol_phases=depol if p.depol_phases is None else tuple(p.depol_phases),
            pol_angle0=phi0 if p.pol_angle0 is None else p.pol_angle0,
            visibility=vis,
            deviation=dev,
        ))
    return out


@dataclass(frozen=True)
class ChannelMatrix:
    h: np.ndarray  # (2N, 2) complex
    visibility: tuple[np.ndarray, ...] = ()

    def __post_init__(self):
        self.h.setflags(write=False)

    @property
    def n_elements(self) -> int:
        return self.h.shape[0] // 2

    @property
    def blocks(self) -> np.ndarray:
        return self.h.reshape(-1, 2, 2)

    @property
    def h_vv(self) -> np.ndarray:
        return self.h[0::2, 0]

    @property
    def h_vh(self) -> np.ndarray:
        return self.h[0::2, 1]

    @property
    def h_hv(self) -> np.ndarray:
        return self.h[1::2, 0]

    @property
    def h_hh(self) -> np.ndarray:
        return self.h[1::2, 1]

    @classmethod
    def from_blocks(cls, blocks: np.ndarray, visibility=()) -> "ChannelMatrix":
        return cls(np.ascontiguousarray(blocks, dtype=complex).reshape(-1, 2), tuple(visibility))


def assemble_from_realizations(cfg: ScenarioConfig, realizations: list[PathRealization],
                               tx_gain: np.ndarray | None = None,
                               element_xpd: np.ndarray | None = None,
                               use_aoa: bool = False) -> ChannelMatrix:
    """Sum per-path, per-antenna 2x2 contributions J_n^T (beta a_n) Q(phi_n) X J_t."""
    a = cfg.array
    n = a.n_elements
    j_t = np.eye(2, dtype=complex) if tx_gain is None else np.asarray(tx_gain, dtype=complex)
    xpd = a.xpd_linear if element_xpd is None else np.asarray(element_xpd, dtype=float)
    blocks = np.zeros((n, 2, 2), dtype=complex)
    for p, r in zip(cfg.paths, realizations):
        d = path_distances(a, p)
        steer = steering_vector(a, p)
        g_c = copol_gain(a, p.aoa, d)
        jn = element_gain_matrix(g_c, crosspol_gain(g_c, xpd))
        phi = polarization_shift(p, a, deviation=0.0, pol_angle0=r.pol_angle0, use_aoa=use_aoa)
        q = rotation_matrix(phi + r.deviation)
        x = depolarization_matrix(p.chi, r.depol_phases)
        contrib = np.swapaxes(jn, -1, -2) @ q @ x @ j_t
        contrib *= (r.gain * steer * r.visibility)[:, None, None]
        blocks += contrib
    return ChannelMatrix.from_blocks(blocks, tuple(r.visibility for r in realizations))


def assemble_channel(cfg: ScenarioConfig, rng: np.random.Generator, **kwargs) -> ChannelMatrix:
    return assemble_from_realizations(cfg, realize_paths(cfg, rng), **kwargs)


def split_copol_crosspol(h: ChannelMatrix) -> tuple[ChannelMatrix, ChannelMatrix]:
    b = h.blocks
    diag = np.zeros_like(b)
    anti = np.zeros_like(b)
    diag[:, 0, 0] = b[:, 0, 0]
    diag[:, 1, 1] = b[:, 1, 1]
    anti[:, 0, 1] = b[:, 0, 1]
    anti[:, 1, 0] = b[:, 1, 0]
    return (ChannelMatrix.from_blocks(diag, h.visibility),
            ChannelMatrix.from_blocks(anti, h.visibility))


def measured_xpd(h: ChannelMatrix) -> float:
    """Ratio of total co-pol to total cross-pol power over all antennas."""
    b = h.blocks
    co = np.sum(np.abs(b[:, 0, 0]) ** 2 + np.abs(b[:, 1, 1]) ** 2)
    cross = np.sum(np.abs(b[:, 0, 1]) ** 2 + np.abs(b[:, 1, 0]) ** 2)
    return float(co / cross) if cross > 0 else float("inf")


def dump_channel(h: ChannelMatrix) -> str:
    """Column text: antenna (1-based) then re/im of h_VV, h_VH, h_HV, h_HH."""
    lines = ["# antenna re_vv im_vv re_vh im_vh re_hv im_hv re_hh im_hh"]
    for i, blk in enumerate(h.blocks):
        vals = [blk[0, 0], blk[0, 1], blk[1, 0], blk[1, 1]]
        lines.append(" ".join([str(i + 1)] + [f"{v.real:.17g} {v.imag:.17g}" for v in vals]))
    return "\n".join(lines) + "\n"
