"""Experiment configuration: array geometry, propagation paths, thresholds, seeds.

Scenario documents are YAML mappings (see ``docs/scenario.md``). Antenna
indices are 1-based in documents and 0-based everywhere else; the
conversion happens only in :func:`load_scenario` and :func:`dump_scenario`.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import yaml

SPEED_OF_LIGHT = 299792458.0


class ScenarioError(ValueError):
    """Raised when a scenario document cannot be parsed or violates a constraint.

    ``field`` names the offending key path (``paths[1].chi``) and ``line`` is
    the 1-based document line when known.
    """

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        self.field = field
        self.line = line
        where = []
        if field is not None:
            where.append(f"field '{field}'")
        if line is not None:
            where.append(f"line {line}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


@dataclass(frozen=True)
class ArrayConfig:
    """Uniform linear array description.

    ``pattern`` is one of ``"dipole"`` (f_co = sin), ``"patch"``
    (f_co = cos**pattern_k) or ``"isotropic"`` (f_co = 1).
    """

    n_elements: int = 256
    carrier_freq: float = 28e9
    spacing: float | None = None
    max_gain: float = 1.0
    pattern: str = "patch"
    pattern_k: float = 1.0
    xpd_db: float = 10.0

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_freq

    @property
    def element_spacing(self) -> float:
        return self.wavelength / 2 if self.spacing is None else self.spacing

    @property
    def aperture(self) -> float:
        return (self.n_elements - 1) * self.element_spacing

    @property
    def xpd_linear(self) -> float:
        return 10.0 ** (self.xpd_db / 10.0)


@dataclass(frozen=True)
class PathConfig:
    """One propagation path (tap).

    ``None`` for ``gain_phase``, ``pol_angle0`` or ``depol_phases`` means the
    value is drawn per realization. ``visibility`` holds 0-based antenna
    indices; when it is ``None`` a contiguous window covering ``vr_width`` of
    the array is placed at a random offset per realization.
    """

    distance: float = 30.0
    aoa: float = 0.0
    gain_magnitude: float = 1.0
    gain_phase: float | None = None
    pol_angle0: float | None = None
    chi: float = 0.1
    depol_phases: tuple[float, float, float, float] | None = None
    visibility: tuple[int, ...] | None = None
    vr_width: float = 1.0

    def vr_size(self, n_elements: int) -> int:
        if self.visibility is not None:
            return len(self.visibility)
        return vr_window_size(self.vr_width, n_elements)


def vr_window_size(width: float, n_elements: int) -> int:
    return max(1, min(n_elements, int(round(width * n_elements))))


def default_paths() -> tuple[PathConfig, ...]:
    return (
        PathConfig(distance=30.0, aoa=0.35, vr_width=0.5),
        PathConfig(distance=12.0, aoa=-0.5, vr_width=0.1),
    )


@dataclass(frozen=True)
class ScenarioConfig:
    array: ArrayConfig = field(default_factory=ArrayConfig)
    paths: tuple[PathConfig, ...] = field(default_factory=default_paths)
    noise_variance: float = 1e-6
    pol_deviation: float = 0.0
    sop_delta: float = math.pi / 4
    sop_theta: float = 0.0
    gamma_comm: float = 0.5
    gamma_radar: float = 2.0
    epsilon: float | None = None
    selection_mode: str = "fairness"
    adaptive_lambda: float = 0.5
    max_comm_antennas: int | None = None
    max_sense_antennas: int | None = None
    pfa: float = 1e-2
    ref_cells: int = 1
    mitigation_residual: float = 0.1
    snr_grid_db: tuple[float, ...] = tuple(float(s) for s in range(-10, 31, 5))
    seed: int = 0
    trials: int = 500

    @property
    def n_comm_cap(self) -> int:
        n = self.array.n_elements
        return n if self.max_comm_antennas is None else self.max_comm_antennas

    @property
    def n_sense_cap(self) -> int:
        n = self.array.n_elements
        return n if self.max_sense_antennas is None else self.max_sense_antennas

    @property
    def fairness_floor(self) -> int:
        """Smallest VR size across paths (the multi-VR selection floor)."""
        return min(p.vr_size(self.array.n_elements) for p in self.paths)

    def replace(self, **changes: Any) -> "ScenarioConfig":
        cfg = dataclasses.replace(self, **changes)
        validate_scenario(cfg)
        return cfg


# -- validation ---------------------------------------------------------------

def _fail(msg: str, name: str, lines: dict[str, int] | None = None) -> None:
    raise ScenarioError(msg, field=name, line=(lines or {}).get(name))


def validate_scenario(cfg: ScenarioConfig, lines: dict[str, int] | None = None) -> None:
    a = cfg.array
    n = a.n_elements
    if not isinstance(n, int) or n < 1:
        _fail("n_elements must be a positive integer", "n_elements", lines)
    if a.spacing is not None and not a.spacing > 0:
        _fail("spacing must be > 0", "spacing", lines)
    if not a.carrier_freq > 0:
        _fail("carrier_freq must be > 0", "carrier_freq", lines)
    if not a.max_gain > 0:
        _fail("max_gain must be > 0", "max_gain", lines)
    if a.pattern not in ("dipole", "patch", "isotropic"):
        _fail("pattern must be one of dipole, patch, isotropic", "pattern", lines)
    if a.pattern == "patch" and not a.pattern_k >= 0:
        _fail("pattern_k must be >= 0", "pattern_k", lines)
    if not cfg.paths:
        _fail("at least one path is required", "paths", lines)
    for i, p in enumerate(cfg.paths):
        pre = f"paths[{i}]"
        if not p.distance > 0:
            _fail("scatterer distance must be > 0", f"{pre}.distance", lines)
        if not 0.0 <= p.chi <= 1.0:
            _fail("chi must lie in [0, 1]", f"{pre}.chi", lines)
        if p.gain_magnitude < 0:
            _fail("gain magnitude must be >= 0", f"{pre}.gain", lines)
        if p.depol_phases is not None and len(p.depol_phases) != 4:
            _fail("depol_phases needs four angles", f"{pre}.depol_phases", lines)
        if p.visibility is not None:
            if len(p.visibility) == 0:
                _fail("visibility set must be non-empty", f"{pre}.visibility", lines)
            if min(p.visibility) < 0 or max(p.visibility) >= n:
                _fail(f"visibility indices must lie in 1..{n}", f"{pre}.visibility", lines)
        elif not 0.0 < p.vr_width <= 1.0:
            _fail("vr_width must lie in (0, 1]", f"{pre}.vr_width", lines)
    if not cfg.noise_variance > 0:
        _fail("noise_variance must be > 0", "noise_variance", lines)
    if cfg.pol_deviation < 0:
        _fail("pol_deviation must be >= 0", "pol_deviation", lines)
    if not 0.0 <= cfg.sop_delta <= math.pi / 2:
        _fail("sop delta must lie in [0, pi/2]", "sop_delta", lines)
    if not 0.0 <= cfg.sop_theta < 2 * math.pi:
        _fail("sop theta must lie in [0, 2*pi)", "sop_theta", lines)
    if not cfg.gamma_comm > 0:
        _fail("gamma_comm must be > 0", "gamma_comm", lines)
    if not cfg.gamma_radar > 0:
        _fail("gamma_radar must be > 0", "gamma_radar", lines)
    if cfg.epsilon is not None and cfg.epsilon < 0:
        _fail("epsilon must be >= 0", "epsilon", lines)
    if cfg.selection_mode not in ("fairness", "adaptive"):
        _fail("selection_mode must be fairness or adaptive", "selection_mode", lines)
    if not 0.0 < cfg.adaptive_lambda < 1.0:
        _fail("adaptive lambda must lie in (0, 1)", "adaptive_lambda", lines)
    for name, cap in (("max_comm_antennas", cfg.max_comm_antennas),
                      ("max_sense_antennas", cfg.max_sense_antennas)):
        if cap is not None and not 0 <= cap <= n:
            _fail(f"{name} must lie in [0, n_elements]", name, lines)
    if not 0.0 < cfg.pfa < 1.0:
        _fail("pfa must lie in (0, 1)", "pfa", lines)
    if not isinstance(cfg.ref_cells, int) or cfg.ref_cells < 1:
        _fail("ref_cells must be a positive integer", "ref_cells", lines)
    if not 0.0 <= cfg.mitigation_residual <= 1.0:
        _fail("mitigation_residual must lie in [0, 1]", "mitigation_residual", lines)
    if cfg.seed < 0 or cfg.seed >= 2**64:
        _fail("seed must be a 64-bit unsigned integer", "seed", lines)
    if not isinstance(cfg.trials, int) or cfg.trials < 1:
        _fail("trials must be a positive integer", "trials", lines)
    if len(cfg.paths) > 1:
        floor = cfg.fairness_floor
        if floor > cfg.n_comm_cap:
            _fail(f"fairness floor {floor} exceeds max_comm_antennas", "max_comm_antennas", lines)
        if floor > cfg.n_sense_cap:
            _fail(f"fairness floor {floor} exceeds max_sense_antennas", "max_sense_antennas", lines)


# -- document parsing -----------------------------------------------------------

_ARRAY_KEYS = {"n_elements", "carrier_freq", "spacing", "max_gain", "pattern", "pattern_k", "xpd_db"}
_PATH_KEYS = {"distance", "aoa", "gain", "gain_phase", "pol_angle0", "chi", "depol_phases",
              "visibility", "vr_width"}
_TOP_KEYS = {"noise_variance", "pol_deviation", "sop_delta", "sop_theta", "gamma_comm",
             "gamma_radar", "epsilon", "selection_mode", "adaptive_lambda", "max_comm_antennas",
             "max_sense_antennas", "pfa", "ref_cells", "mitigation_residual", "snr_grid_db",
             "seed", "trials", "chi", "paths"}


def _key_lines(node: yaml.Node, prefix: str = "", out: dict[str, int] | None = None) -> dict[str, int]:
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            name = f"{prefix}.{k.value}" if prefix else str(k.value)
            out[name] = k.start_mark.line + 1
            _key_lines(v, name, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            name = f"{prefix}[{i}]"
            out[name] = v.start_mark.line + 1
            _key_lines(v, name, out)
    return out


def _number(value: Any, name: str, lines: dict[str, int], kind=float) -> Any:
    if isinstance(value, bool):
        _fail("expected a number", name, lines)
    try:
        if kind is int:
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        return float(value)
    except (TypeError, ValueError):
        _fail(f"expected {'an integer' if kind is int else 'a number'}, got {value!r}", name, lines)


def _random_or_number(value: Any, name: str, lines: dict[str, int]) -> float | None:
    if value is None or value == "random":
        return None
    return _number(value, name, lines)


def _parse_visibility(value: Any, name: str, lines: dict[str, int]) -> tuple[int, ...]:
    # "1-64, 100" style ranges or a list of 1-based ints
    items: list[int] = []
    if isinstance(value, str):
        for chunk in value.split(","):
            chunk = chunk.strip()
            if not chunk:
                continue
            try:
                if "-" in chunk:
                    lo, hi = (int(x) for x in chunk.split("-", 1))
                    items.extend(range(lo, hi + 1))
                else:
                    items.append(int(chunk))
            except ValueError:
                _fail(f"cannot parse visibility range {chunk!r}", name, lines)
    elif isinstance(value, list):
        items = [_number(v, name, lines, int) for v in value]
    else:
        _fail("visibility must be a list of indices or a range string", name, lines)
    return tuple(sorted({i - 1 for i in items}))


def _parse_path(raw: Any, i: int, default_chi: float, lines: dict[str, int]) -> PathConfig:
    pre = f"paths[{i}]"
    if not isinstance(raw, dict):
        _fail("each path must be a mapping", pre, lines)
    unknown = set(raw) - _PATH_KEYS
    if unknown:
        k = sorted(unknown)[0]
        _fail(f"unknown path key {k!r}", f"{pre}.{k}", lines)
    kw: dict[str, Any] = {"chi": default_chi}
    if "distance" in raw:
        kw["distance"] = _number(raw["distance"], f"{pre}.distance", lines)
    if "aoa" in raw:
        kw["aoa"] = _number(raw["aoa"], f"{pre}.aoa", lines)
    if "gain" in raw:
        kw["gain_magnitude"] = _number(raw["gain"], f"{pre}.gain", lines)
    if "gain_phase" in raw:
        kw["gain_phase"] = _random_or_number(raw["gain_phase"], f"{pre}.gain_phase", lines)
    if "pol_angle0" in raw:
        kw["pol_angle0"] = _random_or_number(raw["pol_angle0"], f"{pre}.pol_angle0", lines)
    if "chi" in raw:
        kw["chi"] = _number(raw["chi"], f"{pre}.chi", lines)
    if "depol_phases" in raw:
        v = raw["depol_phases"]
        if v is None or v == "random":
            kw["depol_phases"] = None
        elif isinstance(v, list) and len(v) == 4:
            kw["depol_phases"] = tuple(_number(x, f"{pre}.depol_phases", lines) for x in v)
        else:
            _fail("depol_phases must be 'random' or four angles", f"{pre}.depol_phases", lines)
    if "visibility" in raw and raw["visibility"] not in (None, "random"):
        kw["visibility"] = _parse_visibility(raw["visibility"], f"{pre}.visibility", lines)
    if "vr_width" in raw:
        kw["vr_width"] = _number(raw["vr_width"], f"{pre}.vr_width", lines)
    return PathConfig(**kw)


def load_scenario(source: str) -> ScenarioConfig:
    """Parse a scenario document into a validated :class:`ScenarioConfig`.

    Omitted keys take their documented defaults; unknown keys are rejected.
    """
    try:
        node = yaml.compose(source)
        raw = yaml.safe_load(source)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ScenarioError(f"malformed scenario document: {getattr(exc, 'problem', exc)}",
                            line=line) from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ScenarioError("scenario document must be a key-value mapping", line=1)
    lines = _key_lines(node) if node is not None else {}

    unknown = set(raw) - _TOP_KEYS - _ARRAY_KEYS
    if unknown:
        k = sorted(unknown)[0]
        _fail(f"unknown key {k!r}", k, lines)

    akw: dict[str, Any] = {}
    for k in ("carrier_freq", "max_gain", "pattern_k", "xpd_db"):
        if k in raw:
            akw[k] = _number(raw[k], k, lines)
    if "n_elements" in raw:
        akw["n_elements"] = _number(raw["n_elements"], "n_elements", lines, int)
    if raw.get("spacing") is not None:
        akw["spacing"] = _number(raw["spacing"], "spacing", lines)
    if "pattern" in raw:
        akw["pattern"] = str(raw["pattern"])
    array = ArrayConfig(**akw)

    default_chi = _number(raw.get("chi", 0.1), "chi", lines)
    if "paths" in raw:
        if not isinstance(raw["paths"], list):
            _fail("paths must be a list", "paths", lines)
        paths = tuple(_parse_path(p, i, default_chi, lines) for i, p in enumerate(raw["paths"]))
    else:
        paths = tuple(dataclasses.replace(p, chi=default_chi) for p in default_paths())

    kw: dict[str, Any] = {"array": array, "paths": paths}
    for k in ("noise_variance", "pol_deviation", "sop_delta", "sop_theta", "gamma_comm",
              "gamma_radar", "adaptive_lambda", "pfa", "mitigation_residual"):
        if k in raw:
            kw[k] = _number(raw[k], k, lines)
    for k in ("ref_cells", "seed", "trials"):
        if k in raw:
            kw[k] = _number(raw[k], k, lines, int)
    for k in ("max_comm_antennas", "max_sense_antennas"):
        if raw.get(k) is not None:
            kw[k] = _number(raw[k], k, lines, int)
    if raw.get("epsilon") is not None:
        kw["epsilon"] = _number(raw["epsilon"], "epsilon", lines)
    if "selection_mode" in raw:
        kw["selection_mode"] = str(raw["selection_mode"])
    if "snr_grid_db" in raw:
        grid = raw["snr_grid_db"]
        if not isinstance(grid, list) or not grid:
            _fail("snr_grid_db must be a non-empty list", "snr_grid_db", lines)
        kw["snr_grid_db"] = tuple(_number(g, "snr_grid_db", lines) for g in grid)

    cfg = ScenarioConfig(**kw)
    validate_scenario(cfg, lines)
    return cfg


def load_scenario_file(path: str) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return load_scenario(fh.read())


def scenario_to_dict(cfg: ScenarioConfig) -> dict[str, Any]:
    """Document-shaped dict (1-based visibility) suitable for YAML or JSON."""
    a = cfg.array
    out: dict[str, Any] = {
        "n_elements": a.n_elements,
        "carrier_freq": a.carrier_freq,
        "spacing": a.spacing,
        "max_gain": a.max_gain,
        "pattern": a.pattern,
        "pattern_k": a.pattern_k,
        "xpd_db": a.xpd_db,
    }
    paths = []
    for p in cfg.paths:
        d: dict[str, Any] = {
            "distance": p.distance,
            "aoa": p.aoa,
            "gain": p.gain_magnitude,
            "gain_phase": "random" if p.gain_phase is None else p.gain_phase,
            "pol_angle0": "random" if p.pol_angle0 is None else p.pol_angle0,
            "chi": p.chi,
            "depol_phases": "random" if p.depol_phases is None else list(p.depol_phases),
        }
        if p.visibility is not None:
            d["visibility"] = [i + 1 for i in p.visibility]
        else:
            d["vr_width"] = p.vr_width
        paths.append(d)
    out["paths"] = paths
    for k in ("noise_variance", "pol_deviation", "sop_delta", "sop_theta", "gamma_comm",
              "gamma_radar", "epsilon", "selection_mode", "adaptive_lambda", "max_comm_antennas",
              "max_sense_antennas", "pfa", "ref_cells", "mitigation_residual", "seed", "trials"):
        out[k] = getattr(cfg, k)
    out["snr_grid_db"] = list(cfg.snr_grid_db)
    return out


def dump_scenario(cfg: ScenarioConfig) -> str:
    return yaml.safe_dump(scenario_to_dict(cfg), sort_keys=False)


# -- derived checks and randomness ---------------------------------------------------

@dataclass(frozen=True)
class NearFieldReport:
    fraunhofer_distance: float
    distances: tuple[float, ...]
    near_field: tuple[bool, ...]


def near_field_check(cfg: ScenarioConfig) -> NearFieldReport:
    """Flag each path whose scatterer sits inside the Fraunhofer distance 2D^2/lambda."""
    a = cfg.array
    limit = 2.0 * a.aperture ** 2 / a.wavelength
    dists = tuple(p.distance for p in cfg.paths)
    return NearFieldReport(limit, dists, tuple(d < limit for d in dists))


def rng_stream(seed: int, trial_index: int) -> np.random.Generator:
    """Independent, reproducible generator for one trial."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(trial_index,)))
