"""Monte Carlo sweeps, result files, complexity tables and figure data."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .channel import ChannelMatrix, assemble_channel, dump_channel, polarization_shift
from .metrics import (MetricsReport, pd_analytic, roc_curve, ser_with_as, snr_improvement)
from .scenario import PathConfig, ScenarioConfig, scenario_to_dict
from .selection import (SelectionResult, baseline_select, complexity_counts, default_epsilon,
                        power_profile, select_antennas, PowerProfile)
from .waveforms import (Echo, RadarParams, chirp_generate, delay_doppler_map, dump_ddmap,
                        find_peaks_2d, make_sop, map_bits, synthesize_echoes, transmit_receive)

ARMS = ("proposed_as", "all_on", "random_k", "top_power_k", "no_mitigation")
AXES = ("snr", "pol_shift", "n_elements", "chi")
DEFAULT_ARMS = ("proposed_as", "all_on", "random_k")
FIGURE_KINDS = ("pol_heatmap", "power_imbalance", "sinr_vs_snr", "se", "ser", "pd", "roc", "ddmap")

PROBE_SAMPLES = 64  # samples averaged for the per-antenna power profile

METRIC_COLUMNS = ("sinr_db", "se", "p1_objective", "ser_analytic", "pd_analytic", "radar_sinr_db",
                  "chi_as", "snr_improvement")
RECORD_COLUMNS = (("trial", "arm", "axis", "axis_value", "seed") + METRIC_COLUMNS
                  + ("n_comm", "n_sense", "n_discarded", "feasible", "comparisons", "error", "wall_time"))


@dataclass(frozen=True)
class SweepSpec:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    sweep_axis: str = "snr"
    axis_values: tuple = ()
    arms: tuple = DEFAULT_ARMS
    trials_per_point: int | None = None  # None: scenario.trials
    snr_db: float = 20.0  # fixed SNR when the axis is not snr
    k: int | None = None  # baseline subset size; None: N // 2
    workers: int = 1

    def __post_init__(self):
        if self.sweep_axis not in AXES:
            raise ValueError(f"sweep_axis must be one of {AXES}")
        vals = tuple(self.axis_values) or (self.scenario.snr_grid_db if self.sweep_axis == "snr" else ())
        if not vals:
            raise ValueError("axis_values must be non-empty")
        if list(vals) != sorted(vals):
            raise ValueError("axis_values must be sorted")
        object.__setattr__(self, "axis_values", tuple(float(v) for v in vals))
        if not self.arms:
            raise ValueError("arms must be non-empty")
        bad = [a for a in self.arms if a not in ARMS]
        if bad:
            raise ValueError(f"unknown arm(s) {bad}; choose from {ARMS}")
        object.__setattr__(self, "arms", tuple(self.arms))
        if self.trials < 1:
            raise ValueError("trials_per_point must be >= 1")

    @property
    def trials(self) -> int:
        return self.scenario.trials if self.trials_per_point is None else int(self.trials_per_point)

    def resolved(self) -> dict:
        return {"scenario": scenario_to_dict(self.scenario), "sweep_axis": self.sweep_axis,
                "axis_values": list(self.axis_values), "arms": list(self.arms), "trials": self.trials,
                "snr_db": self.snr_db, "k": self.k}


@dataclass
class TrialRecord:
    trial: int
    arm: str
    axis: str
    axis_value: float
    seed: int
    report: MetricsReport
    selection: dict
    wall_time: float = 0.0
    error: str = ""

    def row(self) -> dict:
        r = {"trial": self.trial, "arm": self.arm, "axis": self.axis, "axis_value": self.axis_value,
             "seed": self.seed}
        rep = self.report.as_dict()
        for c in METRIC_COLUMNS:
            r[c] = rep.get(c, float("nan"))
        for c in ("n_comm", "n_sense", "n_discarded", "feasible", "comparisons"):
            r[c] = self.selection.get(c, "")
        r["error"] = self.error
        r["wall_time"] = self.wall_time
        return r


@dataclass
class ArmReport(MetricsReport):
    p1_objective: float = float("nan")


# -- one trial -----------------------------------------------------------------------

def apply_axis(cfg: ScenarioConfig, axis: str, value: float) -> ScenarioConfig:
    if axis == "snr":
        return cfg
    if axis == "pol_shift":
        return cfg.replace(pol_deviation=float(value))
    if axis == "n_elements":
        return cfg.replace(array=dataclasses.replace(cfg.array, n_elements=int(value)))
    if axis == "chi":
        return cfg.replace(paths=tuple(dataclasses.replace(p, chi=float(value)) for p in cfg.paths))
    raise ValueError(f"unknown axis {axis!r}")


@dataclass(frozen=True)
class BranchPowers:
    """Expected per-antenna powers for the transmitted SOP."""

    s: np.ndarray  # H co-pol
    i: np.ndarray  # V leaking into H
    v: np.ndarray  # V co-pol
    j: np.ndarray  # H leaking into V

    @classmethod
    def from_channel(cls, h: ChannelMatrix, weights) -> "BranchPowers":
        w_h, w_v = (abs(w) ** 2 for w in weights)
        return cls(np.abs(h.h_hh) ** 2 * w_h, np.abs(h.h_hv) ** 2 * w_v,
                   np.abs(h.h_vv) ** 2 * w_v, np.abs(h.h_vh) ** 2 * w_h)


def _noise_variance(h: ChannelMatrix, pw: BranchPowers, snr_db: float) -> float:
    union = np.logical_or.reduce(h.visibility) if h.visibility else np.ones(h.n_elements, bool)
    ref = float(np.mean((pw.s + pw.v)[union] / 2.0)) if union.any() else 0.0
    if ref <= 0:
        ref = 1.0
    return ref / 10.0 ** (snr_db / 10.0)


def arm_metrics(sel: SelectionResult, pw: BranchPowers, noise_var: float, residual: float,
                pfa: float) -> ArmReport:
    """Comm and radar figures of merit for one selection (powers summed over each role)."""
    r2 = residual ** 2
    rep = ArmReport()
    c = sel.comm_mask
    if c.any():
        sig, interf, noise = pw.s[c].sum(), r2 * pw.i[c].sum(), c.sum() * noise_var
        sinr = sig / (interf + noise)
        rep.sinr_db = 10 * math.log10(sinr) if sinr > 0 else -math.inf
        rep.se = math.log2(1.0 + sinr)
        per = pw.s[c] / (r2 * pw.i[c] + noise_var)
        rep.p1_objective = float(np.sum(np.log2(1.0 + per)))
        rep.chi_as = float(interf / sig) if sig > 0 else math.inf
        rep.ser_analytic = float(ser_with_as(sig / noise, rep.chi_as)) if sig > 0 else 0.5
        rep.snr_improvement = snr_improvement(c, pw.s, r2 * pw.i).ratio_total
    else:
        # empty role set: post-selection metrics are undefined, counted as an outage by aggregate()
        rep.p1_objective = 0.0
    s = sel.sense_mask
    if s.any():
        sig, interf, noise = pw.v[s].sum(), r2 * pw.j[s].sum(), s.sum() * noise_var
        sinr = sig / (interf + noise)
        rep.radar_sinr_db = 10 * math.log10(sinr) if sinr > 0 else -math.inf
        rep.pd_analytic = float(pd_analytic(sinr, pfa))
    return rep


def _arm_selection(arm: str, cfg: ScenarioConfig, profile: PowerProfile, vis, k: int,
                   rng: np.random.Generator) -> SelectionResult:
    if arm in ("proposed_as", "no_mitigation"):
        eps = cfg.epsilon if cfg.epsilon is not None else default_epsilon(profile)
        return select_antennas(profile, vis, eps, cfg.gamma_comm, cfg.gamma_radar, cfg.selection_mode,
                               cfg.adaptive_lambda, cfg.max_comm_antennas, cfg.max_sense_antennas,
                               strict=False)
    kind = {"all_on": "all_on", "random_k": "random", "top_power_k": "top_power"}[arm]
    union = np.logical_or.reduce(vis)
    sub = PowerProfile.from_array(profile.as_array()[union])
    inner = baseline_select(kind, sub, rng, None if kind == "all_on" else min(k, int(union.sum())))
    roles = np.zeros(profile.n, dtype=np.int8)
    roles[union] = inner.roles
    return SelectionResult.from_roles(roles)


def _arm_rng(seed: int, trial: int, arm: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(trial, 1 + ARMS.index(arm))))


def run_trial(spec: SweepSpec, trial: int) -> list[TrialRecord]:
    """All (axis value, arm) records for one trial index, sharing its channel draws."""
    out = []
    base = spec.scenario
    seed = base.seed
    for value in spec.axis_values:
        t0 = time.perf_counter()
        snr_db = value if spec.sweep_axis == "snr" else spec.snr_db
        try:
            cfg = apply_axis(base, spec.sweep_axis, value)
            rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(trial,)))
            h = assemble_channel(cfg, rng)
            pw = BranchPowers.from_channel(h, (np.cos(cfg.sop_delta), np.sin(cfg.sop_delta)))
            nv = _noise_variance(h, pw, snr_db)
            probe_h = map_bits(rng.integers(0, 2, 2 * PROBE_SAMPLES), "QPSK")
            probe_v = chirp_generate().samples[:PROBE_SAMPLES]
            sig = make_sop(cfg.sop_delta, cfg.sop_theta, probe_h, probe_v)
            bundle = transmit_receive(h, sig, nv, rng)
            profile = power_profile(bundle, h)
            k = spec.k or cfg.array.n_elements // 2
        except Exception as exc:  # recorded, never raised out of the sweep
            for arm in spec.arms:
                out.append(TrialRecord(trial, arm, spec.sweep_axis, value, seed, ArmReport(), {},
                                       time.perf_counter() - t0, f"{type(exc).__name__}: {exc}"))
            continue
        for arm in spec.arms:
            t1 = time.perf_counter()
            try:
                sel = _arm_selection(arm, cfg, profile, list(h.visibility), k, _arm_rng(seed, trial, arm))
                residual = cfg.mitigation_residual if arm in ("proposed_as", "random_k", "top_power_k") else 1.0
                rep = arm_metrics(sel, pw, nv, residual, cfg.pfa)
                out.append(TrialRecord(trial, arm, spec.sweep_axis, value, seed, rep, sel.summary(),
                                       time.perf_counter() - t1))
            except Exception as exc:
                out.append(TrialRecord(trial, arm, spec.sweep_axis, value, seed, ArmReport(), {},
                                       time.perf_counter() - t1, f"{type(exc).__name__}: {exc}"))
    return out


def _sort_key(spec: SweepSpec):
    ax = {v: i for i, v in enumerate(spec.axis_values)}
    arm = {a: i for i, a in enumerate(spec.arms)}
    return lambda r: (ax[r.axis_value], arm[r.arm], r.trial)


def run_sweep(spec: SweepSpec, stream=None) -> list[TrialRecord]:
    """Every (axis value, arm, trial) record, ordered by that key.

    ``stream`` is an optional callable receiving each trial's records as
    they complete (trial order), e.g. :meth:`CsvStream.write`.
    """
    trials = range(spec.trials)
    records: list[TrialRecord] = []
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            batches = pool.map(run_trial, [spec] * len(trials), trials, chunksize=max(1, len(trials) // (4 * spec.workers)))
            for batch in batches:
                if stream:
                    stream(batch)
                records.extend(batch)
    else:
        for t in trials:
            batch = run_trial(spec, t)
            if stream:
                stream(batch)
            records.extend(batch)
    records.sort(key=_sort_key(spec))
    return records


# -- persistence -------------------------------------------------------------------

def header_lines(config: dict) -> list[str]:
    return [f"# xlpol {__version__}", "# config: " + json.dumps(config, sort_keys=True, default=str)]


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


class CsvStream:
    """Append records to a CSV as they are produced."""

    def __init__(self, path: str, config: dict):
        self.path = path
        try:
            self._fh = open(path, "w", newline="", encoding="utf-8")
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc}") from exc
        self._fh.write("\n".join(header_lines(config)) + "\n")
        self._w = csv.writer(self._fh)
        self._w.writerow(RECORD_COLUMNS)

    def write(self, records):
        for r in records:
            row = r.row()
            self._w.writerow([_fmt(row[c]) for c in RECORD_COLUMNS])
        self._fh.flush()

    def close(self):
        self._fh.close()


def aggregate(records) -> list[dict]:
    """Mean and 95 % half-width of each metric per (axis value, arm), independent of record order."""
    groups: dict[tuple, list] = {}
    for r in records:
        groups.setdefault((r.axis_value, r.arm), []).append(r)
    out = []
    for (value, arm), rs in groups.items():
        rs = sorted(rs, key=lambda r: r.trial)  # fixed summation order
        ok = [r for r in rs if not r.error]
        row = {"axis": rs[0].axis, "axis_value": value, "arm": arm, "n": len(rs),
               "n_errors": len(rs) - len(ok),
               "comm_outages": sum(1 for r in ok if r.selection.get("n_comm", 0) == 0),
               "sense_outages": sum(1 for r in ok if r.selection.get("n_sense", 0) == 0)}
        for c in METRIC_COLUMNS:
            x = np.array([r.row()[c] for r in rs if not r.error], dtype=float)
            x = x[np.isfinite(x)]
            if x.size:
                row[c + "_mean"] = float(np.mean(x))
                row[c + "_ci"] = float(1.96 * np.std(x, ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0
            else:
                row[c + "_mean"] = row[c + "_ci"] = float("nan")
        out.append(row)
    out.sort(key=lambda d: (d["axis_value"], ARMS.index(d["arm"])))
    return out


def _write(path: str, text: str) -> str:
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def _csv_text(config: dict, columns, rows) -> str:
    buf = io.StringIO()
    buf.write("\n".join(header_lines(config)) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row.get(c, "")) for c in columns])
    return buf.getvalue()


def _json_safe(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None if math.isnan(v) else ("inf" if v > 0 else "-inf")
    return v


def emit_results(records, fmt: str = "csv", out_dir: str = ".", config: dict | None = None,
                 stem: str = "records") -> list[str]:
    """Write per-record and aggregate files; returns the paths written."""
    if fmt not in ("csv", "json", "both"):
        raise ValueError("format must be csv, json or both")
    if not os.path.isdir(out_dir):
        try:
            os.makedirs(out_dir, exist_ok=True)
        except OSError as exc:
            raise OSError(f"cannot create {out_dir}: {exc}") from exc
    config = config or {}
    rows = [r.row() for r in records]
    agg = aggregate(records)
    agg_cols = ["axis", "axis_value", "arm", "n", "n_errors", "comm_outages", "sense_outages"] + [f"{c}_{s}" for c in METRIC_COLUMNS
                                                                 for s in ("mean", "ci")]
    paths = []
    if fmt in ("csv", "both"):
        paths.append(_write(os.path.join(out_dir, f"{stem}.csv"), _csv_text(config, RECORD_COLUMNS, rows)))
        paths.append(_write(os.path.join(out_dir, f"{stem}_aggregate.csv"), _csv_text(config, agg_cols, agg)))
    if fmt in ("json", "both"):
        head = {"tool": f"xlpol {__version__}", "config": config}
        payload = {**head, "columns": list(RECORD_COLUMNS),
                   "records": [{c: _json_safe(row[c]) for c in RECORD_COLUMNS} for row in rows]}
        paths.append(_write(os.path.join(out_dir, f"{stem}.json"), json.dumps(payload, indent=1, default=str)))
        payload = {**head, "columns": agg_cols,
                   "aggregate": [{c: _json_safe(a.get(c)) for c in agg_cols} for a in agg]}
        paths.append(_write(os.path.join(out_dir, f"{stem}_aggregate.json"), json.dumps(payload, indent=1, default=str)))
    return paths


def read_csv_records(path: str) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


# -- complexity --------------------------------------------------------------------

def _synthetic_profile(n: int, rng: np.random.Generator) -> PowerProfile:
    co = rng.exponential(1.0, size=(n, 2))
    cross = rng.exponential(0.1, size=(n, 2))
    return PowerProfile(co[:, 0], co[:, 1], cross[:, 0], cross[:, 1])


def _vr_windows(n: int, l: int) -> list[np.ndarray]:
    # l equal, contiguous windows tiling the array
    edges = np.linspace(0, n, l + 1).round().astype(int)
    if l > n:
        raise ValueError("more visibility regions than antennas")
    out = []
    for a, b in zip(edges[:-1], edges[1:]):
        m = np.zeros(n, dtype=bool)
        m[a:max(b, a + 1)] = True
        out.append(m)
    return out


def complexity_benchmark(n_grid, k_grid=(1,), l_grid=(1,), seed: int = 0) -> list[dict]:
    """Measured proposed-pipeline counters next to the analytic models.

    One greedy pass plus VR fairness runs per user (K independent profiles).
    """
    n_grid, k_grid, l_grid = list(n_grid), list(k_grid), list(l_grid)
    if not (n_grid and k_grid and l_grid):
        raise ValueError("grids must be non-empty")
    rows = []
    for n in n_grid:
        for k in k_grid:
            for l in l_grid:
                rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(n, k, l)))
                vrs = _vr_windows(n, l)
                tot = {"comparisons": 0, "sorts": 0, "divisions": 0}
                for _ in range(k):
                    prof = _synthetic_profile(n, rng)
                    res = select_antennas(prof, vrs, default_epsilon(prof), strict=False)
                    for key in tot:
                        tot[key] += res.counters[key]
                row = {"n": n, "k": k, "l": l, **{f"measured_{key}": v for key, v in tot.items()}}
                for scheme in ("proposed", "hrnp", "ls", "ga", "pso", "ga_quasi"):
                    row[f"model_{scheme}"] = complexity_counts(n, k, l, scheme)
                rows.append(row)
    return rows


def loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


# -- figure data -------------------------------------------------------------------

def circular_variance(angles, axis=-1):
    return 1.0 - np.abs(np.mean(np.exp(1j * np.asarray(angles)), axis=axis))


def pol_heatmap(cfg: ScenarioConfig, distances=None, aoas=None, n_elements: int | None = None,
                pol_angle0: float = 0.0) -> dict:
    """Per-element polarization angle over (distance, element) and (angle of arrival, element)."""
    a = cfg.array if n_elements is None else dataclasses.replace(cfg.array, n_elements=int(n_elements))
    distances = np.linspace(1.0, 100.0, 100) if distances is None else np.asarray(distances, float)
    aoas = np.linspace(-np.pi / 3, np.pi / 3, 61) if aoas is None else np.asarray(aoas, float)
    by_d = np.array([polarization_shift(PathConfig(distance=d, aoa=0.0), a, pol_angle0=pol_angle0)
                     for d in distances])
    d_ref = cfg.paths[0].distance
    by_phi = np.array([polarization_shift(PathConfig(distance=d_ref, aoa=phi), a, pol_angle0=pol_angle0,
                                          use_aoa=True) for phi in aoas])
    return {"distances": distances, "aoas": aoas, "angle_by_distance": by_d, "angle_by_aoa": by_phi,
            "variance_by_distance": circular_variance(by_d), "variance_by_aoa": circular_variance(by_phi)}


def power_imbalance(cfg: ScenarioConfig, trial: int = 0) -> dict:
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(trial,)))
    h = assemble_channel(cfg, rng)
    pw = BranchPowers.from_channel(h, (np.cos(cfg.sop_delta), np.sin(cfg.sop_delta)))
    return {"antenna": np.arange(1, h.n_elements + 1), "p_h": pw.s, "p_v": pw.v,
            "px_v_to_h": pw.i, "px_h_to_v": pw.j}


@dataclass(frozen=True)
class DdScene:
    """One target seen on the V branch plus a clutter echo that reaches V only through leakage."""

    target: Echo = Echo(delay=600, doppler=9765.625, amplitude=1.0)  # doppler bin +2 of 8
    clutter: Echo = Echo(delay=1400, doppler=-4882.8125, amplitude=1.0)  # doppler bin -1
    noise_to_signal: float = 10.0  # per-sample noise power over mean |h_VV|^2
    guard_range: int = 24
    params: RadarParams = RadarParams()


def ddmap_scene(h: ChannelMatrix, sense_mask, residual: float, rng: np.random.Generator,
                scene: DdScene = DdScene()) -> np.ndarray:
    """Delay-Doppler map of the V branch after maximum-ratio combining over ``sense_mask``.

    Each antenna sees h_VV times the target echo plus residual*h_VH times the
    clutter echo plus noise; combining weights are conj(h_VV). The map is
    normalized by the combined co-pol energy.
    """
    idx = np.flatnonzero(np.asarray(sense_mask, bool))
    if idx.size == 0:
        raise ValueError("no sensing antennas")
    g = h.h_vv[idx]
    energy = float(np.sum(np.abs(g) ** 2))
    if energy == 0:
        raise ValueError("selected sensing antennas carry no co-pol energy")
    chirp = chirp_generate()
    p = scene.params
    clt_amp = residual * complex(np.sum(np.conj(g) * h.h_vh[idx]))
    y = synthesize_echoes(chirp, [dataclasses.replace(scene.target, amplitude=scene.target.amplitude * energy),
                                  dataclasses.replace(scene.clutter, amplitude=scene.clutter.amplitude * clt_amp)],
                          p)
    # sum_n conj(g_n) w_n has variance sigma^2 * energy
    sigma2 = scene.noise_to_signal * energy / idx.size
    sd = math.sqrt(sigma2 * energy / 2)
    y = y + sd * (rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape))
    return delay_doppler_map(y, chirp, p) / energy


def spurious_peaks(amp: np.ndarray, scene: DdScene = DdScene(), floor_db: float = -20.0):
    """Peaks above the floor that are not the target (outside a guard around its bin)."""
    dop = scene.params.doppler_axis()
    t_col = int(np.argmin(np.abs(dop - scene.target.doppler)))
    peaks = find_peaks_2d(amp, floor_db)
    return [pk for pk in peaks if not (abs(pk[0] - scene.target.delay) <= scene.guard_range
                                       and min(abs(pk[1] - t_col), scene.params.n_pulses - abs(pk[1] - t_col)) <= 1)]


def ddmap_comparison(cfg: ScenarioConfig, trial: int = 0, scene: DdScene = DdScene()) -> dict:
    """Maps for all antennas without mitigation and for the proposed sensing set with mitigation."""
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(trial,)))
    h = assemble_channel(cfg, rng)
    pw = BranchPowers.from_channel(h, (np.cos(cfg.sop_delta), np.sin(cfg.sop_delta)))
    prof = PowerProfile(pw.s, pw.v, pw.j, pw.i)
    sel = select_antennas(prof, list(h.visibility), cfg.epsilon, cfg.gamma_comm, cfg.gamma_radar,
                          cfg.selection_mode, cfg.adaptive_lambda, cfg.max_comm_antennas,
                          cfg.max_sense_antennas, strict=False)
    union = np.logical_or.reduce(h.visibility)
    noise_rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(trial, 99)))
    no_as = ddmap_scene(h, union, 1.0, noise_rng, scene)
    with_as = ddmap_scene(h, sel.sense_mask, cfg.mitigation_residual, noise_rng, scene)
    return {"no_as": no_as, "with_as": with_as, "spurious_no_as": spurious_peaks(no_as, scene),
            "spurious_with_as": spurious_peaks(with_as, scene), "n_sense": int(sel.sense_mask.sum())}


def single_target_map(scene: DdScene = DdScene()) -> np.ndarray:
    chirp = chirp_generate()
    return delay_doppler_map(synthesize_echoes(chirp, [scene.target], scene.params), chirp, scene.params)


def figure_data(kind: str, spec: SweepSpec | None = None, out_dir: str | None = None, **kw) -> dict:
    """Gridded data for one figure kind; written under ``out_dir`` when given."""
    if kind not in FIGURE_KINDS:
        raise ValueError(f"unknown figure kind {kind!r}; choose from {FIGURE_KINDS}")
    spec = spec or SweepSpec()
    cfg = spec.scenario
    config = {"kind": kind, **spec.resolved()}
    files: dict[str, str] = {}
    if kind == "pol_heatmap":
        data = pol_heatmap(cfg, **kw)
        if out_dir:
            files["by_distance"] = _grid_file(out_dir, "pol_heatmap_distance.csv", config, "distance",
                                              data["distances"], data["angle_by_distance"])
            files["by_aoa"] = _grid_file(out_dir, "pol_heatmap_aoa.csv", config, "aoa",
                                         data["aoas"], data["angle_by_aoa"])
    elif kind == "power_imbalance":
        data = power_imbalance(cfg, **kw)
        if out_dir:
            rows = [dict(zip(data, vals)) for vals in zip(*data.values())]
            files["table"] = _write(os.path.join(out_dir, "power_imbalance.csv"),
                                    _csv_text(config, list(data), rows))
    elif kind in ("sinr_vs_snr", "se", "ser", "pd"):
        if spec.sweep_axis != "snr":
            raise ValueError(f"{kind} needs an snr sweep")
        records = run_sweep(spec)
        agg = aggregate(records)
        col = {"sinr_vs_snr": "sinr_db", "se": "se", "ser": "ser_analytic", "pd": "pd_analytic"}[kind]
        data = {"snr_db": list(spec.axis_values), "arms": list(spec.arms),
                "mean": {a: [g[col + "_mean"] for g in agg if g["arm"] == a] for a in spec.arms},
                "ci": {a: [g[col + "_ci"] for g in agg if g["arm"] == a] for a in spec.arms},
                "aggregate": agg}
        if out_dir:
            cols = ["snr_db"] + [f"{a}_{s}" for a in spec.arms for s in ("mean", "ci")]
            rows = [{"snr_db": s, **{f"{a}_mean": data["mean"][a][i] for a in spec.arms},
                     **{f"{a}_ci": data["ci"][a][i] for a in spec.arms}} for i, s in enumerate(spec.axis_values)]
            files["table"] = _write(os.path.join(out_dir, f"{kind}.csv"), _csv_text(config, cols, rows))
    elif kind == "roc":
        pfa_grid = np.asarray(kw.get("pfa_grid", np.logspace(-3, -1, 21)))
        snr = kw.get("snr_db", spec.snr_db)
        sub = SweepSpec(cfg, "snr", (snr,), spec.arms, spec.trials, spec.snr_db, spec.k, spec.workers)
        agg = aggregate(run_sweep(sub))
        data = {"pfa": pfa_grid, "curves": {}, "mean_sinr": {}}
        for g in agg:
            # mean linear SINR per arm
            sinr = 10 ** (g["radar_sinr_db_mean"] / 10) if math.isfinite(g["radar_sinr_db_mean"]) else 0.0
            data["mean_sinr"][g["arm"]] = sinr
            data["curves"][g["arm"]] = [pd for _, pd in roc_curve(sinr, pfa_grid)]
        if out_dir:
            cols = ["pfa"] + list(data["curves"])
            rows = [{"pfa": p, **{a: data["curves"][a][i] for a in data["curves"]}} for i, p in enumerate(pfa_grid)]
            files["table"] = _write(os.path.join(out_dir, "roc.csv"), _csv_text(config, cols, rows))
    else:
        data = ddmap_comparison(cfg, **kw)
        if out_dir:
            for key in ("no_as", "with_as"):
                files[key] = _write(os.path.join(out_dir, f"ddmap_{key}.txt"),
                                    "\n".join(header_lines(config)) + "\n" + dump_ddmap(data[key]))
    data["files"] = files
    return data


def _grid_file(out_dir, name, config, axis_name, axis, mat) -> str:
    cols = [axis_name] + [f"el{i + 1}" for i in range(mat.shape[1])]
    rows = [{axis_name: float(x), **{f"el{i + 1}": float(v) for i, v in enumerate(row)}}
            for x, row in zip(axis, mat)]
    return _write(os.path.join(out_dir, name), _csv_text(config, cols, rows))


def dump_trial_channel(cfg: ScenarioConfig, trial: int = 0) -> str:
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(trial,)))
    return dump_channel(assemble_channel(cfg, rng))
