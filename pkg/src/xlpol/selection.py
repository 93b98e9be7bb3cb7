"""Greedy polarization-aware antenna selection, VR fairness, and reference selectors.

Roles are encoded per antenna as ``0`` (discarded), ``1`` (communication, H
branch) and ``2`` (sensing, V branch).
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_mask, check_profile_array
from .channel import ChannelMatrix
from .waveforms import ReceivedBundle, cross_terms

DISCARD, COMM, SENSE = 0, 1, 2


class InfeasibleSelectionError(RuntimeError):
    """A fairness quota or floor cannot be met with the eligible antennas."""


@dataclass(frozen=True)
class PowerProfile:
    p_h: np.ndarray
    p_v: np.ndarray
    px_h_to_v: np.ndarray
    px_v_to_h: np.ndarray

    def __post_init__(self):
        arr = check_profile_array(np.column_stack([self.p_h, self.p_v, self.px_h_to_v, self.px_v_to_h]))
        for i, name in enumerate(("p_h", "p_v", "px_h_to_v", "px_v_to_h")):
            object.__setattr__(self, name, arr[:, i].copy())

    @property
    def n(self) -> int:
        return self.p_h.size

    def as_array(self) -> np.ndarray:
        return np.column_stack([self.p_h, self.p_v, self.px_h_to_v, self.px_v_to_h])

    @classmethod
    def from_array(cls, X) -> "PowerProfile":
        X = check_profile_array(X)
        return cls(X[:, 0], X[:, 1], X[:, 2], X[:, 3])

    def permuted(self, perm) -> "PowerProfile":
        return PowerProfile.from_array(self.as_array()[perm])


def power_profile(source, h: ChannelMatrix | None = None, *, weights=(1 / math.sqrt(2), 1 / math.sqrt(2)),
                  noise_variance: float = 0.0, window: slice | None = None) -> PowerProfile:
    """Per-antenna co-pol and cross-pol received powers.

    ``source`` is either a :class:`ReceivedBundle` (sample means over
    ``window``; needs the channel ``h`` to separate the leakage terms) or a
    :class:`ChannelMatrix` (expected powers for unit-power streams scaled by
    the SOP ``weights``, plus ``noise_variance`` on the co-pol terms).
    """
    if isinstance(source, ReceivedBundle):
        if h is None:
            raise ValueError("the channel is needed to separate leakage from a received bundle")
        sl = slice(None) if window is None else window
        x_h, x_v = cross_terms(source, h)
        co_h = (source.y_h - x_h)[:, sl]
        co_v = (source.y_v - x_v)[:, sl]
        if co_h.shape[1] == 0:
            raise ValueError("empty averaging window")
        return PowerProfile(np.mean(np.abs(co_h) ** 2, axis=1), np.mean(np.abs(co_v) ** 2, axis=1),
                            np.mean(np.abs(x_v[:, sl]) ** 2, axis=1),
                            np.mean(np.abs(x_h[:, sl]) ** 2, axis=1))
    if isinstance(source, ChannelMatrix):
        w_h, w_v = (abs(w) ** 2 for w in weights)
        return PowerProfile(np.abs(source.h_hh) ** 2 * w_h + noise_variance,
                            np.abs(source.h_vv) ** 2 * w_v + noise_variance,
                            np.abs(source.h_vh) ** 2 * w_h,
                            np.abs(source.h_hv) ** 2 * w_v)
    raise TypeError("source must be a ReceivedBundle or a ChannelMatrix")


def imbalance_factor(profile: PowerProfile) -> np.ndarray:
    """P_H / P_V per antenna; +inf where the V branch carries no power."""
    with np.errstate(divide="ignore", invalid="ignore"):
        g = profile.p_h / profile.p_v
    g[(profile.p_v == 0) & (profile.p_h == 0)] = np.inf
    return g


@dataclass
class SelectionResult:
    comm_mask: np.ndarray
    sense_mask: np.ndarray
    counters: dict = field(default_factory=lambda: {"comparisons": 0, "sorts": 0, "divisions": 0})
    feasible: bool = True
    imbalance: np.ndarray | None = None

    @property
    def discarded(self) -> np.ndarray:
        return ~(self.comm_mask | self.sense_mask)

    @property
    def roles(self) -> np.ndarray:
        r = np.zeros(self.comm_mask.size, dtype=np.int8)
        r[self.comm_mask] = COMM
        r[self.sense_mask] = SENSE
        return r

    @classmethod
    def from_roles(cls, roles, counters=None, **kw) -> "SelectionResult":
        roles = np.asarray(roles)
        return cls(roles == COMM, roles == SENSE,
                   dict(counters) if counters else {"comparisons": 0, "sorts": 0, "divisions": 0}, **kw)

    def summary(self) -> dict:
        return {"n_comm": int(self.comm_mask.sum()), "n_sense": int(self.sense_mask.sum()),
                "n_discarded": int(self.discarded.sum()), "feasible": self.feasible, **self.counters}


def default_epsilon(profile: PowerProfile, scale: float = 1e-3) -> float:
    return scale * float(np.mean((profile.p_h + profile.p_v) / 2.0))


def greedy_select(profile: PowerProfile, epsilon: float, gamma_comm: float = 0.5,
                  gamma_radar: float = 2.0) -> SelectionResult:
    """Single pass of the greedy assignment, spatial smoothing, then threshold filters."""
    n_el = profile.n
    p_h, p_v = profile.p_h, profile.p_v
    x_hv, x_vh = profile.px_h_to_v, profile.px_v_to_h
    cnt = {"comparisons": 0, "sorts": 0, "divisions": 0}
    imbalance = imbalance_factor(profile)
    cnt["divisions"] += n_el

    roles = np.zeros(n_el, dtype=np.int8)
    for n in range(n_el):
        cnt["comparisons"] += 1
        if p_h[n] > x_vh[n]:
            roles[n] = COMM
        else:
            cnt["comparisons"] += 1
            roles[n] = SENSE if p_v[n] > x_hv[n] else DISCARD
        if n > 0:
            cnt["comparisons"] += 1
            if abs(p_h[n] - p_v[n]) <= epsilon:
                roles[n] = roles[n - 1]

    for n in range(n_el):
        if roles[n] == COMM:
            cnt["comparisons"] += 1
            cnt["divisions"] += 1
            if not _comm_threshold_ok(p_h[n], x_vh[n], gamma_comm):
                roles[n] = DISCARD
        elif roles[n] == SENSE:
            cnt["comparisons"] += 1
            cnt["divisions"] += 1
            if not _sense_threshold_ok(p_v[n], x_hv[n], gamma_radar):
                roles[n] = DISCARD
    return SelectionResult.from_roles(roles, cnt, imbalance=imbalance)


def _comm_threshold_ok(p_c: float, p_x: float, gamma: float) -> bool:
    if p_c == 0:
        return False
    return p_x / p_c <= gamma


def _sense_threshold_ok(p_c: float, p_x: float, gamma: float) -> bool:
    if p_x == 0:
        return p_c > 0
    return p_c / p_x >= gamma


def eligibility(profile: PowerProfile, gamma_comm: float, gamma_radar: float) -> tuple[np.ndarray, np.ndarray]:
    """Antennas that may take each role: branch test plus threshold constraint."""
    with np.errstate(divide="ignore", invalid="ignore"):
        comm = (profile.p_h > profile.px_v_to_h) & (profile.px_v_to_h <= gamma_comm * profile.p_h)
        sense = (profile.p_v > profile.px_h_to_v) & (profile.p_v >= gamma_radar * profile.px_h_to_v)
    return comm, sense


def _counted_ranking(indices, key: np.ndarray, cnt: dict) -> list[int]:
    """Indices sorted by ``key`` descending (stable), counting comparisons."""

    def cmp(a, b):
        cnt["comparisons"] += 1
        return -1 if key[a] > key[b] else (1 if key[a] < key[b] else 0)

    cnt["sorts"] += 1
    return sorted(indices, key=functools.cmp_to_key(cmp))


def _quota(size: int, mode: str, adaptive_lambda: float) -> int:
    share = 0.5 if mode == "fairness" else adaptive_lambda
    return int(math.floor(share * size))


def enforce_vr_fairness(result: SelectionResult, profile: PowerProfile, vrs, mode: str = "fairness",
                        adaptive_lambda: float = 0.5, max_comm: int | None = None,
                        max_sense: int | None = None, gamma_comm: float = 0.5,
                        gamma_radar: float = 2.0, strict: bool = True) -> SelectionResult:
    """Apply VR membership, the single-VR split or multi-VR floors, and the role caps.

    With one VR, communication gets exactly floor(|V|/2) antennas in fairness
    mode or floor(lambda*|V|) in adaptive mode; released antennas fall back to
    sensing when eligible. With several VRs both roles must reach the size of
    the smallest VR; shortfalls are filled round-robin across VRs from each
    VR's margin ranking (role power minus leakage, descending). With
    ``strict=False`` an unmet quota sets ``feasible=False`` instead of raising.
    """
    if mode not in ("fairness", "adaptive"):
        raise ValueError("mode must be 'fairness' or 'adaptive'")
    vrs = [check_mask(v, profile.n, "visibility") for v in vrs]
    if not vrs:
        raise ValueError("at least one visibility region is required")
    n_el = profile.n
    cnt = dict(result.counters)
    union = np.logical_or.reduce(vrs)
    comm_ok, sense_ok = eligibility(profile, gamma_comm, gamma_radar)
    comm_ok &= union
    sense_ok &= union
    m_c = profile.p_h - profile.px_v_to_h
    m_s = profile.p_v - profile.px_h_to_v
    cap_c = n_el if max_comm is None else max_comm
    cap_s = n_el if max_sense is None else max_sense

    roles = result.roles.copy()
    roles[~union] = DISCARD
    feasible = True

    # VR sizes via a linear scan per region (minimum across L sets)
    sizes = []
    for v in vrs:
        cnt["comparisons"] += n_el
        sizes.append(int(v.sum()))
    rank_c = [_counted_ranking(np.flatnonzero(v), m_c, cnt) for v in vrs]
    rank_s = [_counted_ranking(np.flatnonzero(v), m_s, cnt) for v in vrs]

    def shortfall(msg):
        nonlocal feasible
        if strict:
            raise InfeasibleSelectionError(msg)
        feasible = False

    if len(vrs) == 1:
        q_c = _quota(sizes[0], mode, adaptive_lambda)
        q_c = min(q_c, cap_c)
        greedy_comm = [i for i in rank_c[0] if roles[i] == COMM and comm_ok[i]]
        others = [i for i in rank_c[0] if roles[i] != COMM and comm_ok[i]]
        chosen = (greedy_comm + others)[:q_c]
        if len(chosen) < q_c:
            shortfall(f"communication quota {q_c} exceeds {len(chosen)} eligible antennas")
        released = roles == COMM
        roles[released] = DISCARD
        roles[chosen] = COMM
        for i in np.flatnonzero(released):
            if roles[i] == DISCARD and sense_ok[i]:
                roles[i] = SENSE
        roles[(roles == SENSE) & ~sense_ok] = DISCARD
    else:
        floor = min(sizes)
        roles[(roles == COMM) & ~comm_ok] = DISCARD
        roles[(roles == SENSE) & ~sense_ok] = DISCARD

        def fill(role, ranks, ok, from_roles, keep_other_above):
            need = floor - int(np.sum(roles == role))
            pos = [0] * len(ranks)
            other = COMM if role == SENSE else SENSE
            while need > 0:
                progressed = False
                for li, rk in enumerate(ranks):
                    while pos[li] < len(rk):
                        i = rk[pos[li]]
                        pos[li] += 1
                        if not ok[i] or roles[i] not in from_roles:
                            continue
                        if roles[i] == other and np.sum(roles == other) <= keep_other_above:
                            continue
                        roles[i] = role
                        need -= 1
                        progressed = True
                        break
                    if need == 0:
                        break
                if not progressed:
                    break
            return need

        left = fill(COMM, rank_c, comm_ok, (DISCARD,), floor)
        if left > 0:
            # converting: give up the weakest sensing antennas first
            left = fill(COMM, [r[::-1] for r in rank_s], comm_ok, (SENSE,), floor)
        if left > 0:
            shortfall(f"communication floor {floor} cannot be met")
        left = fill(SENSE, rank_s, sense_ok, (DISCARD,), floor)
        if left > 0:
            left = fill(SENSE, [r[::-1] for r in rank_c], sense_ok, (COMM,), floor)
        if left > 0:
            shortfall(f"sensing floor {floor} cannot be met")

    # caps last: keep the strongest margins
    for role, cap, margin in ((COMM, cap_c, m_c), (SENSE, cap_s, m_s)):
        members = np.flatnonzero(roles == role)
        if members.size > cap:
            ranked = _counted_ranking(members, margin, cnt)
            roles[ranked[cap:]] = DISCARD

    return SelectionResult.from_roles(roles, cnt, feasible=feasible and result.feasible,
                                      imbalance=result.imbalance)


def select_antennas(profile: PowerProfile, vrs, epsilon: float | None = None, gamma_comm: float = 0.5,
                    gamma_radar: float = 2.0, mode: str = "fairness", adaptive_lambda: float = 0.5,
                    max_comm: int | None = None, max_sense: int | None = None,
                    strict: bool = True) -> SelectionResult:
    """Full proposed pipeline: greedy pass followed by VR fairness and caps."""
    eps = default_epsilon(profile) if epsilon is None else epsilon
    res = greedy_select(profile, eps, gamma_comm, gamma_radar)
    return enforce_vr_fairness(res, profile, vrs, mode, adaptive_lambda, max_comm, max_sense,
                               gamma_comm, gamma_radar, strict)


# -- objectives ---------------------------------------------------------------------

def evaluate_se_objective(comm_mask, sinr) -> float:
    sinr = np.asarray(sinr, dtype=float)
    mask = check_mask(comm_mask, sinr.size, "comm_mask")
    return float(np.sum(np.log2(1.0 + sinr[mask])))


def evaluate_pd_objective(sense_mask, radar_powers, tau: float, sigma_n: float) -> float:
    if not sigma_n > 0:
        raise ValueError("sigma_n must be positive")
    p = np.asarray(radar_powers, dtype=float)
    mask = check_mask(sense_mask, p.size, "sense_mask")
    return float(ndtr(-(tau - p[mask].sum()) / sigma_n))


# -- exhaustive oracle ------------------------------------------------------------------

MAX_BRUTE_FORCE = 14


@dataclass(frozen=True)
class BruteForceResult:
    comm_mask: np.ndarray
    sense_mask: np.ndarray
    se_objective: float
    pd_objective: float
    feasible: bool
    n_feasible: int


def _lex_first(candidates: np.ndarray) -> int:
    """Row index of the lexicographically smallest role vector (as comm/sense bit strings)."""
    order = np.lexsort(candidates.T[::-1])
    return int(order[0])


def brute_force_select(profile: PowerProfile, vrs, sinr, radar_powers=None, *, tau: float = 0.0,
                       sigma_n: float = 1.0, gamma_comm: float = 0.5, gamma_radar: float = 2.0,
                       mode: str = "fairness", adaptive_lambda: float = 0.5,
                       max_comm: int | None = None, max_sense: int | None = None) -> BruteForceResult:
    """Exhaustive search over all 3^N role assignments.

    Constraints mirror :func:`enforce_vr_fairness`: roles only inside the VR
    union, per-role threshold eligibility, the single-VR communication quota
    or the multi-VR floors, and the caps. Returns the communication mask of
    the best SE assignment and the sensing mask of the best detection
    assignment; ties go to the lexicographically smallest role vector.
    """
    n = profile.n
    if n > MAX_BRUTE_FORCE:
        raise ValueError(f"exhaustive search limited to N <= {MAX_BRUTE_FORCE}, got {n}")
    vrs = [check_mask(v, n, "visibility") for v in vrs]
    sinr = np.asarray(sinr, dtype=float)
    radar = profile.p_v if radar_powers is None else np.asarray(radar_powers, dtype=float)
    cap_c = n if max_comm is None else max_comm
    cap_s = n if max_sense is None else max_sense
    union = np.logical_or.reduce(vrs)
    comm_ok, sense_ok = eligibility(profile, gamma_comm, gamma_radar)
    comm_ok &= union
    sense_ok &= union

    # role digits per antenna, antenna 0 most significant
    roles = np.array(list(itertools.product((DISCARD, COMM, SENSE), repeat=n)), dtype=np.int8)
    if n == 0:
        roles = roles.reshape(1, 0)
    is_c = roles == COMM
    is_s = roles == SENSE
    ok = ~np.any(is_c & ~comm_ok, axis=1) & ~np.any(is_s & ~sense_ok, axis=1)
    n_c = is_c.sum(axis=1)
    n_s = is_s.sum(axis=1)
    ok &= (n_c <= cap_c) & (n_s <= cap_s)
    if len(vrs) == 1:
        ok &= n_c == min(_quota(int(vrs[0].sum()), mode, adaptive_lambda), cap_c)
    else:
        floor = min(int(v.sum()) for v in vrs)
        ok &= (n_c >= floor) & (n_s >= floor)
    if not ok.any():
        empty = np.zeros(n, dtype=bool)
        return BruteForceResult(empty, empty.copy(), 0.0, 0.0, False, 0)

    feas = roles[ok]
    se = (is_c[ok] * np.log2(1.0 + sinr)).sum(axis=1)
    pd = ndtr(-(tau - (is_s[ok] * radar).sum(axis=1)) / sigma_n)
    # lexicographic key: comm bits then sense bits, smallest first
    def best(values):
        top = values >= values.max() - 1e-12 * max(1.0, abs(values.max()))
        cand = feas[top]
        keys = np.concatenate([(cand == COMM), (cand == SENSE)], axis=1).astype(np.int8)
        return cand[_lex_first(keys)], values.max()

    se_roles, se_val = best(se)
    pd_roles, pd_val = best(pd)
    return BruteForceResult(se_roles == COMM, pd_roles == SENSE, float(se_val), float(pd_val),
                            True, int(ok.sum()))


# -- baselines ---------------------------------------------------------------------

def argmax_roles(profile: PowerProfile) -> np.ndarray:
    return np.where(profile.p_h >= profile.p_v, COMM, SENSE).astype(np.int8)


def baseline_select(kind: str, profile: PowerProfile, rng: np.random.Generator | None = None,
                    k: int | None = None) -> SelectionResult:
    """Comparison selectors.

    ``all_on`` activates every antenna in its stronger-power role;
    ``random`` keeps k uniformly chosen antennas; ``top_power`` keeps the k
    antennas with the largest P_H + P_V. Kept antennas take the role with the
    larger co-pol power.
    """
    n = profile.n
    roles = argmax_roles(profile)
    if kind == "all_on":
        return SelectionResult.from_roles(roles)
    if k is None or not 0 <= k <= n:
        raise ValueError(f"k must lie in [0, {n}]")
    if kind == "random":
        if rng is None:
            raise ValueError("random baseline needs an rng")
        keep = rng.choice(n, size=k, replace=False)
    elif kind == "top_power":
        keep = np.argsort(-(profile.p_h + profile.p_v), kind="stable")[:k]
    else:
        raise ValueError(f"unknown baseline {kind!r}")
    out = np.zeros(n, dtype=np.int8)
    out[keep] = roles[keep]
    return SelectionResult.from_roles(out)


# -- complexity models ------------------------------------------------------------

def complexity_counts(n: int, k: int = 1, l: int = 1, scheme: str = "proposed", *, n_it: int = 100,
                      population: int = 50, generations: int = 100, elite: int = 5) -> float:
    """Analytic operation counts with unit constants (log base 2).

    ``n`` is the array size (M for the comparison schemes), ``k`` the number
    of users and ``l`` the number of visibility regions.
    """
    if min(n, k, l) < 1:
        raise ValueError("arguments must be positive")
    lg = math.log2(n) if n > 1 else 1.0
    if scheme == "proposed":
        return float(k * l * n * lg)
    if scheme == "hrnp":
        return float(n * k + n * lg)
    if scheme == "ls":
        return float(n_it * n * k ** 2)
    if scheme in ("ga", "pso"):
        return float(n_it * population * n * k ** 2)
    if scheme == "ga_quasi":
        t, n_p, n_e = generations, population, elite
        return float(k ** 3 * t * (n_p + n_e) + k ** 3 * n_e + k ** 2 * t * n * (n_p + n_e) + k ** 2 * n_e)
    raise ValueError(f"unknown scheme {scheme!r}")


# -- estimator wrappers -----------------------------------------------------------------

class PolarizationAwareSelector(TransformerMixin, BaseEstimator):
    """Greedy polarization-aware antenna selector.

    ``fit`` takes a power profile ``X`` of shape (n_antennas, 4) with columns
    (P_H, P_V, P_X^{H->V}, P_X^{V->H}) and, optionally, the visibility
    regions. ``transform`` applies the fitted selection to receive samples
    shaped (n_antennas, n_samples), zeroing rows of discarded antennas.

    Parameters
    ----------
    epsilon : float or None
        Near-equal-power threshold; ``None`` uses ``epsilon_scale`` times
        the mean per-antenna power.
    gamma_comm, gamma_radar : float
        Leakage thresholds for the communication and sensing roles.
    mode : {"fairness", "adaptive"}
    adaptive_lambda : float
        Communication share of a single VR in adaptive mode.
    max_comm, max_sense : int or None
        Role caps.
    strict : bool
        Raise on infeasible quotas instead of flagging them.
    """

    def __init__(self, epsilon=None, epsilon_scale=1e-3, gamma_comm=0.5, gamma_radar=2.0,
                 mode="fairness", adaptive_lambda=0.5, max_comm=None, max_sense=None, strict=False):
        self.epsilon = epsilon
        self.epsilon_scale = epsilon_scale
        self.gamma_comm = gamma_comm
        self.gamma_radar = gamma_radar
        self.mode = mode
        self.adaptive_lambda = adaptive_lambda
        self.max_comm = max_comm
        self.max_sense = max_sense
        self.strict = strict

    def fit(self, X, y=None, visibility=None):
        profile = X if isinstance(X, PowerProfile) else PowerProfile.from_array(X)
        if visibility is None:
            visibility = [np.ones(profile.n, dtype=bool)]
        eps = default_epsilon(profile, self.epsilon_scale) if self.epsilon is None else self.epsilon
        self.epsilon_ = eps
        self.result_ = select_antennas(profile, visibility, eps, self.gamma_comm, self.gamma_radar,
                                       self.mode, self.adaptive_lambda, self.max_comm,
                                       self.max_sense, self.strict)
        self.comm_mask_ = self.result_.comm_mask
        self.sense_mask_ = self.result_.sense_mask
        self.roles_ = self.result_.roles
        self.n_features_in_ = 4
        self.n_antennas_ = profile.n
        return self

    def transform(self, X):
        check_is_fitted(self, "roles_")
        Y = np.asarray(X)
        if Y.shape[0] != self.n_antennas_:
            raise ValueError(f"expected {self.n_antennas_} antenna rows, got {Y.shape[0]}")
        keep = (self.roles_ != DISCARD).reshape((-1,) + (1,) * (Y.ndim - 1))
        return np.where(keep, Y, 0)

    def select(self, X, role: str = "comm"):
        """Rows of ``X`` belonging to one role."""
        check_is_fitted(self, "roles_")
        mask = {"comm": self.comm_mask_, "sense": self.sense_mask_}[role]
        return np.asarray(X)[mask]


class BaselineSelector(TransformerMixin, BaseEstimator):
    """Estimator wrapper around :func:`baseline_select`."""

    def __init__(self, kind="all_on", k=None, random_state=None):
        self.kind = kind
        self.k = k
        self.random_state = random_state

    def fit(self, X, y=None):
        profile = X if isinstance(X, PowerProfile) else PowerProfile.from_array(X)
        rng = np.random.default_rng(self.random_state)
        self.result_ = baseline_select(self.kind, profile, rng, self.k)
        self.comm_mask_ = self.result_.comm_mask
        self.sense_mask_ = self.result_.sense_mask
        self.roles_ = self.result_.roles
        self.n_features_in_ = 4
        return self

    def transform(self, X):
        check_is_fitted(self, "roles_")
        Y = np.asarray(X)
        keep = (self.roles_ != DISCARD).reshape((-1,) + (1,) * (Y.ndim - 1))
        return np.where(keep, Y, 0)
