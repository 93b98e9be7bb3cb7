"""Input checks shared by the estimators and the metric functions."""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array


def check_profile_array(X, n_columns: int = 4) -> np.ndarray:
    """Validate an (n_antennas, 4) non-negative, finite power profile."""
    X = check_array(X, dtype=np.float64, ensure_2d=True, ensure_all_finite=True)
    if X.shape[1] != n_columns:
        raise ValueError(f"expected {n_columns} columns (p_h, p_v, px_h_to_v, px_v_to_h), got {X.shape[1]}")
    if np.any(X < 0):
        raise ValueError("power profile entries must be non-negative")
    return X


def check_mask(mask, n: int, name: str = "mask") -> np.ndarray:
    m = np.asarray(mask, dtype=bool).ravel()
    if m.size != n:
        raise ValueError(f"{name} has length {m.size}, expected {n}")
    return m


def check_probability(p: float, name: str = "probability", open_interval: bool = True) -> float:
    p = float(p)
    ok = 0.0 < p < 1.0 if open_interval else 0.0 <= p <= 1.0
    if not ok:
        bounds = "(0, 1)" if open_interval else "[0, 1]"
        raise ValueError(f"{name} must lie in {bounds}, got {p}")
    return p
