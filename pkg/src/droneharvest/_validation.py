"""Input validation helpers shared by the public entry points."""

from __future__ import annotations

import numbers

import numpy as np
from sklearn.utils.validation import check_array

P_MIN = 2.0
P_MAX = 16.0


def check_points(X, name="points", n_points=None, allow_empty=False):
    """Validate an ``(n, 2)`` array of planar points and return a float copy.

    A single pair is promoted to shape ``(1, 2)``.
    """
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 1 and arr.shape[0] == 2:
        arr = arr.reshape(1, 2)
    if arr.size == 0 and allow_empty:
        return np.zeros((0, 2))
    arr = check_array(arr, dtype=float, ensure_2d=True, copy=True,
                      input_name=name, ensure_min_samples=1)
    if arr.shape[1] != 2:
        raise ValueError(f"{name} must have shape (n, 2), got {arr.shape}")
    if n_points is not None and arr.shape[0] != n_points:
        raise ValueError(f"{name} must contain {n_points} points, got {arr.shape[0]}")
    return arr


def check_point(x, name="point"):
    """Validate a single planar point and return it as a float array of shape (2,)."""
    arr = np.asarray(x, dtype=float)
    if arr.shape != (2,):
        raise ValueError(f"{name} must be a pair of coordinates, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must have finite coordinates, got {arr.tolist()}")
    return arr.copy()


def check_distinct(heads, name="heads"):
    """Raise if any two rows of ``heads`` coincide."""
    diff = heads[:, None, :] - heads[None, :, :]
    dist = np.sqrt((diff ** 2).sum(axis=-1))
    iu = np.triu_indices(len(heads), k=1)
    close = dist[iu] <= 0.0
    if np.any(close):
        k = int(np.argmax(close))
        i, j = int(iu[0][k]), int(iu[1][k])
        raise ValueError(f"{name} {i} and {j} coincide at {heads[i].tolist()}")


def check_power(p, p_max=P_MAX):
    """Validate the power-loss exponent."""
    if isinstance(p, bool) or not isinstance(p, numbers.Real):
        raise TypeError(f"p must be a real number, got {type(p).__name__}")
    p = float(p)
    if not np.isfinite(p) or p < P_MIN:
        raise ValueError(f"p must be finite and >= {P_MIN:g}, got {p!r}")
    if p_max is not None and p > p_max:
        raise ValueError(
            f"p={p:g} exceeds {p_max:g}; larger exponents overflow double precision "
            "for typical coordinates (pass p_max=None to override)"
        )
    return p


def check_positive(value, name, allow_zero=False):
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise TypeError(f"{name} must be a real number, got {type(value).__name__}")
    value = float(value)
    if not np.isfinite(value) or value < 0 or (value == 0 and not allow_zero):
        bound = ">= 0" if allow_zero else "> 0"
        raise ValueError(f"{name} must be finite and {bound}, got {value!r}")
    return value
