"""Dense float64 tensors and the handful of primitives everything else builds on.

All arrays in this package are row-major (C order) 64-bit floats. Model files
store 32-bit weights; they are widened on load so every bound is computed in
double precision.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, InvalidInputError


def as_tensor(data, shape=None) -> np.ndarray:
    """Coerce to a C-contiguous float64 array, optionally reshaped."""
    arr = np.ascontiguousarray(data, dtype=np.float64)
    if shape is not None:
        arr = arr.reshape(shape)
    return arr


def ensure_finite(t: np.ndarray, context: str = "tensor") -> np.ndarray:
    if not np.all(np.isfinite(t)):
        raise InvalidInputError(f"{context} contains non-finite values")
    return t


def relu(t: np.ndarray) -> np.ndarray:
    return np.maximum(t, 0.0)


def l2_norm(t) -> float:
    """Euclidean norm of the flattened tensor. Rejects non-finite input."""
    arr = np.asarray(t, dtype=np.float64)
    ensure_finite(arr, "l2_norm input")
    return float(np.linalg.norm(arr.ravel()))


def seeded_fill(shape, seed: int, distribution: str = "uniform") -> np.ndarray:
    """Deterministic pseudo-random tensor from a PCG64 stream keyed by `seed`.

    `distribution` is "uniform" for U(-1, 1) or "gaussian" for N(0, 1). The
    generator (PCG64) and draw order are fixed, so a given (shape, seed,
    distribution) triple reproduces bitwise across runs and platforms.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    n = int(np.prod(shape)) if np.ndim(shape) else int(shape)
    if distribution == "uniform":
        flat = rng.uniform(-1.0, 1.0, size=n)
    elif distribution == "gaussian":
        flat = rng.standard_normal(n)
    else:
        raise ConfigError(f"unknown distribution {distribution!r}")
    return flat.reshape(shape)
