"""Plain numpy forward implementations of the numerical primitives.

These are the single source of truth for the math; the autodiff layer wraps
them with VJPs. All functions take/return float64 arrays.
"""

from __future__ import annotations

import numpy as np

from . import fft
from .errors import ConfigError, InvalidInputError


def softmax(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        raise InvalidInputError("softmax of an empty vector")
    z = v - np.max(v, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def layer_norm(v: np.ndarray, gain: np.ndarray, bias: np.ndarray, eps: float) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    gain = np.asarray(gain, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    if v.shape != gain.shape or v.shape != bias.shape:
        raise InvalidInputError(
            f"layer_norm shape mismatch: v{v.shape} gain{gain.shape} bias{bias.shape}")
    if eps < 0:
        raise InvalidInputError("layer_norm eps must be >= 0")
    mean = v.mean()
    var = ((v - mean) ** 2).mean()
    return (v - mean) / np.sqrt(var + eps) * gain + bias


def log_magnitude(h: np.ndarray) -> np.ndarray:
    """log(1 + |DFT(h)|) of a real vector, full-length spectrum."""
    h = np.asarray(h, dtype=np.float64)
    if h.ndim != 1 or h.size % 4 != 0:
        raise ConfigError(f"log_magnitude needs length divisible by 4, got shape {h.shape}")
    X = fft.dft(h.astype(np.complex128))
    return np.log1p(np.abs(X))


def silu(x: np.ndarray) -> np.ndarray:
    return x / (1.0 + np.exp(-x))


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=np.float64)))


def bce_with_logits(logit: float, label: int) -> float:
    """Numerically stable binary cross-entropy from a raw logit."""
    if label not in (0, 1):
        raise InvalidInputError(f"label must be 0 or 1, got {label!r}")
    z = float(logit)
    y = float(label)
    # max(z,0) - z*y + log(1 + exp(-|z|))
    return max(z, 0.0) - z * y + np.log1p(np.exp(-abs(z)))
