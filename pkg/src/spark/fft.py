"""Arbitrary-length DFT: iterative radix-2 core with a Bluestein fallback.

All transforms operate on 1-D complex128 arrays. The forward transform uses
the unnormalized convention X[k] = sum_j x[j] exp(-2*pi*i*j*k/n); the inverse
divides by n. Lengths that are not powers of two (768 = 2^8 * 3 included) go
through the chirp-z (Bluestein) path, whose internal convolutions run on a
power-of-two radix-2 FFT.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidInputError

_MIN_LEN = 4


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def _fft_pow2(x: np.ndarray) -> np.ndarray:
    """Iterative Cooley-Tukey radix-2 FFT. len(x) must be a power of two."""
    n = x.size
    if n == 1:
        return x.copy()
    levels = n.bit_length() - 1
    # bit-reversal permutation
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for _ in range(levels):
        rev = (rev << 1) | (idx & 1)
        idx >>= 1
    out = np.asarray(x, dtype=np.complex128)[rev]
    size = 2
    while size <= n:
        half = size // 2
        tw = np.exp(-2j * np.pi * np.arange(half) / size)
        blocks = out.reshape(n // size, size)
        even = blocks[:, :half].copy()
        odd = blocks[:, half:] * tw
        blocks[:, :half] = even + odd
        blocks[:, half:] = even - odd
        size *= 2
    return out


def _bluestein(x: np.ndarray) -> np.ndarray:
    """Chirp-z transform, valid for any length."""
    n = x.size
    m = 1 << (2 * n - 1).bit_length()
    k = np.arange(n)
    chirp = np.exp(-1j * np.pi * k * k / n)
    a = np.zeros(m, dtype=np.complex128)
    a[:n] = x * chirp
    b = np.zeros(m, dtype=np.complex128)
    b[:n] = np.conj(chirp)
    if n > 1:
        b[-(n - 1):] = np.conj(chirp)[1:][::-1]
    conv = _ifft_pow2(_fft_pow2(a) * _fft_pow2(b))
    return conv[:n] * chirp


def _ifft_pow2(X: np.ndarray) -> np.ndarray:
    return np.conj(_fft_pow2(np.conj(X))) / X.size


def dft(x: np.ndarray) -> np.ndarray:
    """Forward DFT of a complex vector of any length >= 4."""
    x = np.asarray(x, dtype=np.complex128)
    if x.ndim != 1 or x.size < _MIN_LEN:
        raise InvalidInputError(f"dft needs a 1-D vector of length >= {_MIN_LEN}, got shape {x.shape}")
    if _is_pow2(x.size):
        return _fft_pow2(x)
    return _bluestein(x)


def idft(X: np.ndarray) -> np.ndarray:
    """Inverse DFT, exact inverse of dft up to roundoff."""
    X = np.asarray(X, dtype=np.complex128)
    if X.ndim != 1 or X.size < _MIN_LEN:
        raise InvalidInputError(f"idft needs a 1-D vector of length >= {_MIN_LEN}, got shape {X.shape}")
    return np.conj(dft(np.conj(X))) / X.size
