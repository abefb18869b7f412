"""Iterative radix-2 fast Fourier transform on power-of-two buffers.

Buffers are complex128 arrays (an interleaved pair of 64-bit reals per
entry); the transform runs along the last axis so stacked signals go
through in one call.  Forward computes X_k = sum_t x_t exp(-2 pi i k t / N);
the inverse carries the 1/N factor so that inverse(forward(x)) == x.

`twiddle_fault` flips the sign of one twiddle factor for fault-injection
tests; nothing else should ever enable it.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

from .errors import ShapeError

_bit_reversal_cache: dict[int, np.ndarray] = {}
_fault_active = False


@contextmanager
def twiddle_fault():
    """Temporarily flip the sign of one twiddle factor (sabotage hook)."""
    global _fault_active
    _fault_active = True
    try:
        yield
    finally:
        _fault_active = False


def _bit_reversal(n: int) -> np.ndarray:
    perm = _bit_reversal_cache.get(n)
    if perm is None:
        perm = np.zeros(n, dtype=np.intp)
        bits = n.bit_length() - 1
        for i in range(1, n):
            perm[i] = (perm[i >> 1] >> 1) | ((i & 1) << (bits - 1))
        _bit_reversal_cache[n] = perm
    return perm


def fft(buf: np.ndarray, inverse: bool = False) -> np.ndarray:
    """Transform along the last axis; length must be a power of two."""
    x = np.asarray(buf, dtype=np.complex128)
    n = x.shape[-1]
    if n == 0 or (n & (n - 1)) != 0:
        raise ShapeError(f"fft length must be a power of two, got {n}")
    out = x[..., _bit_reversal(n)].copy()
    sign = 1.0 if inverse else -1.0
    size = 2
    while size <= n:
        half = size // 2
        w = np.exp(sign * 2j * np.pi * np.arange(half) / size)
        if _fault_active and size == n:
            w = w.copy()
            w[min(1, half - 1)] = -w[min(1, half - 1)]
        view = out.reshape(*out.shape[:-1], n // size, size)
        odd = view[..., half:] * w
        even = view[..., :half].copy()
        view[..., :half] = even + odd
        view[..., half:] = even - odd
        size *= 2
    if inverse:
        out /= n
    return out
