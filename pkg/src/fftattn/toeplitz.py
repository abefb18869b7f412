"""Toeplitz matrix products in O(n log n) via circulant embedding.

A kernel stores the 2n-1 diagonal constants c_k, k in [-(n-1), n-1], of
the implied matrix T[i, j] = c_{j-i} (so the first row reads c_0 .. c_{n-1}).
Multiplication embeds the kernel in a circulant of size N, the next power
of two at or above 2n-1, and runs pointwise products in Fourier space.
One kernel spectrum is computed per call and reused for every column of
the right-hand side.

Two interchangeable engines back the transform: "numpy" (pocketfft real
transforms, the fast default) and "radix2" (this package's own fft).  Both
are checked against the O(n^2) naive product, which is the ground truth
for every behavioral contract here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .fft import fft as radix2_fft

ENGINES = ("numpy", "radix2")

# Column-chunk budget for the spectral product, in float64 elements.
_CHUNK_ELEMENTS = 1 << 23


@dataclass(frozen=True)
class ToeplitzKernel:
    """Diagonal constants of an n x n Toeplitz matrix, offset-indexed.

    ``c[k + n - 1]`` holds the constant on offset k = j - i; offset 0 is
    the main diagonal, positive offsets sit above it.
    """

    n: int
    c: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c, dtype=np.float64)
        if self.n < 1:
            raise ShapeError(f"kernel length must be >= 1, got n={self.n}")
        if c.shape != (2 * self.n - 1,):
            raise ShapeError(
                f"kernel needs 2n-1 = {2 * self.n - 1} offsets, got shape {c.shape}"
            )
        if not np.isfinite(c).all():
            raise ValueError("kernel offsets must be finite")
        object.__setattr__(self, "c", c)

    @classmethod
    def from_offsets(cls, c) -> "ToeplitzKernel":
        c = np.asarray(c, dtype=np.float64)
        return cls(n=(c.shape[0] + 1) // 2, c=c)

    @classmethod
    def identity(cls, n: int) -> "ToeplitzKernel":
        c = np.zeros(2 * n - 1)
        c[n - 1] = 1.0
        return cls(n=n, c=c)

    @classmethod
    def ones(cls, n: int) -> "ToeplitzKernel":
        return cls(n=n, c=np.ones(2 * n - 1))

    def offset(self, k: int) -> float:
        return float(self.c[k + self.n - 1])

    def reversed(self) -> "ToeplitzKernel":
        """Kernel of the transposed matrix: offset k takes the value at -k."""
        return ToeplitzKernel(n=self.n, c=self.c[::-1].copy())

    def dense(self) -> np.ndarray:
        """Materialize the full matrix; for oracles and small demos only."""
        idx = np.arange(self.n)[None, :] - np.arange(self.n)[:, None] + (self.n - 1)
        return self.c[idx]


def causal_mask(kernel: ToeplitzKernel) -> ToeplitzKernel:
    """Zero every strictly positive offset, cutting all weight from j > i."""
    c = kernel.c.copy()
    c[kernel.n:] = 0.0
    return ToeplitzKernel(n=kernel.n, c=c)


def embedding_size(n: int) -> int:
    """Next power of two at or above 2n-1."""
    return 1 << (2 * n - 2).bit_length() if n > 1 else 1


def _first_column(kernel: ToeplitzKernel, N: int) -> np.ndarray:
    """First column of the size-N circulant whose top-left block is T."""
    n, c = kernel.n, kernel.c
    col = np.zeros(N)
    col[0] = c[n - 1]
    if n > 1:
        col[1:n] = c[n - 2::-1]        # c_{-t} at position t
        col[N - n + 1:] = c[n:][::-1]  # c_{+t} at position N - t
    return col


def circulant_spectrum(kernel: ToeplitzKernel, N: int | None = None) -> np.ndarray:
    """Real-input FFT of the embedded first column (the reusable part)."""
    if N is None:
        N = embedding_size(kernel.n)
    return np.fft.rfft(_first_column(kernel, N))


def convolve_columns(spectrum: np.ndarray, x: np.ndarray, N: int, n_out: int) -> np.ndarray:
    """Circular-convolve each column of x with the kernel behind `spectrum`.

    x has shape (n, cols) with n <= N; returns the first `n_out` rows of
    the length-N circular convolution.  Columns are processed in chunks to
    bound workspace memory; chunk boundaries cannot change the results
    because columns are independent.
    """
    n, cols = x.shape
    out = np.empty((n_out, cols))
    chunk = max(1, _CHUNK_ELEMENTS // max(N, 1))
    for s in range(0, cols, chunk):
        spec = np.fft.rfft(x[:, s:s + chunk], n=N, axis=0)
        spec *= spectrum[:, None]
        out[:, s:s + chunk] = np.fft.irfft(spec, n=N, axis=0)[:n_out]
    return out


def toeplitz_matmul(kernel: ToeplitzKernel, x: np.ndarray, engine: str = "numpy") -> np.ndarray:
    """T @ x for T[i, j] = c_{j-i}, in O(n log n) per column."""
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] != kernel.n:
        raise ShapeError(f"x must have {kernel.n} rows, got shape {x.shape}")
    if engine not in ENGINES:
        raise ValueError(f"unknown engine {engine!r}, expected one of {ENGINES}")
    n = kernel.n
    N = embedding_size(n)
    if engine == "numpy":
        y = convolve_columns(circulant_spectrum(kernel, N), x, N, n)
    else:
        col = np.zeros(N, dtype=np.complex128)
        col[:] = _first_column(kernel, N)
        f_kernel = radix2_fft(col)
        cols = x.shape[1]
        y = np.empty((n, cols))
        chunk = max(1, _CHUNK_ELEMENTS // (2 * max(N, 1)))
        for s in range(0, cols, chunk):
            buf = np.zeros((min(chunk, cols - s), N), dtype=np.complex128)
            buf[:, :n] = x[:, s:s + chunk].T
            spec = radix2_fft(buf)
            spec *= f_kernel
            y[:, s:s + chunk] = radix2_fft(spec, inverse=True)[:, :n].real.T
    return y[:, 0] if squeeze else y


def toeplitz_matmul_naive(kernel: ToeplitzKernel, x: np.ndarray) -> np.ndarray:
    """Reference O(n^2) product; the correctness oracle for the FFT path."""
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] != kernel.n:
        raise ShapeError(f"x must have {kernel.n} rows, got shape {x.shape}")
    n = kernel.n
    base = np.arange(n) + (n - 1)
    y = np.empty((n, x.shape[1]))
    for i in range(n):
        weights = kernel.c[base - i]  # c_{j-i} over j
        y[i] = weights @ x
    return y[:, 0] if squeeze else y


def toeplitz_transpose_matmul(
    kernel: ToeplitzKernel, x: np.ndarray, engine: str = "numpy"
) -> np.ndarray:
    """T^T @ x, realized by multiplying with the offset-reversed kernel."""
    return toeplitz_matmul(kernel.reversed(), x, engine=engine)


def toeplitz_kernel_corr(u: np.ndarray, v: np.ndarray, n: int) -> np.ndarray:
    """Per-offset correlations corr_k = sum_i <u_i, v_{i+k}>, k in [-(n-1), n-1].

    This is the adjoint of the kernel in the Toeplitz product: if D = T(c) V
    then d(sum U * D)/dc_k = sum_i <U_i, V_{i+k}>.  Computed with one FFT
    pass over the stacked columns; index k lives at position k + n - 1.
    """
    u = np.atleast_2d(np.asarray(u, dtype=np.float64))
    v = np.atleast_2d(np.asarray(v, dtype=np.float64))
    if u.shape != v.shape or u.shape[0] != n:
        raise ShapeError(f"u and v must both be (n, cols) with n={n}")
    N = embedding_size(n)
    fu = np.fft.rfft(u, n=N, axis=0)
    fv = np.fft.rfft(v, n=N, axis=0)
    cross = np.sum(np.conj(fu) * fv, axis=1)
    w = np.fft.irfft(cross, n=N)
    corr = np.empty(2 * n - 1)
    corr[n - 1:] = w[:n]            # k >= 0 at positions k
    corr[:n - 1] = w[N - n + 1:]    # k < 0 wraps to positions N + k
    return corr
