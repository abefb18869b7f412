"""Dense matrix helpers: products, row normalization, structured sampling, rank.

Matrices are plain 2-D float64 numpy arrays in row-major order.  The
helpers here add the shape validation and the deterministic sampling
used by the attention and analysis code.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError
from .rng import RngState, gaussian_matrix

DEFAULT_NORM_GUARD = 1e-12
DEFAULT_RANK_TOL = 1e-10


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validate and return `a` as a 2-D float64 array with finite entries."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got ndim={m.ndim}")
    if not np.isfinite(m).all():
        raise ValueError(f"{name} contains non-finite entries")
    return m


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with an explicit shape check."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError("matmul expects 2-D operands")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return a @ b


def row_l2_normalize(m: np.ndarray, guard: float = DEFAULT_NORM_GUARD) -> np.ndarray:
    """Scale each row x to x / max(|x|_2, guard).

    Rows with norm below `guard` are scaled by 1/guard, so all-zero rows
    stay exactly zero and the map is continuous at the origin.
    """
    if guard <= 0:
        raise ValueError(f"guard must be positive, got {guard}")
    m = np.asarray(m, dtype=np.float64)
    norms = np.linalg.norm(m, axis=-1, keepdims=True)
    return m / np.maximum(norms, guard)


def orthogonal_block_sample(rng: RngState, m: int, d: int) -> np.ndarray:
    """Sample m rows in R^d, orthogonal within blocks of size d.

    Each block of up to d rows is the (transposed) Q factor of a Gaussian
    matrix, then every row is rescaled to the norm of an independent
    Gaussian d-vector so marginal row norms match N(0, I_d).  Numerically
    rank-deficient Gaussian blocks are resampled.
    """
    if m < 1 or d < 1:
        raise ValueError(f"orthogonal_block_sample needs positive shape, got {m}x{d}")
    rows = []
    remaining = m
    while remaining > 0:
        size = min(remaining, d)
        q = None
        while q is None:
            g = gaussian_matrix(rng, size, d)
            qf, rf = np.linalg.qr(g.T)
            if np.min(np.abs(np.diag(rf))) < 1e-8:
                continue  # degenerate draw, resample the block
            q = qf.T
        rows.append(q)
        remaining -= size
    w = np.vstack(rows)
    norms = np.linalg.norm(gaussian_matrix(rng, m, d), axis=1)
    return w * norms[:, None]


def numerical_rank(m: np.ndarray, tol_scale: float = DEFAULT_RANK_TOL) -> int:
    """Rank by row elimination with partial pivoting.

    A pivot counts when its magnitude exceeds
    ``tol_scale * max_abs_entry * max(rows, cols)``.
    """
    if tol_scale <= 0:
        raise ValueError(f"tol_scale must be positive, got {tol_scale}")
    a = np.array(m, dtype=np.float64, copy=True)
    if a.ndim != 2:
        raise ShapeError("numerical_rank expects a 2-D matrix")
    if a.size == 0:
        return 0
    max_abs = np.max(np.abs(a))
    if max_abs == 0.0:
        return 0
    threshold = tol_scale * max_abs * max(a.shape)
    n_rows, n_cols = a.shape
    rank = 0
    row = 0
    for col in range(n_cols):
        if row >= n_rows:
            break
        pivot = row + int(np.argmax(np.abs(a[row:, col])))
        if abs(a[pivot, col]) <= threshold:
            continue
        if pivot != row:
            a[[row, pivot]] = a[[pivot, row]]
        a[row + 1:, col:] -= np.outer(a[row + 1:, col] / a[row, col], a[row, col:])
        rank += 1
        row += 1
    return rank
