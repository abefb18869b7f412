"""Attention variants: quadratic softmax references, kernelized forms, and
the FFT-accelerated normalized kernelized attention with relative
positional bias, plus its analytic backward pass.

The exact softmax path and the O(n^2) kernelized-with-bias path exist as
oracles; `rpe_nka` is the production O(n log n * m * d) route and must
match them within tight tolerances (see the test suite).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DegenerateRowError, ShapeError
from .features import FeatureMapSpec, apply_feature_map, feature_map_vjp
from .linalg import matmul, row_l2_normalize
from .rng import RngState
from .toeplitz import (
    ToeplitzKernel,
    causal_mask,
    circulant_spectrum,
    convolve_columns,
    embedding_size,
    toeplitz_kernel_corr,
    toeplitz_matmul,
    toeplitz_transpose_matmul,
)

TEMPERATURES = ("softmax_scaled", "kernel_matched", "none")

# exp(b) stays finite below this; bias entries meant as -inf go through
# the mask flags instead.
_MAX_BIAS = 709.0

_SOFTMAX_BLOCK_ELEMENTS = 1 << 23


@dataclass(frozen=True)
class AttentionConfig:
    """Switches shared by every attention variant.

    temperature picks how the 1/sqrt(d) of scaled dot-product attention is
    realized: "softmax_scaled" and "kernel_matched" both pre-scale the
    projected queries and keys by d**-0.25 (identical logits, and the only
    form the kernelized paths can express); "none" uses raw dot products.
    With normalize_qk on, projected rows are l2-normalized and no
    temperature is applied, which is the low-variance normalized regime.
    """

    normalize_qk: bool = False
    causal: bool = False
    temperature: str = "softmax_scaled"
    denom_guard: float = 1e-6

    def __post_init__(self):
        if self.temperature not in TEMPERATURES:
            raise ValueError(f"unknown temperature {self.temperature!r}")
        if self.denom_guard <= 0:
            raise ValueError("denom_guard must be positive")


@dataclass(frozen=True)
class RpeBias:
    """Relative positional bias b_{j-i}, offset-indexed like ToeplitzKernel.

    `masked` flags offsets whose weight is forced to exactly zero (the
    -inf logit case); their stored b value is ignored.
    """

    n: int
    b: np.ndarray
    masked: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.b, dtype=np.float64)
        masked = np.asarray(self.masked, dtype=bool)
        if self.n < 1:
            raise ShapeError(f"bias needs n >= 1, got {self.n}")
        if b.shape != (2 * self.n - 1,) or masked.shape != b.shape:
            raise ShapeError(f"bias needs 2n-1 = {2 * self.n - 1} offsets")
        neg_inf = np.isneginf(b)
        masked = masked | neg_inf
        b = np.where(masked, 0.0, b)
        if not np.isfinite(b).all():
            raise ValueError("unmasked bias entries must be finite")
        if np.any(b > _MAX_BIAS):
            raise ValueError("bias entries too large: exp(b) would overflow")
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "masked", masked)

    @classmethod
    def from_offsets(cls, b, masked=None) -> "RpeBias":
        b = np.asarray(b, dtype=np.float64)
        n = (b.shape[0] + 1) // 2
        if masked is None:
            masked = np.zeros_like(b, dtype=bool)
        return cls(n=n, b=b, masked=np.asarray(masked, dtype=bool))

    @classmethod
    def zeros(cls, n: int) -> "RpeBias":
        return cls(n=n, b=np.zeros(2 * n - 1), masked=np.zeros(2 * n - 1, dtype=bool))

    @classmethod
    def gaussian(cls, rng: RngState, n: int, scale: float = 1.0) -> "RpeBias":
        return cls.from_offsets(rng.normal(2 * n - 1) * scale)

    def to_kernel(self, causal: bool = False) -> ToeplitzKernel:
        """Exponentiate into position weights; masked offsets become 0."""
        c = np.exp(self.b)
        c[self.masked] = 0.0
        kernel = ToeplitzKernel(n=self.n, c=c)
        return causal_mask(kernel) if causal else kernel


def _project_qk(q, k, wq, wk, cfg: AttentionConfig):
    qp = matmul(q, wq)
    kp = matmul(k, wk)
    if cfg.normalize_qk:
        return row_l2_normalize(qp), row_l2_normalize(kp)
    if cfg.temperature in ("softmax_scaled", "kernel_matched"):
        scale = qp.shape[1] ** -0.25
        return qp * scale, kp * scale
    return qp, kp


def _bias_logits_block(bias: RpeBias, i0: int, rows: int, n: int) -> np.ndarray:
    offsets = np.arange(n)[None, :] - (i0 + np.arange(rows))[:, None] + (bias.n - 1)
    block = bias.b[offsets].copy()
    block[bias.masked[offsets]] = -np.inf
    return block


def attention_scores(
    q, k, wq, wk, bias: Optional[RpeBias] = None, cfg: AttentionConfig = AttentionConfig()
) -> np.ndarray:
    """Row-stochastic matrix of softmax attention weights (the exact A)."""
    qp, kp = _project_qk(q, k, wq, wk, cfg)
    n = qp.shape[0]
    if bias is not None and bias.n != n:
        raise ShapeError(f"bias is for n={bias.n}, inputs have n={n}")
    logits = qp @ kp.T
    if bias is not None:
        logits += _bias_logits_block(bias, 0, n, n)
    if cfg.causal:
        logits[np.triu_indices(n, k=1)] = -np.inf
    row_max = logits.max(axis=1)
    if np.any(np.isneginf(row_max)):
        raise DegenerateRowError("attention row with every key masked")
    weights = np.exp(logits - row_max[:, None])
    return weights / weights.sum(axis=1, keepdims=True)


def softmax_attention(
    q, k, v, wq, wk, wv, bias: Optional[RpeBias] = None, cfg: AttentionConfig = AttentionConfig()
) -> np.ndarray:
    """Exact quadratic attention output, computed in query-row blocks."""
    qp, kp = _project_qk(q, k, wq, wk, cfg)
    vp = matmul(v, wv)
    n = qp.shape[0]
    if kp.shape[0] != n or vp.shape[0] != n:
        raise ShapeError("q, k, v must share their row count")
    if bias is not None and bias.n != n:
        raise ShapeError(f"bias is for n={bias.n}, inputs have n={n}")
    z = np.empty((n, vp.shape[1]))
    block = max(1, _SOFTMAX_BLOCK_ELEMENTS // max(n, 1))
    for i0 in range(0, n, block):
        rows = min(block, n - i0)
        logits = qp[i0:i0 + rows] @ kp.T
        if bias is not None:
            logits += _bias_logits_block(bias, i0, rows, n)
        if cfg.causal:
            cols_idx = np.arange(n)[None, :]
            logits[cols_idx > (i0 + np.arange(rows))[:, None]] = -np.inf
        row_max = logits.max(axis=1)
        if np.any(np.isneginf(row_max)):
            raise DegenerateRowError("attention row with every key masked")
        logits -= row_max[:, None]
        np.exp(logits, out=logits)
        z[i0:i0 + rows] = (logits @ vp) / logits.sum(axis=1)[:, None]
    return z


def _guard_denominator(den: np.ndarray, guard: float) -> np.ndarray:
    """Sign-preserving magnitude clamp; zeros are pushed to +guard."""
    return np.where(den >= 0.0, np.maximum(den, guard), np.minimum(den, -guard))


def kernelized_attention(phi_q, phi_k, v, denom_guard: float = 1e-6) -> np.ndarray:
    """Linear-time attention on pre-featurized queries and keys.

    The key-value and key summaries are accumulated once and shared by
    every query row; cost is O(n * m * d).
    """
    phi_q = np.asarray(phi_q, dtype=np.float64)
    phi_k = np.asarray(phi_k, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if phi_q.shape[1] != phi_k.shape[1]:
        raise ShapeError("phi_q and phi_k must share feature width")
    if phi_k.shape[0] != v.shape[0]:
        raise ShapeError("phi_k and v must share row count")
    kv = phi_k.T @ v
    key_sums = phi_k.sum(axis=0)
    num = phi_q @ kv
    den = _guard_denominator(phi_q @ key_sums, denom_guard)
    return num / den[:, None]


def kernelized_attention_rpe_naive(
    phi_q, phi_k, v, kernel: ToeplitzKernel, denom_guard: float = 1e-6
) -> np.ndarray:
    """Position-weighted kernelized attention by explicit O(n^2) loops.

    The correctness oracle for the FFT route: every query row rebuilds its
    own position-weighted key-value summaries.
    """
    phi_q = np.asarray(phi_q, dtype=np.float64)
    phi_k = np.asarray(phi_k, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    n = kernel.n
    if phi_k.shape[0] != n or v.shape[0] != n or phi_q.shape[0] != n:
        raise ShapeError(f"inputs must have {n} rows")
    if phi_q.shape[1] != phi_k.shape[1]:
        raise ShapeError("phi_q and phi_k must share feature width")
    base = np.arange(n) + (n - 1)
    z = np.empty((n, v.shape[1]))
    for i in range(n):
        weights = kernel.c[base - i]
        weighted_k = phi_k * weights[:, None]
        num = phi_q[i] @ (weighted_k.T @ v)
        den = _guard_denominator(phi_q[i] @ weighted_k.sum(axis=0), denom_guard)
        z[i] = num / den
    return z


def _nka_core(phi_q, phi_k, vp, kernel: ToeplitzKernel, denom_guard: float, engine: str):
    n, m = phi_q.shape
    dv = vp.shape[1]
    if engine == "numpy":
        N = embedding_size(n)
        spectrum = circulant_spectrum(kernel, N)
        d1 = np.empty((n, m, dv))
        # Convolve the key-value outer products feature-block by feature-block
        # so the workspace stays cache-sized at large n.
        block = max(1, (1 << 22) // max(N, 1) // dv)
        for a0 in range(0, m, block):
            a1 = min(m, a0 + block)
            prods = (phi_k[:, a0:a1, None] * vp[:, None, :]).reshape(n, -1)
            d1[:, a0:a1, :] = convolve_columns(spectrum, prods, N, n).reshape(n, a1 - a0, dv)
        d2 = convolve_columns(spectrum, phi_k, N, n)
    else:
        prods = (phi_k[:, :, None] * vp[:, None, :]).reshape(n, m * dv)
        d1 = toeplitz_matmul(kernel, prods, engine=engine).reshape(n, m, dv)
        d2 = toeplitz_matmul(kernel, phi_k, engine=engine)
    num = np.matmul(phi_q[:, None, :], d1)[:, 0, :]
    den = _guard_denominator(np.einsum("nm,nm->n", phi_q, d2), denom_guard)
    return num / den[:, None]


def rpe_nka_projected(
    qn, kn, vp, bias: RpeBias, spec: FeatureMapSpec,
    causal: bool = False, denom_guard: float = 1e-6, engine: str = "numpy",
) -> np.ndarray:
    """FFT attention on already projected (and, if desired, normalized) rows.

    This is the layer the analytic backward pass differentiates; `rpe_nka`
    is the user-facing wrapper that adds projections and normalization.
    """
    qn = np.asarray(qn, dtype=np.float64)
    kn = np.asarray(kn, dtype=np.float64)
    vp = np.asarray(vp, dtype=np.float64)
    n = qn.shape[0]
    if n < 1:
        raise ShapeError("attention needs at least one position")
    if kn.shape[0] != n or vp.shape[0] != n:
        raise ShapeError("q, k, v must share their row count")
    if bias.n != n:
        raise ShapeError(f"bias is for n={bias.n}, inputs have n={n}")
    kernel = bias.to_kernel(causal=causal)
    phi_q = apply_feature_map(spec, qn)
    phi_k = apply_feature_map(spec, kn)
    return _nka_core(phi_q, phi_k, vp, kernel, denom_guard, engine)


def rpe_nka(
    q, k, v, wq, wk, wv, bias: RpeBias, spec: FeatureMapSpec,
    cfg: AttentionConfig = AttentionConfig(normalize_qk=True, temperature="none"),
    engine: str = "numpy",
) -> np.ndarray:
    """Normalized kernelized attention with relative positional bias.

    Projects q, k, v, l2-normalizes queries and keys when the config says
    so, exponentiates the bias into Toeplitz weights (masked and causal
    offsets become exact zeros), and assembles the output through two
    FFT-backed Toeplitz products sharing one kernel spectrum.  Total work
    is O(n log n * m * d).
    """
    qn, kn = _project_qk(q, k, wq, wk, cfg)
    vp = matmul(v, wv)
    return rpe_nka_projected(
        qn, kn, vp, bias, spec,
        causal=cfg.causal, denom_guard=cfg.denom_guard, engine=engine,
    )


def rpe_nka_backward_projected(
    qn, kn, vp, bias: RpeBias, spec: FeatureMapSpec, grad_out,
    causal: bool = False, denom_guard: float = 1e-6, engine: str = "numpy",
):
    """Gradients of sum(grad_out * output) w.r.t. qn, kn, vp and the bias.

    Returns (grad_qn, grad_kn, grad_vp, grad_b).  The Toeplitz adjoints run
    through the transposed kernel; the bias gradient carries the chain
    factor c_k = exp(b_k), so masked and causally zeroed offsets get an
    exact zero.
    """
    qn = np.asarray(qn, dtype=np.float64)
    kn = np.asarray(kn, dtype=np.float64)
    vp = np.asarray(vp, dtype=np.float64)
    grad_out = np.asarray(grad_out, dtype=np.float64)
    n = qn.shape[0]
    if bias.n != n:
        raise ShapeError(f"bias is for n={bias.n}, inputs have n={n}")
    kernel = bias.to_kernel(causal=causal)
    phi_q = apply_feature_map(spec, qn)
    phi_k = apply_feature_map(spec, kn)
    m = phi_q.shape[1]
    dv = vp.shape[1]
    if grad_out.shape != (n, dv):
        raise ShapeError(f"grad_out must be {(n, dv)}, got {grad_out.shape}")

    a1 = (phi_k[:, :, None] * vp[:, None, :]).reshape(n, m * dv)
    d1 = toeplitz_matmul(kernel, a1, engine=engine).reshape(n, m, dv)
    d2 = toeplitz_matmul(kernel, phi_k, engine=engine)
    den = np.einsum("nm,nm->n", phi_q, d2)
    den_g = _guard_denominator(den, denom_guard)
    num = np.matmul(phi_q[:, None, :], d1)[:, 0, :]

    g_num = grad_out / den_g[:, None]
    g_den = -np.einsum("nd,nd->n", grad_out, num) / den_g**2
    g_den = np.where(np.abs(den) >= denom_guard, g_den, 0.0)  # clamp region is flat

    g_phi_q = np.matmul(g_num[:, None, :], d1.transpose(0, 2, 1))[:, 0, :]
    g_phi_q += g_den[:, None] * d2
    g_d1 = phi_q[:, :, None] * g_num[:, None, :]
    g_d2 = g_den[:, None] * phi_q

    g_a1 = toeplitz_transpose_matmul(kernel, g_d1.reshape(n, m * dv), engine=engine)
    g_a2 = toeplitz_transpose_matmul(kernel, g_d2, engine=engine)
    g_a1_t = g_a1.reshape(n, m, dv)

    g_phi_k = np.einsum("nmd,nd->nm", g_a1_t, vp) + g_a2
    g_vp = np.einsum("nm,nmd->nd", phi_k, g_a1_t)

    g_c = toeplitz_kernel_corr(
        np.hstack([g_d1.reshape(n, m * dv), g_d2]), np.hstack([a1, phi_k]), n
    )
    g_b = g_c * kernel.c  # chain through c = exp(b); zeroed offsets give 0

    g_qn = feature_map_vjp(spec, qn, phi_q, g_phi_q)
    g_kn = feature_map_vjp(spec, kn, phi_k, g_phi_k)
    return g_qn, g_kn, g_vp, g_b


def rpe_nka_backward(
    q, k, v, wq, wk, wv, bias: RpeBias, spec: FeatureMapSpec, grad_out,
    cfg: AttentionConfig = AttentionConfig(normalize_qk=True, temperature="none"),
    engine: str = "numpy",
):
    """Backward pass taking the same inputs as `rpe_nka`.

    Gradients are reported at the level the kernel machinery consumes:
    the projected (and normalized, per cfg) query and key rows, the
    projected value rows, and the bias offsets.
    """
    qn, kn = _project_qk(q, k, wq, wk, cfg)
    vp = matmul(v, wv)
    return rpe_nka_backward_projected(
        qn, kn, vp, bias, spec, grad_out,
        causal=cfg.causal, denom_guard=cfg.denom_guard, engine=engine,
    )
