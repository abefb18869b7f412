"""Oracle-equivalence suite: every fast path against its slow ground truth.

The checks mirror the package's layered trust chain: the radix-2 FFT
against a quadratic DFT, the FFT Toeplitz product against the naive one,
the FFT attention against the quadratic position-weighted oracle, and the
analytic gradients against central finite differences.
"""

from __future__ import annotations

from contextlib import nullcontext

import numpy as np

from .attention import (
    AttentionConfig,
    RpeBias,
    kernelized_attention,
    rpe_nka_backward_projected,
    kernelized_attention_rpe_naive,
    rpe_nka_projected,
)
from .features import PRF, apply_feature_map, sample_feature_map
from .fft import fft, twiddle_fault
from .rng import RngState, gaussian_matrix
from .toeplitz import ToeplitzKernel, toeplitz_matmul, toeplitz_matmul_naive
from .linalg import row_l2_normalize


def dft_naive(x: np.ndarray, inverse: bool = False) -> np.ndarray:
    """Quadratic DFT straight from the definition; the FFT's oracle."""
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    sign = 2j if inverse else -2j
    mat = np.exp(sign * np.pi * np.outer(np.arange(n), np.arange(n)) / n)
    out = x @ mat.T
    return out / n if inverse else out


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-300)
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)) / scale)


def finite_difference_gradients(
    qn, kn, vp, bias: RpeBias, spec, grad_out,
    causal: bool = False, denom_guard: float = 1e-6, step: float = 1e-5,
):
    """Central-difference gradients of sum(grad_out * output) for all blocks."""

    def loss(qn_, kn_, vp_, b_):
        bias_ = RpeBias(n=bias.n, b=b_, masked=bias.masked.copy())
        z = rpe_nka_projected(qn_, kn_, vp_, bias_, spec,
                              causal=causal, denom_guard=denom_guard)
        return float(np.sum(grad_out * z))

    def grad_of(array, rebuild):
        g = np.zeros_like(array)
        flat = array.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = loss(*rebuild())
            flat[i] = orig - step
            lo = loss(*rebuild())
            flat[i] = orig
            g.ravel()[i] = (hi - lo) / (2 * step)
        return g

    qn = np.array(qn, dtype=np.float64)
    kn = np.array(kn, dtype=np.float64)
    vp = np.array(vp, dtype=np.float64)
    b = np.array(bias.b, dtype=np.float64)
    current = lambda: (qn, kn, vp, b)
    return (
        grad_of(qn, current),
        grad_of(kn, current),
        grad_of(vp, current),
        grad_of(b, current),
    )


def _check_fft_vs_dft(rng: RngState) -> float:
    worst = 0.0
    for n in (2, 8, 64):
        x = rng.normal(n) + 1j * rng.normal(n)
        worst = max(worst, rel_err(fft(x), dft_naive(x)))
        worst = max(worst, rel_err(fft(x, inverse=True), dft_naive(x, inverse=True)))
    return worst


def _check_fft_roundtrip(rng: RngState) -> float:
    x = rng.normal(256) + 1j * rng.normal(256)
    return rel_err(fft(fft(x), inverse=True), x)


def _check_toeplitz(rng: RngState) -> float:
    worst = 0.0
    for n in (1, 2, 7, 64, 257):
        kernel = ToeplitzKernel.from_offsets(rng.normal(2 * n - 1))
        x = gaussian_matrix(rng, n, 3)
        want = toeplitz_matmul_naive(kernel, x)
        for engine in ("numpy", "radix2"):
            worst = max(worst, rel_err(toeplitz_matmul(kernel, x, engine=engine), want))
    return worst


def _nka_instance(rng: RngState, n: int, m: int, d: int):
    qn = row_l2_normalize(gaussian_matrix(rng, n, d))
    kn = row_l2_normalize(gaussian_matrix(rng, n, d))
    vp = gaussian_matrix(rng, n, d)
    bias = RpeBias.gaussian(rng, n, scale=0.5)
    spec = sample_feature_map(PRF, m, d, rng)
    return qn, kn, vp, bias, spec


def _check_nka_vs_naive(rng: RngState, causal: bool) -> float:
    worst = 0.0
    for n, m, d in ((7, 4, 4), (64, 16, 8), (257, 4, 8)):
        qn, kn, vp, bias, spec = _nka_instance(rng, n, m, d)
        kernel = bias.to_kernel(causal=causal)
        want = kernelized_attention_rpe_naive(
            apply_feature_map(spec, qn), apply_feature_map(spec, kn), vp, kernel)
        got = rpe_nka_projected(qn, kn, vp, bias, spec, causal=causal)
        worst = max(worst, rel_err(got, want))
    return worst


def _check_reduction(rng: RngState) -> float:
    n, m, d = 64, 8, 4
    qn = gaussian_matrix(rng, n, d) * 0.5
    kn = gaussian_matrix(rng, n, d) * 0.5
    vp = gaussian_matrix(rng, n, d)
    spec = sample_feature_map(PRF, m, d, rng)
    plain = kernelized_attention(apply_feature_map(spec, qn), apply_feature_map(spec, kn), vp)
    with_zero_bias = rpe_nka_projected(qn, kn, vp, RpeBias.zeros(n), spec)
    return rel_err(with_zero_bias, plain)


def _check_gradients(rng: RngState, causal: bool) -> float:
    n, m, d = 8, 4, 4
    qn, kn, vp, bias, spec = _nka_instance(rng, n, m, d)
    grad_out = gaussian_matrix(rng, n, d)
    analytic = rpe_nka_backward_projected(qn, kn, vp, bias, spec, grad_out, causal=causal)
    numeric = finite_difference_gradients(qn, kn, vp, bias, spec, grad_out, causal=causal)
    return max(rel_err(a, f) for a, f in zip(analytic, numeric))


def run_selftest(seed: int = 0, perturb_fft: bool = False) -> dict:
    """Run every oracle check at the given seed; deterministic output."""
    suite = [
        ("fft_vs_dft_oracle", _check_fft_vs_dft, 1e-10),
        ("fft_roundtrip", _check_fft_roundtrip, 1e-12),
        ("toeplitz_fft_vs_naive", _check_toeplitz, 1e-9),
        ("rpe_nka_vs_naive_plain", lambda r: _check_nka_vs_naive(r, False), 1e-8),
        ("rpe_nka_vs_naive_causal", lambda r: _check_nka_vs_naive(r, True), 1e-8),
        ("rpe_nka_reduction_to_kernelized", _check_reduction, 1e-10),
        ("gradients_vs_finite_difference_plain", lambda r: _check_gradients(r, False), 1e-5),
        ("gradients_vs_finite_difference_causal", lambda r: _check_gradients(r, True), 1e-5),
    ]
    checks = []
    context = twiddle_fault() if perturb_fft else nullcontext()
    with context:
        for index, (name, fn, tolerance) in enumerate(suite):
            err = fn(RngState(seed).spawn(index + 1))
            checks.append({
                "name": name,
                "passed": bool(err <= tolerance),
                "max_rel_err": repr(float(err)),
                "tolerance": repr(tolerance),
            })
    return {
        "seed": seed,
        "perturb_fft": perturb_fft,
        "checks": checks,
        "all_passed": all(c["passed"] for c in checks),
    }
