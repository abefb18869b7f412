"""Normalized kernelized attention with relative positional bias, with the
position-weighting step computed in O(n log n) by FFT Toeplitz products,
plus exact quadratic oracles, feature-map diagnostics, and benchmarks.
"""

from .analysis import (
    ApproxErrorCell,
    ApproxErrorReport,
    ComplexityReport,
    TailPoint,
    approx_error_experiment,
    rpe_expressiveness_demo,
    sample_complexity_experiment,
    theorem_m_bound,
    variance_validation,
)
from .attention import (
    AttentionConfig,
    RpeBias,
    attention_scores,
    kernelized_attention,
    kernelized_attention_rpe_naive,
    rpe_nka,
    rpe_nka_backward,
    rpe_nka_backward_projected,
    rpe_nka_projected,
    softmax_attention,
)
from .bench import BenchRecord, run_benchmark
from .errors import DegenerateRowError, FeatureMapOverflowError, ShapeError
from .features import (
    ELU_PLUS_ONE,
    ORF,
    PRF,
    SPHERE_PRF,
    TRF,
    FeatureMapSpec,
    apply_feature_map,
    kernel_estimate,
    load_feature_map,
    prf_variance_closed_form,
    sample_feature_map,
    save_feature_map,
)
from .fft import fft
from .linalg import matmul, numerical_rank, orthogonal_block_sample, row_l2_normalize
from .matio import read_matrix, write_matrix
from .rng import RngState, gaussian_matrix
from .selftest import run_selftest
from .toeplitz import (
    ToeplitzKernel,
    causal_mask,
    toeplitz_matmul,
    toeplitz_matmul_naive,
    toeplitz_transpose_matmul,
)

__version__ = "0.1.0"

__all__ = [
    "ApproxErrorCell", "ApproxErrorReport", "AttentionConfig", "BenchRecord",
    "ComplexityReport", "DegenerateRowError", "ELU_PLUS_ONE",
    "FeatureMapOverflowError", "FeatureMapSpec", "ORF", "PRF", "RngState",
    "RpeBias", "SPHERE_PRF", "ShapeError", "TRF", "TailPoint", "ToeplitzKernel",
    "apply_feature_map", "approx_error_experiment", "attention_scores",
    "causal_mask", "fft", "gaussian_matrix", "kernel_estimate",
    "kernelized_attention", "kernelized_attention_rpe_naive", "load_feature_map",
    "matmul", "numerical_rank", "orthogonal_block_sample",
    "prf_variance_closed_form", "read_matrix", "rpe_expressiveness_demo",
    "rpe_nka", "rpe_nka_backward", "rpe_nka_backward_projected",
    "rpe_nka_projected", "row_l2_normalize", "run_benchmark", "run_selftest",
    "sample_complexity_experiment", "sample_feature_map", "save_feature_map",
    "softmax_attention", "theorem_m_bound", "toeplitz_matmul",
    "toeplitz_matmul_naive", "toeplitz_transpose_matmul", "variance_validation",
    "write_matrix",
]
