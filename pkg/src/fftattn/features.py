"""Kernel feature maps for linear-time attention.

The randomized maps estimate the exponential kernel exp(x.y) as an
inner product of features:

* ``prf``: positive random features, exp(w.x - |x|^2/2) / sqrt(m) with
  Gaussian rows w.  Strictly positive, unbiased.
* ``trf``: trigonometric random features, [sin(w.x), cos(w.x)] scaled by
  exp(+|x|^2/2) / sqrt(m).  Unbiased but can produce negative estimates.
* ``sphere_prf``: prf with rows drawn uniformly on the radius-sqrt(d) sphere.
* ``orf``: prf with rows orthogonalized within blocks of size d.
* ``elu_plus_one``: deterministic elu(x)+1 applied elementwise; positive
  but not an exponential-kernel estimator.

A map is sampled once per attention call and shared between queries and
keys, since both sides must use the same projection rows.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import FeatureMapOverflowError, ShapeError
from .linalg import orthogonal_block_sample, row_l2_normalize
from .matio import read_matrix, write_matrix
from .rng import RngState, gaussian_matrix

PRF = "prf"
TRF = "trf"
SPHERE_PRF = "sphere_prf"
ORF = "orf"
ELU_PLUS_ONE = "elu_plus_one"

KINDS = (PRF, TRF, SPHERE_PRF, ORF, ELU_PLUS_ONE)
RANDOMIZED_KINDS = (PRF, TRF, SPHERE_PRF, ORF)

# exp() overflows float64 just above 709; guard a bit below.
MAX_EXPONENT = 700.0


@dataclass(frozen=True)
class FeatureMapSpec:
    """A sampled feature map: kind, width, and frozen projection rows."""

    kind: str
    m: int
    d: int
    w: Optional[np.ndarray]
    seed: int

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown feature map kind {self.kind!r}")
        if self.kind in RANDOMIZED_KINDS:
            if self.w is None or self.w.shape != (self.m, self.d):
                shape = None if self.w is None else self.w.shape
                raise ShapeError(
                    f"{self.kind} projection must be {self.m}x{self.d}, got {shape}"
                )

    @property
    def output_dim(self) -> int:
        if self.kind == TRF:
            return 2 * self.m
        if self.kind == ELU_PLUS_ONE:
            return self.d
        return self.m


def sample_feature_map(kind: str, m: int, d: int, rng: RngState) -> FeatureMapSpec:
    """Draw projection rows for `kind` and freeze them in a spec."""
    if m < 1 or d < 1:
        raise ValueError(f"feature map needs m, d >= 1, got m={m}, d={d}")
    if kind in (PRF, TRF):
        w = gaussian_matrix(rng, m, d)
    elif kind == SPHERE_PRF:
        w = row_l2_normalize(gaussian_matrix(rng, m, d)) * np.sqrt(d)
    elif kind == ORF:
        w = orthogonal_block_sample(rng, m, d)
    elif kind == ELU_PLUS_ONE:
        w = None
    else:
        raise ValueError(f"unknown feature map kind {kind!r}")
    return FeatureMapSpec(kind=kind, m=m, d=d, w=w, seed=rng.seed)


def apply_feature_map(spec: FeatureMapSpec, x: np.ndarray) -> np.ndarray:
    """Apply the map row-wise to an (n, d) matrix.

    Output width is m for the prf family, 2m for trf, d for elu_plus_one.
    For the exponential maps the full exponent is assembled before the
    single exp call; exponents beyond MAX_EXPONENT raise
    FeatureMapOverflowError instead of returning Inf.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != spec.d:
        raise ShapeError(f"input must be (n, {spec.d}), got {x.shape}")
    if spec.kind == ELU_PLUS_ONE:
        return np.where(x >= 0.0, x + 1.0, np.exp(np.minimum(x, 0.0)))
    sq_norms_half = 0.5 * np.einsum("ij,ij->i", x, x)
    if spec.kind == TRF:
        if np.max(sq_norms_half, initial=0.0) > MAX_EXPONENT:
            raise FeatureMapOverflowError(
                "trf prefactor exponent |x|^2/2 exceeds float64 range"
            )
        t = x @ spec.w.T
        prefactor = np.exp(sq_norms_half)[:, None] / np.sqrt(spec.m)
        return np.hstack([np.sin(t), np.cos(t)]) * prefactor
    exponents = x @ spec.w.T - sq_norms_half[:, None]
    if exponents.size and np.max(exponents) > MAX_EXPONENT:
        raise FeatureMapOverflowError(
            "prf exponent w.x - |x|^2/2 exceeds float64 range"
        )
    return np.exp(exponents) / np.sqrt(spec.m)


def kernel_estimate(spec: FeatureMapSpec, x: np.ndarray, y: np.ndarray) -> float:
    """phi(x) . phi(y), the randomized estimate of exp(x.y)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    if x.shape != (1, spec.d) or y.shape != (1, spec.d):
        raise ShapeError(f"kernel_estimate expects rows of dimension {spec.d}")
    return float(apply_feature_map(spec, x)[0] @ apply_feature_map(spec, y)[0])


def prf_variance_closed_form(x: np.ndarray, y: np.ndarray, m: int) -> float:
    """Variance of the prf kernel estimate with m features.

    Equals (exp(|x+y|^2) - 1) * exp(x.y)^2 / m, which blows up quickly in
    the query/key norms; this is the quantity that norm control keeps small.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ShapeError("x and y must have equal dimension")
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    s = float(np.sum((x + y) ** 2))
    dot = float(x @ y)
    return (np.exp(s) - 1.0) * np.exp(dot) ** 2 / m


def feature_map_vjp(
    spec: FeatureMapSpec, x: np.ndarray, phi: np.ndarray, grad_phi: np.ndarray
) -> np.ndarray:
    """Pull a gradient in feature space back to the map's input rows.

    `phi` must be apply_feature_map(spec, x); `grad_phi` the gradient of a
    scalar loss with respect to it.  Returns the gradient with respect to x.
    """
    x = np.asarray(x, dtype=np.float64)
    if spec.kind == ELU_PLUS_ONE:
        return grad_phi * np.where(x >= 0.0, 1.0, np.exp(np.minimum(x, 0.0)))
    if spec.kind == TRF:
        m = spec.m
        gs, gc = grad_phi[:, :m], grad_phi[:, m:]
        ps, pc = phi[:, :m], phi[:, m:]
        # d(pref*sin)/dx = pref*cos * w + pref*sin * x, and cos branch likewise.
        gx = (gs * pc - gc * ps) @ spec.w
        scale = np.einsum("ij,ij->i", gs, ps) + np.einsum("ij,ij->i", gc, pc)
        return gx + scale[:, None] * x
    weighted = grad_phi * phi
    return weighted @ spec.w - np.sum(weighted, axis=1, keepdims=True) * x


def save_feature_map(spec: FeatureMapSpec, basepath: str) -> None:
    """Write `<basepath>.json` plus `<basepath>.w.tatt` for randomized kinds."""
    header = {"kind": spec.kind, "m": spec.m, "d": spec.d, "seed": spec.seed}
    with open(f"{basepath}.json", "w") as fh:
        json.dump(header, fh, indent=2)
        fh.write("\n")
    if spec.w is not None:
        write_matrix(f"{basepath}.w.tatt", spec.w)


def load_feature_map(basepath: str) -> FeatureMapSpec:
    with open(f"{basepath}.json") as fh:
        header = json.load(fh)
    kind = header["kind"]
    w = read_matrix(f"{basepath}.w.tatt") if kind in RANDOMIZED_KINDS else None
    return FeatureMapSpec(kind=kind, m=header["m"], d=header["d"], w=w, seed=header["seed"])
