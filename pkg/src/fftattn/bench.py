"""Forward-speed benchmark over (variant, n, m) grids.

Inputs, weights, bias offsets, and feature maps are all sampled before
the timed region; each timed repeat runs one full forward pass.  The
timed region is limited to one thread by default (config switch) so the
scaling fits stay clean.  Medians with median absolute deviation are
reported per cell.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import asdict, dataclass
from statistics import median

import numpy as np
from threadpoolctl import threadpool_limits

from .attention import (
    AttentionConfig,
    RpeBias,
    kernelized_attention,
    kernelized_attention_rpe_naive,
    rpe_nka,
    softmax_attention,
    _project_qk,
)
from .features import PRF, apply_feature_map, sample_feature_map
from .rng import RngState, gaussian_matrix

VARIANTS = ("softmax", "kernelized", "rpe_nka", "rpe_naive")

CSV_FIELDS = ("variant", "n", "m", "d", "repeats", "median_seconds", "mad_seconds")


@dataclass(frozen=True)
class BenchRecord:
    variant: str
    n: int
    m: int
    d: int
    repeats: int
    median_seconds: float
    mad_seconds: float


def records_to_csv(records: list[BenchRecord]) -> str:
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow(CSV_FIELDS)
    for r in records:
        writer.writerow([r.variant, r.n, r.m, r.d, r.repeats,
                         repr(r.median_seconds), repr(r.mad_seconds)])
    return out.getvalue()


def records_from_csv(text: str) -> list[BenchRecord]:
    rows = csv.DictReader(io.StringIO(text))
    return [
        BenchRecord(variant=r["variant"], n=int(r["n"]), m=int(r["m"]), d=int(r["d"]),
                    repeats=int(r["repeats"]),
                    median_seconds=float(r["median_seconds"]),
                    mad_seconds=float(r["mad_seconds"]))
        for r in rows
    ]


def _make_forward(variant: str, n: int, m: int, d: int, rng: RngState):
    """Build a zero-argument forward closure with all sampling done up front."""
    q = gaussian_matrix(rng, n, d)
    k = gaussian_matrix(rng, n, d)
    v = gaussian_matrix(rng, n, d)
    wq = gaussian_matrix(rng, d, d) / np.sqrt(d)
    wk = gaussian_matrix(rng, d, d) / np.sqrt(d)
    wv = gaussian_matrix(rng, d, d) / np.sqrt(d)
    if variant == "softmax":
        cfg = AttentionConfig()
        return lambda: softmax_attention(q, k, v, wq, wk, wv, None, cfg)
    spec = sample_feature_map(PRF, m, d, rng)
    if variant == "kernelized":
        cfg = AttentionConfig(temperature="kernel_matched")

        def forward():
            qn, kn = _project_qk(q, k, wq, wk, cfg)
            return kernelized_attention(apply_feature_map(spec, qn),
                                        apply_feature_map(spec, kn), v @ wv)

        return forward
    bias = RpeBias.gaussian(rng, n, scale=0.5)
    if variant == "rpe_nka":
        cfg = AttentionConfig(normalize_qk=True, temperature="none")
        return lambda: rpe_nka(q, k, v, wq, wk, wv, bias, spec, cfg)
    if variant == "rpe_naive":
        cfg = AttentionConfig(normalize_qk=True, temperature="none")
        kernel = bias.to_kernel()

        def forward():
            qn, kn = _project_qk(q, k, wq, wk, cfg)
            return kernelized_attention_rpe_naive(
                apply_feature_map(spec, qn), apply_feature_map(spec, kn), v @ wv, kernel)

        return forward
    raise ValueError(f"unknown variant {variant!r}, expected one of {VARIANTS}")


def run_benchmark(
    variants, ns, ms, d: int = 64, repeats: int = 5, warmup: int = 1,
    seed: int = 0, single_thread: bool = True,
):
    """Time the grid; returns (records, skipped) where skipped lists cells
    that ran out of memory rather than crashing the run."""
    if repeats < 3:
        raise ValueError("repeats must be >= 3 for a meaningful median")
    records: list[BenchRecord] = []
    skipped: list[dict] = []
    master = RngState(seed)
    cell_index = 0
    for variant in variants:
        for n in ns:
            for m in ms:
                rng = master.spawn(cell_index)
                cell_index += 1
                try:
                    forward = _make_forward(variant, int(n), int(m), d, rng)
                    limits = threadpool_limits(limits=1) if single_thread else None
                    try:
                        for _ in range(warmup):
                            forward()
                        times = []
                        for _ in range(repeats):
                            t0 = time.perf_counter()
                            forward()
                            times.append(time.perf_counter() - t0)
                    finally:
                        if limits is not None:
                            limits.unregister()
                except MemoryError:
                    skipped.append({"variant": variant, "n": int(n), "m": int(m),
                                    "d": d, "reason": "out of memory"})
                    continue
                med = median(times)
                mad = median(abs(t - med) for t in times)
                records.append(BenchRecord(variant=variant, n=int(n), m=int(m), d=d,
                                           repeats=repeats,
                                           median_seconds=med, mad_seconds=mad))
    return records, skipped


def doubling_ratios(records: list[BenchRecord], variant: str, m: int) -> list[float]:
    """Median-time ratios between consecutive doublings of n for one variant."""
    times = {r.n: r.median_seconds for r in records if r.variant == variant and r.m == m}
    ns = sorted(times)
    return [times[b] / times[a] for a, b in zip(ns, ns[1:]) if b == 2 * a]
