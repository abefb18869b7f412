"""Command-line front end: bench, selftest, and the numerical experiments.

Exit codes: 0 success, 1 failed check or runtime error, 2 usage error.
All randomness is controlled by --seed; timing values are the only
nondeterministic output.
"""

from __future__ import annotations

import argparse
import json
import sys

from .analysis import (
    approx_error_experiment,
    rpe_expressiveness_demo,
    sample_complexity_experiment,
    unit_sphere_rows,
    variance_validation,
)
from .bench import VARIANTS, records_to_csv, run_benchmark
from .rng import RngState
from .selftest import run_selftest


def _int_list(text: str) -> list[int]:
    return [int(part) for part in text.split(",") if part]


def _float_list(text: str) -> list[float]:
    return [float(part) for part in text.split(",") if part]


def _write_output(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    try:
        with open(out, "w") as fh:
            fh.write(text)
    except OSError as exc:
        raise RuntimeError(f"cannot write output path {out!r}: {exc}") from exc


def _emit_report(report, args) -> None:
    want_json = args.json or (args.out is not None and args.out.endswith(".json"))
    _write_output(report.to_json() if want_json else report.to_csv(), args.out)


def cmd_bench(args) -> int:
    variants = [v for v in args.variant.split(",") if v]
    for v in variants:
        if v not in VARIANTS:
            print(f"unknown variant {v!r}; choose from {', '.join(VARIANTS)}", file=sys.stderr)
            return 2
    if any(n <= 0 for n in args.n) or any(m <= 0 for m in args.m):
        print("lengths and feature widths must be positive", file=sys.stderr)
        return 2
    records, skipped = run_benchmark(
        variants, args.n, args.m, d=args.d, repeats=args.repeats,
        warmup=args.warmup, seed=args.seed, single_thread=not args.allow_parallel,
    )
    for cell in skipped:
        print(f"skipped {cell['variant']} n={cell['n']} m={cell['m']}: {cell['reason']}",
              file=sys.stderr)
    _write_output(records_to_csv(records), args.out)
    return 0


def cmd_selftest(args) -> int:
    summary = run_selftest(seed=args.seed, perturb_fft=args.perturb_fft)
    for check in summary["checks"]:
        status = "ok" if check["passed"] else "FAIL"
        print(f"{status:4s} {check['name']} (max_rel_err={check['max_rel_err']})",
              file=sys.stderr)
    text = json.dumps(summary, indent=2) + "\n"
    _write_output(text, args.out)
    if not summary["all_passed"]:
        failing = ", ".join(c["name"] for c in summary["checks"] if not c["passed"])
        print(f"failed checks: {failing}", file=sys.stderr)
        return 1
    return 0


def cmd_experiment(args) -> int:
    rng = RngState(args.seed)
    if args.experiment == "approx-error":
        report = approx_error_experiment(args.d, args.keys, args.R, args.m,
                                         args.trials, rng)
        _emit_report(report, args)
    elif args.experiment == "variance":
        x = unit_sphere_rows(rng.spawn(0), 1, args.d)[0]
        y = unit_sphere_rows(rng.spawn(1), 1, args.d)[0]
        result = variance_validation(x, y, args.m[0], args.samples, rng.spawn(2))
        _write_output(json.dumps(result, indent=2) + "\n", args.out)
    elif args.experiment == "complexity":
        report = sample_complexity_experiment(args.n, args.R[0], args.eps, args.delta,
                                              args.m, args.trials, rng, d=args.d)
        _emit_report(report, args)
    elif args.experiment == "rank":
        result = rpe_expressiveness_demo(args.n, args.d, rng)
        _write_output(json.dumps(result, indent=2) + "\n", args.out)
    else:  # pragma: no cover - argparse restricts choices
        return 2
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fftattn",
        description="FFT-accelerated kernelized attention with relative positional bias",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--seed", type=int, default=0, help="master RNG seed")
        p.add_argument("--out", type=str, default=None, help="output file path")
        p.add_argument("--json", action="store_true", help="emit JSON instead of CSV")

    bench = sub.add_parser("bench", help="forward-speed benchmark grid")
    add_common(bench)
    bench.add_argument("--variant", type=str, default="rpe_nka,softmax",
                       help=f"comma list from {{{','.join(VARIANTS)}}}")
    bench.add_argument("--n", type=_int_list, default=[1024, 2048, 4096, 8192, 16384])
    bench.add_argument("--m", type=_int_list, default=[16, 64, 256])
    bench.add_argument("--d", type=int, default=64)
    bench.add_argument("--repeats", type=int, default=5)
    bench.add_argument("--warmup", type=int, default=1)
    bench.add_argument("--allow-parallel", action="store_true",
                       help="lift the single-thread limit inside the timed region")
    bench.set_defaults(func=cmd_bench)

    selftest = sub.add_parser("selftest", help="run the oracle-equivalence suite")
    add_common(selftest)
    selftest.add_argument("--perturb-fft", action="store_true",
                          help="fault injection: flip one FFT twiddle sign")
    selftest.set_defaults(func=cmd_selftest)

    experiment = sub.add_parser("experiment", help="numerical studies")
    add_common(experiment)
    experiment.add_argument("experiment",
                            choices=["approx-error", "variance", "complexity", "rank"])
    experiment.add_argument("--d", type=int, default=64,
                            help="input dimension (4 for variance defaults)")
    experiment.add_argument("--keys", type=int, default=1024)
    experiment.add_argument("--R", type=_float_list, default=[1.0, 2.0, 4.0, 8.0, 16.0])
    experiment.add_argument("--m", type=_int_list, default=[4, 16, 64, 256, 1024])
    experiment.add_argument("--trials", type=int, default=100)
    experiment.add_argument("--samples", type=int, default=1_000_000)
    experiment.add_argument("--eps", type=float, default=0.5)
    experiment.add_argument("--delta", type=float, default=0.1)
    experiment.add_argument("--n", type=int, default=16)
    experiment.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "experiment" and args.experiment == "variance" and args.d == 64:
        args.d = 4  # variance defaults to small unit inputs
    try:
        return args.func(args)
    except RuntimeError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except OverflowError as exc:
        print(f"range error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
