"""Command-line front end: generate | monitor | critical-value | bench.

Exit codes: 0 success, 1 usage error, 2 unreadable or malformed data,
3 numerical failure (rank-deficient design or a zero residual scale).
"""

import argparse
import sys

import numpy as np

from .dataio import read_stack, write_break_map, write_stack
from .engine import (
    PHASE_NAMES,
    MonitorConfig,
    monitor_batch,
    profile_run,
    resolve_threads,
)
from .errors import (
    AllNanSeriesError,
    CsvParseError,
    RankDeficiencyError,
    StackFormatError,
    ZeroResidualError,
)
from .mosum import CriticalValueRequest, critical_value
from .synth import SynthSpec, bench_scaling, generate

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

# Series length used by the bench subcommand's synthetic stacks.
BENCH_SERIES_LENGTH = 200


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage; our contract is 1.
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(
        prog="breakwatch",
        description="Season-trend break monitoring over stacks of pixel time series.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a synthetic stack")
    gen.add_argument("--m", type=int, required=True, help="pixel count")
    gen.add_argument("--N", type=int, required=True, help="series length")
    gen.add_argument("--freq", type=float, default=23.0, help="observations per seasonal cycle")
    gen.add_argument("--noise-std", type=float, default=0.01)
    gen.add_argument("--break-mag", type=float, default=0.1, help="level shift added to break series")
    gen.add_argument("--break-frac", type=float, default=0.4, help="tail fraction receiving the shift")
    gen.add_argument("--break-ratio", type=float, default=0.5, help="fraction of series given a break")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--threads", type=int, default=None)
    gen.add_argument("--out", required=True, help="output stack file")
    gen.set_defaults(func=_cmd_generate)

    mon = sub.add_parser("monitor", help="detect breaks in a stack file")
    mon.add_argument("--input", required=True, help="input stack file")
    mon.add_argument("--n", type=int, default=100, help="stable history length")
    mon.add_argument("--h", type=int, default=50, help="moving-sum bandwidth (h <= n)")
    mon.add_argument("--k", type=int, default=3, help="harmonic pairs")
    mon.add_argument("--freq", type=float, default=23.0)
    mon.add_argument("--alpha", type=float, default=0.05)
    mon.add_argument("--lambda", dest="lam", type=float, default=None,
                     help="explicit critical value; simulated when omitted")
    mon.add_argument("--backend", choices=("fused", "naive"), default="fused")
    mon.add_argument("--profile", action="store_true", help="print per-phase timings")
    mon.add_argument("--threads", type=int, default=None)
    mon.add_argument("--out", required=True, help="break-map CSV")
    mon.set_defaults(func=_cmd_monitor)

    crit = sub.add_parser("critical-value", help="simulate the boundary scale")
    crit.add_argument("--alpha", type=float, default=0.05)
    crit.add_argument("--h-frac", type=float, default=0.5)
    crit.add_argument("--horizon", type=float, default=2.0)
    crit.add_argument("--n-sim", type=int, default=100)
    crit.add_argument("--reps", type=int, default=100_000)
    crit.add_argument("--seed", type=int, default=1)
    crit.add_argument("--threads", type=int, default=None)
    crit.set_defaults(func=_cmd_critical_value)

    bench = sub.add_parser("bench", help="time the monitor across pixel counts")
    bench.add_argument("--m-list", required=True, help="comma-separated pixel counts")
    bench.add_argument("--n", type=int, default=100)
    bench.add_argument("--h", type=int, default=50)
    bench.add_argument("--k", type=int, default=3)
    bench.add_argument("--freq", type=float, default=23.0)
    bench.add_argument("--alpha", type=float, default=0.05)
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--threads", type=int, default=None)
    bench.add_argument("--out", required=True, help="timings CSV")
    bench.set_defaults(func=_cmd_bench)

    return parser


def _cmd_generate(args) -> int:
    spec = SynthSpec(
        n_pixels=args.m,
        n_obs=args.N,
        freq=args.freq,
        noise_std=args.noise_std,
        break_mag=args.break_mag,
        break_frac=args.break_frac,
        break_ratio=args.break_ratio,
        seed=args.seed,
    )
    stack, truth = generate(spec, threads=args.threads)
    written = write_stack(stack, args.out)
    print(
        f"wrote {args.out}: {stack.n_obs} observations x {stack.n_pixels} pixels,"
        f" {int(truth.sum())} break series, {written} bytes"
    )
    return EXIT_OK


def _cmd_monitor(args) -> int:
    config = MonitorConfig(
        history=args.n,
        bandwidth=args.h,
        harmonics=args.k,
        freq=args.freq,
        alpha=args.alpha,
        crit_value=args.lam,
        backend=args.backend,
    )
    stack = read_stack(args.input)
    if args.profile:
        break_map, timings = profile_run(stack, config, threads=args.threads)
    else:
        break_map = monitor_batch(stack, config, threads=args.threads)
        timings = None
    write_break_map(break_map, args.out)
    print(f"lambda: {break_map.crit_value:.9g}")
    print(f"breaks: {break_map.break_count} / {len(break_map)} pixels")
    if timings is not None:
        for name in PHASE_NAMES:
            print(f"{name}: {getattr(timings, name):.6f} s")
        print(f"total: {timings.total:.6f} s")
    return EXIT_OK


def _cmd_critical_value(args) -> int:
    request = CriticalValueRequest(
        alpha=args.alpha,
        h_frac=args.h_frac,
        horizon=args.horizon,
        n_sim=args.n_sim,
        reps=args.reps,
        seed=args.seed,
    )
    lam = critical_value(request, threads=resolve_threads(args.threads))
    print(f"lambda: {lam:.9g}")
    return EXIT_OK


def _cmd_bench(args) -> int:
    try:
        m_values = [int(part) for part in args.m_list.split(",") if part.strip()]
    except ValueError:
        raise UsageError(
            f"--m-list must be comma-separated integers, got {args.m_list!r}"
        ) from None
    if not m_values:
        raise UsageError("--m-list must name at least one pixel count")
    config = MonitorConfig(
        history=args.n,
        bandwidth=args.h,
        harmonics=args.k,
        freq=args.freq,
        alpha=args.alpha,
    )
    template = SynthSpec(
        n_pixels=1, n_obs=BENCH_SERIES_LENGTH, freq=args.freq, seed=args.seed
    )
    rows = bench_scaling(
        m_values, config, template, threads=args.threads, sink=args.out
    )
    for m, timings in rows:
        print(f"m={m}: total {timings.total:.6f} s")
    print(f"wrote {args.out}")
    return EXIT_OK


def dispatch(argv) -> int:
    """Run one invocation and return its exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:  # --help and friends
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (StackFormatError, CsvParseError, AllNanSeriesError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (RankDeficiencyError, ZeroResidualError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def main():
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
