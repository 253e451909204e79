#!/usr/bin/env python3
"""
mergepath-bench: generate inputs, time merge and sort variants over thread
sweeps, replay merges through the cache simulator, and collect reports.

Every timed run is checked against the sequential reference before its
timing is kept, so a report never holds an unverified row. Reports go to
stdout (or --output) as CSV or JSON; logs go to stderr.
"""

import argparse
import csv
import io
import json
import logging
import math
import statistics
import sys
import time
from collections.abc import Callable, Sequence
from pathlib import Path
from typing import Any, Literal, NoReturn

import numpy as np
from pydantic import BaseModel, Field
from pydantic import ValidationError as ModelValidationError

from .arrayfile import FileFormat, read_keys, write_keys
from .cachesim import (
    CacheConfig,
    Layout,
    MergeVariant,
    Parallel,
    Policy,
    Segmented,
    Sequential,
    simulate,
    trace_merge,
    verify_conflict_freedom,
)
from .config import Settings, configure_logging
from .errors import InputValidationError, InvalidArgumentError, OracleMismatchError
from .mergepath import MergeInput, is_sorted, reference_merge, reference_sort
from .parallel import MergeOutput, Sink, parallel_merge, positional_checksum, segmented_parallel_merge
from .sorters import cache_efficient_parallel_sort, parallel_merge_sort

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_VALIDATION = 3
EXIT_MISMATCH = 4

Distribution = Literal["uniform", "all_equal", "disjoint_ranges", "interleaved"]
SortOrder = Literal["random", "presorted", "reverse", "sawtooth"]
MergeVariantName = Literal["regular", "segmented"]
SortVariantName = Literal["plain", "cache_efficient"]

KEY_LOW = -(2**62)
KEY_HIGH = 2**62
SAWTOOTH_PERIOD = 1000
DEFAULT_SEGMENTS = (10, 5, 2)


class BenchRow(BaseModel):
    variant: str
    n: int
    p: int = Field(ge=1)
    cache_elems: int | None = None
    sink: str = "memory"
    repetitions: int = Field(ge=3)
    median_seconds: float
    mean_seconds: float
    speedup_vs_p1: float = 1.0
    comparisons_partitioning: int | None = None
    comparisons_merging: int | None = None


# ---- input generation -------------------------------------------------------


def generate_pair(
    size_a: int, size_b: int, seed: int, distribution: Distribution = "uniform"
) -> tuple[np.ndarray, np.ndarray]:
    """Two sorted int64 arrays, identical for identical arguments"""
    if size_a < 0 or size_b < 0:
        raise InvalidArgumentError("array sizes must be >= 0")
    rng = np.random.default_rng(seed)
    if distribution == "uniform":
        a = rng.integers(KEY_LOW, KEY_HIGH, size_a)
        b = rng.integers(KEY_LOW, KEY_HIGH, size_b)
    elif distribution == "all_equal":
        value = rng.integers(KEY_LOW, KEY_HIGH)
        a = np.full(size_a, value)
        b = np.full(size_b, value)
    elif distribution == "disjoint_ranges":
        # every element of A is greater than every element of B
        a = rng.integers(0, KEY_HIGH, size_a)
        b = rng.integers(KEY_LOW, 0, size_b)
    elif distribution == "interleaved":
        keys = np.sort(rng.integers(KEY_LOW, KEY_HIGH, size_a + size_b))
        paired = 2 * min(size_a, size_b)
        to_a = np.zeros(size_a + size_b, dtype=bool)
        to_a[0:paired:2] = True
        if size_a > size_b:
            to_a[paired:] = True
        a, b = keys[to_a], keys[~to_a]
    else:
        raise InvalidArgumentError(f"unknown distribution: {distribution}")
    return np.sort(a).astype(np.int64), np.sort(b).astype(np.int64)


def generate_unsorted(n: int, seed: int, order: SortOrder = "random") -> np.ndarray:
    """Sort input of n int64 keys in the given initial order"""
    if n < 0:
        raise InvalidArgumentError("size must be >= 0")
    rng = np.random.default_rng(seed)
    keys = rng.integers(KEY_LOW, KEY_HIGH, n)
    if order == "presorted":
        keys = np.sort(keys)
    elif order == "reverse":
        keys = np.sort(keys)[::-1]
    elif order == "sawtooth":
        keys = np.arange(n, dtype=np.int64) % SAWTOOTH_PERIOD
    elif order != "random":
        raise InvalidArgumentError(f"unknown order: {order}")
    return np.ascontiguousarray(keys, dtype=np.int64)


# ---- timing -------------------------------------------------------------------


def default_threads() -> list[int]:
    """1, 2, 4, ... up to the hardware thread count, which is always included"""
    cpus = Settings.from_env().threads
    sweep = [1 << k for k in range(cpus.bit_length()) if 1 << k <= cpus]
    return sorted({*sweep, cpus})


def _time(call: Callable[[], Any], reps: int, verify: Callable[[Any], None]) -> tuple[list[float], Any]:
    timings: list[float] = []
    result = None
    for _ in range(reps):
        start = time.perf_counter()
        result = call()
        timings.append(time.perf_counter() - start)
        verify(result)
    return timings, result


def _with_speedups(rows: list[BenchRow]) -> list[BenchRow]:
    """speedup_vs_p1 = median at p=1 / median of the row, per (variant, n, C, sink)"""
    baselines = {
        (r.variant, r.n, r.cache_elems, r.sink): r.median_seconds for r in rows if r.p == 1
    }
    for row in rows:
        base = baselines.get((row.variant, row.n, row.cache_elems, row.sink))
        if base is not None and row.median_seconds > 0:
            row.speedup_vs_p1 = base / row.median_seconds
    return rows


def _merge_verifier(oracle: np.ndarray, sink: Sink) -> Callable[[MergeOutput], None]:
    expected = positional_checksum(oracle) if sink == "register" else None

    def verify(result: MergeOutput) -> None:
        if sink == "register":
            ok = result.checksum == expected
        else:
            ok = result.s is not None and np.array_equal(result.s, oracle)
        if not ok:
            raise OracleMismatchError(f"{result.report.variant} merge differs from the reference merge")

    return verify


def run_merge(
    a: np.ndarray,
    b: np.ndarray,
    variant: MergeVariantName,
    threads: Sequence[int],
    reps: int,
    cache_elems: Sequence[int] = (),
    sink: Sink = "memory",
) -> list[BenchRow]:
    """Time one merge variant over a thread sweep; rows are oracle-verified"""
    if reps < 3:
        raise InvalidArgumentError(f"at least 3 repetitions are required, got {reps}")
    inp = MergeInput(a, b)
    inp.validate()
    oracle = reference_merge(a, b)
    verify = _merge_verifier(oracle, sink)
    caches: list[int | None] = [None] if variant == "regular" else list(cache_elems)
    if not caches:
        raise InvalidArgumentError("the segmented variant needs at least one cache size")

    rows: list[BenchRow] = []
    for cache in caches:
        for p in sorted({1, *threads}):
            if cache is None:
                call = lambda p=p: parallel_merge(inp, p, sink=sink, validate=False)  # noqa: E731
            else:
                call = lambda p=p, c=cache: segmented_parallel_merge(  # noqa: E731
                    inp, p, c, sink=sink, validate=False
                )
            timings, result = _time(call, reps, verify)
            rows.append(
                BenchRow(
                    variant=variant,
                    n=inp.n,
                    p=p,
                    cache_elems=cache,
                    sink=sink,
                    repetitions=reps,
                    median_seconds=statistics.median(timings),
                    mean_seconds=statistics.fmean(timings),
                    comparisons_partitioning=result.report.counts.partitioning,
                    comparisons_merging=result.report.counts.merging,
                )
            )
            logger.info(f"{variant} merge N={inp.n} p={p} C={cache}: {rows[-1].median_seconds:.4f}s")
    return _with_speedups(rows)


def run_sort(
    data: np.ndarray,
    variant: SortVariantName,
    threads: Sequence[int],
    reps: int,
    cache_elems: int | None = None,
) -> list[BenchRow]:
    if reps < 3:
        raise InvalidArgumentError(f"at least 3 repetitions are required, got {reps}")
    if variant == "cache_efficient" and cache_elems is None:
        raise InvalidArgumentError("the cache_efficient variant needs a cache size")
    oracle = reference_sort(data)

    def verify(result: np.ndarray) -> None:
        if not np.array_equal(result, oracle):
            raise OracleMismatchError(f"{variant} sort differs from the reference sort")

    rows: list[BenchRow] = []
    for p in sorted({1, *threads}):
        if variant == "plain":
            call = lambda p=p: parallel_merge_sort(data, p)  # noqa: E731
        else:
            call = lambda p=p: cache_efficient_parallel_sort(data, p, cache_elems)  # noqa: E731
        timings, _ = _time(call, reps, verify)
        rows.append(
            BenchRow(
                variant=variant,
                n=len(data),
                p=p,
                cache_elems=cache_elems if variant == "cache_efficient" else None,
                repetitions=reps,
                median_seconds=statistics.median(timings),
                mean_seconds=statistics.fmean(timings),
            )
        )
        logger.info(f"{variant} sort N={len(data)} p={p}: {rows[-1].median_seconds:.4f}s")
    return _with_speedups(rows)


def run_cachesim(
    a: np.ndarray,
    b: np.ndarray,
    variant: MergeVariant,
    config: CacheConfig,
    touch: bool = False,
) -> dict[str, Any]:
    """Cache statistics of one variant, plus the conflict check where it applies"""
    inp = MergeInput(a, b)
    inp.validate()
    trace = trace_merge(inp, variant, touch=touch, line_size=config.line_size)
    stats = simulate(trace, Layout.contiguous(len(a), len(b)), config)
    result: dict[str, Any] = {"config": config.model_dump(mode="json"), "stats": stats.model_dump()}
    if isinstance(variant, Segmented) and config.associativity % 3 == 0 and config.policy is Policy.LRU:
        check = verify_conflict_freedom(
            inp,
            variant.p,
            config.capacity,
            associativity=config.associativity,
            line_size=config.line_size,
            policy=config.policy,
        )
        result["conflict_freedom"] = {
            "passed": check.passed,
            "conflict_misses": check.conflict_misses,
            "window_len": check.window_len,
        }
    return result


# ---- reports ------------------------------------------------------------------


def render_rows(rows: Sequence[BenchRow], fmt: Literal["csv", "json"]) -> str:
    if fmt == "json":
        return json.dumps([row.model_dump() for row in rows], indent=2) + "\n"
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=list(BenchRow.model_fields))
    writer.writeheader()
    for row in rows:
        writer.writerow(row.model_dump())
    return buffer.getvalue()


def load_rows(path: Path) -> list[BenchRow]:
    text = path.read_text()
    if text.lstrip().startswith("["):
        return [BenchRow.model_validate(item) for item in json.loads(text)]
    rows = []
    for record in csv.DictReader(io.StringIO(text)):
        rows.append(BenchRow.model_validate({k: (v if v != "" else None) for k, v in record.items()}))
    return rows


def _emit(text: str, output: Path | None) -> None:
    if output is None:
        sys.stdout.write(text)
    else:
        output.write_text(text)


# ---- command line -------------------------------------------------------------


class _ArgumentParser(argparse.ArgumentParser):
    """argparse with the documented usage exit code"""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> list[int]:
    try:
        values = [int(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from e
    if not values:
        raise argparse.ArgumentTypeError("expected at least one integer")
    return values


def build_parser() -> argparse.ArgumentParser:
    settings = Settings.from_env()
    parser = _ArgumentParser(prog="mergepath-bench", description=__doc__.strip().splitlines()[0])
    parser.add_argument(
        "--log-level",
        type=str.upper,
        choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
        default=settings.log_level,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="write seeded input files")
    gen.add_argument("--size-a", type=int, default=2**20)
    gen.add_argument("--size-b", type=int, default=2**20)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument(
        "--distribution",
        choices=["uniform", "all_equal", "disjoint_ranges", "interleaved"],
        default="uniform",
    )
    gen.add_argument("--sort-input", action="store_true", help="write one unsorted file of --size-a keys")
    gen.add_argument("--order", choices=["random", "presorted", "reverse", "sawtooth"], default="random")
    gen.add_argument("--out-a", type=Path, default=Path("a.bin"))
    gen.add_argument("--out-b", type=Path, default=Path("b.bin"))
    gen.add_argument("--file-format", choices=["binary", "text"], default="binary")

    def add_common(cmd: argparse.ArgumentParser) -> None:
        cmd.add_argument("--threads", type=_int_list, default=default_threads())
        cmd.add_argument("--reps", type=int, default=5)
        cmd.add_argument("--format", choices=["csv", "json"], default="csv")
        cmd.add_argument("--output", type=Path)
        cmd.add_argument("--file-format", choices=["binary", "text"])

    merge = sub.add_parser("merge", help="time regular and segmented merges")
    merge.add_argument("--a", type=Path)
    merge.add_argument("--b", type=Path)
    merge.add_argument(
        "--sizes",
        type=_int_list,
        help="generate inputs of these total sizes (split evenly) instead of reading --a and --b",
    )
    merge.add_argument("--seed", type=int, default=0)
    merge.add_argument(
        "--distribution",
        choices=["uniform", "all_equal", "disjoint_ranges", "interleaved"],
        default="uniform",
    )
    merge.add_argument("--variant", choices=["regular", "segmented"], default="regular")
    merge.add_argument("--cache-elems", type=_int_list)
    merge.add_argument(
        "--segments",
        type=_int_list,
        default=list(DEFAULT_SEGMENTS),
        help="segment counts mapped to C = 3N/segments when --cache-elems is absent",
    )
    merge.add_argument("--sink", choices=["memory", "register"], default="memory")
    add_common(merge)

    sort = sub.add_parser("sort", help="time plain and cache-efficient sorts")
    sort.add_argument("--input", type=Path, required=True)
    sort.add_argument("--variant", choices=["plain", "cache_efficient"], default="plain")
    sort.add_argument("--cache-elems", type=int, default=settings.cache_elems)
    add_common(sort)

    cachesim = sub.add_parser("cachesim", help="replay a merge through the cache simulator")
    cachesim.add_argument("--a", type=Path, required=True)
    cachesim.add_argument("--b", type=Path, required=True)
    cachesim.add_argument("--variant", choices=["sequential", "parallel", "segmented"], default="segmented")
    cachesim.add_argument("--threads", type=int, default=1)
    cachesim.add_argument("--cache-elems", type=int, default=48)
    cachesim.add_argument("--assoc", type=int, default=3)
    cachesim.add_argument("--line-size", type=int, default=1)
    cachesim.add_argument("--policy", choices=[p.value for p in Policy], default=Policy.LRU.value)
    cachesim.add_argument("--touch", action="store_true", help="refresh unconsumed input lines between windows")
    cachesim.add_argument("--file-format", choices=["binary", "text"])
    cachesim.add_argument("--output", type=Path)

    report = sub.add_parser("report", help="merge report files and recompute speedups")
    report.add_argument("inputs", type=Path, nargs="+")
    report.add_argument("--format", choices=["csv", "json"], default="csv")
    report.add_argument("--output", type=Path)
    return parser


def _read_sorted(path: Path, fmt: FileFormat | None) -> np.ndarray:
    keys = read_keys(path, fmt)
    if not is_sorted(keys):
        raise InputValidationError(f"{path} is not sorted")
    return keys


def _cmd_gen(args: argparse.Namespace) -> None:
    if args.sort_input:
        keys = generate_unsorted(args.size_a, args.seed, args.order)
        write_keys(args.out_a, keys, args.file_format)
        logger.info(f"wrote {len(keys)} {args.order} keys to {args.out_a}")
        return
    a, b = generate_pair(args.size_a, args.size_b, args.seed, args.distribution)
    write_keys(args.out_a, a, args.file_format)
    write_keys(args.out_b, b, args.file_format)
    logger.info(f"wrote {len(a)}+{len(b)} {args.distribution} keys to {args.out_a}, {args.out_b}")


def _merge_inputs(args: argparse.Namespace) -> list[tuple[np.ndarray, np.ndarray]]:
    if args.sizes:
        return [generate_pair(n // 2, n - n // 2, args.seed, args.distribution) for n in args.sizes]
    if args.a is None or args.b is None:
        raise InvalidArgumentError("merge needs --a and --b, or --sizes")
    return [(_read_sorted(args.a, args.file_format), _read_sorted(args.b, args.file_format))]


def _cmd_merge(args: argparse.Namespace) -> None:
    rows: list[BenchRow] = []
    for a, b in _merge_inputs(args):
        n = len(a) + len(b)
        caches = args.cache_elems or [max(3, math.ceil(3 * n / s)) for s in args.segments]
        logger.info(f"merge sweep: {args.variant} N={n}")
        rows.extend(run_merge(a, b, args.variant, args.threads, args.reps, caches, args.sink))
    _emit(render_rows(rows, args.format), args.output)


def _cmd_sort(args: argparse.Namespace) -> None:
    data = read_keys(args.input, args.file_format)
    rows = run_sort(data, args.variant, args.threads, args.reps, args.cache_elems)
    _emit(render_rows(rows, args.format), args.output)


def _cmd_cachesim(args: argparse.Namespace) -> None:
    a = _read_sorted(args.a, args.file_format)
    b = _read_sorted(args.b, args.file_format)
    config = CacheConfig(
        capacity=args.cache_elems,
        associativity=args.assoc,
        line_size=args.line_size,
        policy=Policy(args.policy),
    )
    variant: MergeVariant
    if args.variant == "sequential":
        variant = Sequential()
    elif args.variant == "parallel":
        variant = Parallel(args.threads)
    else:
        variant = Segmented(args.threads, args.cache_elems)
    result = run_cachesim(a, b, variant, config, touch=args.touch)
    _emit(json.dumps(result, indent=2) + "\n", args.output)


def _cmd_report(args: argparse.Namespace) -> None:
    rows = [row for path in args.inputs for row in load_rows(path)]
    _emit(render_rows(_with_speedups(rows), args.format), args.output)


_COMMANDS: dict[str, Callable[[argparse.Namespace], None]] = {
    "gen": _cmd_gen,
    "merge": _cmd_merge,
    "sort": _cmd_sort,
    "cachesim": _cmd_cachesim,
    "report": _cmd_report,
}


def main(argv: Sequence[str] | None = None) -> int:
    """Main entry point"""
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        _COMMANDS[args.command](args)
    except OracleMismatchError as e:
        logger.error(f"Correctness failure: {e}")
        return EXIT_MISMATCH
    except (InputValidationError, InvalidArgumentError, ModelValidationError) as e:
        logger.error(f"Invalid input: {e}")
        return EXIT_VALIDATION
    except OSError as e:
        logger.error(f"I/O error: {e}")
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
