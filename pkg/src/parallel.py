"""
Parallel Merge and Segmented Parallel Merge (SPM).

Both variants follow one concurrency contract: workers share read-only
operands, each worker finds its own starting point with a diagonal search,
and workers write disjoint output ranges. The segmented variant walks the
path in windows of L = C/3 elements with a barrier after every window, so the
live parts of A, B and S fit a cache of C elements.
"""

import logging
import threading
from collections.abc import Callable, MutableSequence, Sequence
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Literal, TypeVar

import numpy as np

from .config import Settings
from .errors import InvalidArgumentError
from .mergepath import (
    ORIGIN,
    ComparisonCounter,
    MergeInput,
    PartitionPoint,
    allocate_output,
    diagonal_search,
    merge_into,
)

logger = logging.getLogger(__name__)

Sink = Literal["memory", "register"]

_MASK64 = (1 << 64) - 1

T = TypeVar("T")


@dataclass(frozen=True, slots=True)
class SegmentRecord:
    """One worker's share of one window (window is None for the regular merge)"""

    worker: int
    window: int | None
    start: PartitionPoint
    end: PartitionPoint

    @property
    def out_range(self) -> tuple[int, int]:
        return self.start.d, self.end.d


@dataclass(frozen=True, slots=True)
class WindowRecord:
    index: int
    start: PartitionPoint
    end: PartitionPoint

    @property
    def a_used(self) -> int:
        return self.end.a_off - self.start.a_off

    @property
    def b_used(self) -> int:
        return self.end.b_off - self.start.b_off


@dataclass
class MergeReport:
    """Instrumentation gathered by one merge call"""

    variant: str
    workers: int
    counts: ComparisonCounter = field(default_factory=ComparisonCounter)
    segments: list[SegmentRecord] = field(default_factory=list)
    windows: list[WindowRecord] = field(default_factory=list)
    window_len: int | None = None


@dataclass
class MergeOutput:
    """
    Result of a parallel merge. ``s`` holds the merged sequence for the
    memory sink; the register sink leaves it as None and reports ``checksum``.
    """

    s: MutableSequence[Any] | None
    report: MergeReport
    checksum: int | None = None


@dataclass(frozen=True, slots=True)
class SegmentPlan:
    """The SPM schedule for one input"""

    n: int
    cache_elems: int
    window_len: int
    p_eff: int
    iterations: int
    starting_points: tuple[PartitionPoint, ...]

    def window_length(self, k: int) -> int:
        return min(self.window_len, self.n - k * self.window_len)

    def output_ranges(self, k: int) -> list[tuple[int, int]]:
        """Output ranges of the p_eff workers in window k, known before merging"""
        base = k * self.window_len
        length = self.window_length(k)
        return [
            (base + lo, base + hi)
            for lo, hi in (worker_span(i, self.p_eff, length) for i in range(self.p_eff))
        ]


def worker_span(i: int, p: int, length: int) -> tuple[int, int]:
    """Worker i's share [floor(i*length/p), floor((i+1)*length/p)) of a segment"""
    return i * length // p, (i + 1) * length // p


def positional_checksum(values: Sequence[Any], offset: int = 0) -> int:
    """
    Order-sensitive fold sum((offset+k+1) * values[k]) mod 2**64. Per-segment
    checksums add up to the checksum of the whole output.
    """
    if isinstance(values, np.ndarray) and values.dtype.kind in "biu":
        weights = np.arange(offset + 1, offset + len(values) + 1, dtype=np.uint64)
        return int(np.sum(values.astype(np.uint64) * weights, dtype=np.uint64))
    total = 0
    for k, value in enumerate(values):
        total += (offset + k + 1) * int(getattr(value, "key", value))
    return total & _MASK64


def partition_comparisons(report: MergeReport) -> ComparisonCounter:
    """Comparison totals of an instrumented run, split into partitioning and merging"""
    return ComparisonCounter(report.counts.partitioning, report.counts.merging)


def _check_workers(p: int) -> None:
    if p < 1:
        raise InvalidArgumentError(f"worker count must be >= 1, got {p}")


def _output_buffer(
    inp: MergeInput, sink: Sink, out: MutableSequence[Any] | None
) -> MutableSequence[Any] | None:
    if sink == "register":
        return None
    if out is None:
        return allocate_output(inp, inp.n)
    if len(out) != inp.n:
        raise InvalidArgumentError(f"output buffer holds {len(out)} elements, need {inp.n}")
    return out


def _should_validate(validate: bool | None) -> bool:
    return Settings.from_env().validate_inputs if validate is None else validate


def run_workers(p: int, work: Callable[[int], T]) -> list[T]:
    """Fork p workers, join them, and re-raise the first real failure"""
    if p == 1:
        return [work(0)]
    with ThreadPoolExecutor(max_workers=p, thread_name_prefix="merge-path") as pool:
        futures: list[Future[T]] = [pool.submit(work, i) for i in range(p)]
        errors = [f.exception() for f in futures]
    failures = [e for e in errors if e is not None]
    if failures:
        # a broken barrier is a symptom; prefer the error that broke it
        primary = next(
            (e for e in failures if not isinstance(e, threading.BrokenBarrierError)),
            failures[0],
        )
        raise primary
    return [f.result() for f in futures]


class _SegmentWriter:
    """Routes a worker's merged run to S (memory sink) or to a private buffer"""

    def __init__(self, inp: MergeInput, out: MutableSequence[Any] | None) -> None:
        self.inp = inp
        self.out = out
        self.checksum = 0

    def merge(
        self, start: PartitionPoint, length: int, counter: ComparisonCounter
    ) -> PartitionPoint:
        if self.out is not None:
            return merge_into(self.inp.a, self.inp.b, start, length, self.out, start.d, counter)
        scratch = allocate_output(self.inp, length)
        end = merge_into(self.inp.a, self.inp.b, start, length, scratch, 0, counter)
        self.checksum = (self.checksum + positional_checksum(scratch, start.d)) & _MASK64
        return end


def parallel_merge(
    inp: MergeInput,
    p: int,
    *,
    sink: Sink = "memory",
    validate: bool | None = None,
    out: MutableSequence[Any] | None = None,
) -> MergeOutput:
    """
    Merge with p workers, one path segment each.

    Worker i searches diagonal floor(i*N/p) on its own and merges the
    floor((i+1)*N/p) - floor(i*N/p) elements that follow; there is no
    communication between workers and the only synchronization is the join.
    """
    _check_workers(p)
    if _should_validate(validate):
        inp.validate()
    n = inp.n
    out = _output_buffer(inp, sink, out)
    counters = [ComparisonCounter() for _ in range(p)]
    writers = [_SegmentWriter(inp, out) for _ in range(p)]

    def work(i: int) -> SegmentRecord:
        lo, hi = worker_span(i, p, n)
        start = diagonal_search(inp, lo, counters[i])
        end = writers[i].merge(start, hi - lo, counters[i])
        return SegmentRecord(worker=i, window=None, start=start, end=end)

    segments = run_workers(p, work)
    report = MergeReport(
        variant="regular",
        workers=p,
        counts=ComparisonCounter.total(counters),
        segments=segments,
    )
    logger.debug(f"parallel merge of {n} elements on {p} workers: {report.counts}")
    return MergeOutput(s=out, report=report, checksum=_combined_checksum(sink, writers))


def _combined_checksum(sink: Sink, writers: Sequence[_SegmentWriter]) -> int | None:
    if sink != "register":
        return None
    return sum(w.checksum for w in writers) & _MASK64


def window_shape(
    inp: MergeInput, p: int, cache_elems: int, window_len: int | None
) -> tuple[int, int, int]:
    """(window length, effective workers, iterations) of a segmented merge"""
    _check_workers(p)
    if cache_elems < 3:
        raise InvalidArgumentError(f"cache must hold at least 3 elements, got {cache_elems}")
    limit = cache_elems // 3
    if window_len is None:
        window_len = limit
    elif not 1 <= window_len <= limit:
        raise InvalidArgumentError(f"window length {window_len} outside [1, {limit}]")
    p_eff = min(p, window_len)
    iterations = -(-inp.n // window_len)
    return window_len, p_eff, iterations


def plan_segments(
    inp: MergeInput,
    p: int,
    cache_elems: int,
    *,
    window_len: int | None = None,
    counter: ComparisonCounter | None = None,
) -> SegmentPlan:
    """
    The SPM schedule: L = floor(C/3), p_eff = min(p, L), ceil(N/L) windows,
    and the path point each window starts from. A window of L steps needs at
    most L consecutive elements of A and of B past its starting point, so the
    inputs it reads and the L outputs it writes fit in C together.
    """
    window_len, p_eff, iterations = window_shape(inp, p, cache_elems, window_len)
    starting_points = tuple(
        diagonal_search(inp, k * window_len, counter) for k in range(iterations)
    )
    return SegmentPlan(
        n=inp.n,
        cache_elems=cache_elems,
        window_len=window_len,
        p_eff=p_eff,
        iterations=iterations,
        starting_points=starting_points,
    )


def segmented_parallel_merge(
    inp: MergeInput,
    p: int,
    cache_elems: int,
    *,
    window_len: int | None = None,
    sink: Sink = "memory",
    validate: bool | None = None,
    out: MutableSequence[Any] | None = None,
) -> MergeOutput:
    """
    Merge one cache-sized window at a time.

    In every window each of the p_eff workers searches its sub-diagonal inside
    the window's L x L sub-grid (anchored at the window's starting point),
    merges its share, and meets the others at a barrier. The last worker of a
    window publishes where the window ended; that point is the next window's
    start and is read only after the barrier.
    """
    window_len, p_eff, iterations = window_shape(inp, p, cache_elems, window_len)
    if _should_validate(validate):
        inp.validate()
    n = inp.n
    out = _output_buffer(inp, sink, out)
    counters = [ComparisonCounter() for _ in range(p_eff)]
    writers = [_SegmentWriter(inp, out) for _ in range(p_eff)]
    # origins[k] is written by window k-1's last worker before barrier k-1
    origins: list[PartitionPoint] = [ORIGIN] * (iterations + 1)
    barrier = threading.Barrier(p_eff)

    def work(i: int) -> list[SegmentRecord]:
        records: list[SegmentRecord] = []
        try:
            for k in range(iterations):
                origin = origins[k]
                lo, hi = worker_span(i, p_eff, min(window_len, n - origin.d))
                if hi > lo:
                    start = diagonal_search(inp, lo, counters[i], origin, window_len)
                    end = writers[i].merge(start, hi - lo, counters[i])
                    records.append(SegmentRecord(worker=i, window=k, start=start, end=end))
                    if i == p_eff - 1:
                        origins[k + 1] = end
                if p_eff > 1:
                    barrier.wait()
        except BaseException:
            barrier.abort()
            raise
        return records

    per_worker = run_workers(p_eff, work)
    report = MergeReport(
        variant="segmented",
        workers=p_eff,
        counts=ComparisonCounter.total(counters),
        segments=sorted(
            (rec for records in per_worker for rec in records),
            key=lambda rec: (rec.window, rec.worker),
        ),
        windows=[WindowRecord(k, origins[k], origins[k + 1]) for k in range(iterations)],
        window_len=window_len,
    )
    logger.debug(
        f"segmented merge of {n} elements: L={window_len} p_eff={p_eff} "
        f"windows={iterations} counts={report.counts}"
    )
    return MergeOutput(s=out, report=report, checksum=_combined_checksum(sink, writers))
