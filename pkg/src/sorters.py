"""
Parallel merge-sort and the cache-efficient parallel sort.

Both sorts ping-pong between two N-element buffers, one merge round per
swap. The plain sort starts from insertion-sorted runs and doubles the run
width each round. The cache-efficient sort first sorts blocks of C/3
elements one after another with all workers, then merges block pairs level
by level with the segmented merge.
"""

import bisect
import logging
from collections.abc import Callable, MutableSequence, Sequence
from dataclasses import dataclass, field
from typing import Any, Literal

import numpy as np

from .errors import InvalidArgumentError
from .mergepath import ORIGIN, MergeInput, merge_into
from .parallel import parallel_merge, run_workers, segmented_parallel_merge

logger = logging.getLogger(__name__)

SortVariant = Literal["plain", "cache_efficient"]
MergeMode = Literal["independent", "parallel", "segmented"]

INSERTION_RUN = 32

# (lo, mid, hi): merge src[lo:mid] with src[mid:hi] into dst[lo:hi]
Pair = tuple[int, int, int]


@dataclass(frozen=True, slots=True)
class SortPlan:
    variant: SortVariant
    n: int
    block_size: int
    blocks: int
    tree_levels: int
    cache_elems: int | None = None


@dataclass(frozen=True, slots=True)
class RoundRecord:
    phase: Literal["block", "tree"]
    width: int
    pairs: int
    mode: MergeMode


@dataclass
class SortReport:
    """Merge rounds a sort actually performed"""

    rounds: list[RoundRecord] = field(default_factory=list)

    def tree_rounds(self) -> int:
        return sum(1 for r in self.rounds if r.phase == "tree")


class ArrayView:
    """A window onto a list, so list-backed merges need no slice copies"""

    __slots__ = ("data", "offset", "length")

    def __init__(self, data: MutableSequence[Any], offset: int, length: int) -> None:
        assert offset + length <= len(data)
        self.data = data
        self.offset = offset
        self.length = length

    def __getitem__(self, i: int) -> Any:
        return self.data[i + self.offset]

    def __setitem__(self, i: int, element: Any) -> None:
        self.data[i + self.offset] = element

    def __len__(self) -> int:
        return self.length


def _view(buf: MutableSequence[Any], lo: int, hi: int) -> Any:
    if isinstance(buf, np.ndarray):
        return buf[lo:hi]
    return ArrayView(buf, lo, hi - lo)


def plan_sort(n: int, variant: SortVariant = "plain", cache_elems: int | None = None) -> SortPlan:
    """
    Block structure of a sort. The plain variant starts from insertion-sorted
    runs of 32; the cache-efficient variant from blocks of floor(C/3).
    tree_levels = ceil(log2(blocks)).
    """
    if variant == "cache_efficient":
        if cache_elems is None or cache_elems < 3:
            raise InvalidArgumentError(f"cache must hold at least 3 elements, got {cache_elems}")
        block_size = cache_elems // 3
    else:
        block_size = INSERTION_RUN
    blocks = -(-n // block_size)
    return SortPlan(
        variant=variant,
        n=n,
        block_size=block_size,
        blocks=blocks,
        tree_levels=max(blocks - 1, 0).bit_length(),
        cache_elems=cache_elems,
    )


def _working_copy(data: Sequence[Any]) -> MutableSequence[Any]:
    if isinstance(data, np.ndarray):
        return data.copy()
    return list(data)


def _scratch_like(buf: MutableSequence[Any]) -> MutableSequence[Any]:
    if isinstance(buf, np.ndarray):
        return np.empty_like(buf)
    return [None] * len(buf)


def _insertion_sort(buf: MutableSequence[Any], lo: int, hi: int) -> None:
    """Stable binary insertion sort of buf[lo:hi]"""
    if isinstance(buf, np.ndarray):
        buf[lo:hi] = np.sort(buf[lo:hi], kind="stable")
        return
    for k in range(lo + 1, hi):
        item = buf[k]
        pos = bisect.bisect_right(buf, item, lo, k)
        if pos < k:
            buf[pos + 1 : k + 1] = buf[pos:k]
            buf[pos] = item


def _sort_runs(buf: MutableSequence[Any], lo: int, hi: int, p: int) -> None:
    starts = list(range(lo, hi, INSERTION_RUN))

    def work(i: int) -> None:
        for start in starts[i::p]:
            _insertion_sort(buf, start, min(start + INSERTION_RUN, hi))

    run_workers(min(p, max(len(starts), 1)), work)


def _pairs(lo: int, hi: int, width: int) -> list[Pair]:
    return [
        (start, min(start + width, hi), min(start + 2 * width, hi))
        for start in range(lo, hi, 2 * width)
    ]


def _merge_pair(src: MutableSequence[Any], dst: MutableSequence[Any], pair: Pair) -> None:
    lo, mid, hi = pair
    merge_into(_view(src, lo, mid), _view(src, mid, hi), ORIGIN, hi - lo, dst, lo)


PairMerger = Callable[[MutableSequence[Any], MutableSequence[Any], list[Pair]], MergeMode]


def _plain_merger(p: int) -> PairMerger:
    """Early rounds merge independent pairs side by side; later rounds give every pair all p workers"""

    def merge(src: MutableSequence[Any], dst: MutableSequence[Any], pairs: list[Pair]) -> MergeMode:
        if len(pairs) >= p:
            run_workers(p, lambda i: [_merge_pair(src, dst, pair) for pair in pairs[i::p]])
            return "independent"
        for lo, mid, hi in pairs:
            inp = MergeInput(_view(src, lo, mid), _view(src, mid, hi))
            parallel_merge(inp, p, out=_view(dst, lo, hi))
        return "parallel"

    return merge


def _segmented_merger(p: int, cache_elems: int) -> PairMerger:
    """One pair at a time, each with all p workers, so only one window is live"""

    def merge(src: MutableSequence[Any], dst: MutableSequence[Any], pairs: list[Pair]) -> MergeMode:
        for lo, mid, hi in pairs:
            if mid == hi:
                dst[lo:hi] = src[lo:hi]
                continue
            inp = MergeInput(_view(src, lo, mid), _view(src, mid, hi))
            segmented_parallel_merge(inp, p, cache_elems, out=_view(dst, lo, hi))
        return "segmented"

    return merge


def _merge_rounds(
    src: MutableSequence[Any],
    dst: MutableSequence[Any],
    lo: int,
    hi: int,
    width: int,
    merger: PairMerger,
    report: SortReport,
    phase: Literal["block", "tree"],
) -> tuple[MutableSequence[Any], MutableSequence[Any]]:
    """Merge rounds over src[lo:hi]; returns (buffer holding the result, the other one)"""
    while width < hi - lo:
        pairs = _pairs(lo, hi, width)
        mode = merger(src, dst, pairs)
        report.rounds.append(RoundRecord(phase=phase, width=width, pairs=len(pairs), mode=mode))
        src, dst = dst, src
        width *= 2
    return src, dst


def _check_workers(p: int) -> None:
    if p < 1:
        raise InvalidArgumentError(f"worker count must be >= 1, got {p}")


def parallel_merge_sort(
    data: Sequence[Any], p: int, report: SortReport | None = None
) -> MutableSequence[Any]:
    """Stable parallel merge-sort; returns a new list (or array for array input)"""
    _check_workers(p)
    report = report if report is not None else SortReport()
    src = _working_copy(data)
    n = len(src)
    if n <= 1:
        return src
    _sort_runs(src, 0, n, p)
    result, _ = _merge_rounds(
        src, _scratch_like(src), 0, n, INSERTION_RUN, _plain_merger(p), report, "tree"
    )
    logger.debug(f"merge-sort of {n} elements on {p} workers: {len(report.rounds)} rounds")
    return result


def cache_efficient_parallel_sort(
    data: Sequence[Any],
    p: int,
    cache_elems: int,
    report: SortReport | None = None,
) -> MutableSequence[Any]:
    """
    Sort blocks of C/3 elements one at a time with all p workers, then merge
    block pairs level by level with the segmented merge; an unpaired block is
    carried up unchanged.
    """
    _check_workers(p)
    plan = plan_sort(len(data), "cache_efficient", cache_elems)
    report = report if report is not None else SortReport()
    src = _working_copy(data)
    dst = _scratch_like(src)
    n = plan.n
    if n <= 1:
        return src

    block_merger = _plain_merger(p)
    for lo in range(0, n, plan.block_size):
        hi = min(lo + plan.block_size, n)
        _sort_runs(src, lo, hi, p)
        result, _ = _merge_rounds(src, dst, lo, hi, INSERTION_RUN, block_merger, report, "block")
        if result is dst:
            src[lo:hi] = dst[lo:hi]

    result, _ = _merge_rounds(
        src, dst, 0, n, plan.block_size, _segmented_merger(p, cache_elems), report, "tree"
    )
    logger.debug(
        f"cache-efficient sort of {n} elements: {plan.blocks} blocks of {plan.block_size}, "
        f"{report.tree_rounds()} tree levels"
    )
    return result
