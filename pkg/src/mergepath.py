"""
Merge Path geometry.

A merge of two sorted arrays A and B is a staircase path on the |A| x |B|
grid: a Down move consumes the next element of A, a Right move the next
element of B. The path crosses every cross diagonal exactly once, and the
crossing point on diagonal d tells how many elements of each array precede
output position d. Those crossing points are found by binary search, which is
what lets p workers split a merge without talking to each other.

Conventions used throughout the package:

* indices are 0-based and a diagonal index ``d`` is the number of outputs
  already produced, so the path runs from d=0 to d=|A|+|B|;
* ties go to A (``A[i] > B[j]`` moves right, equality moves down), which makes
  every merge stable with A as the left operand;
* only ``>`` and ``<`` are used on elements, never ``<=``/``==``.
"""

import logging
from collections.abc import MutableSequence, Sequence
from dataclasses import dataclass
from enum import Enum
from typing import Any

import numpy as np

from .errors import InputValidationError, InvalidArgumentError

logger = logging.getLogger(__name__)

# dtype kinds the vectorized kernel handles (bool, signed, unsigned, float)
_NUMERIC_KINDS = "biuf"


class Move(str, Enum):
    DOWN = "D"  # consume A
    RIGHT = "R"  # consume B


@dataclass(frozen=True, slots=True)
class TaggedKey:
    """
    A key with a payload tag.

    Ordering looks at the key only, so equal keys compare as ties and the
    merge order of their tags exposes stability. Equality looks at both
    fields, which makes output comparisons bit-exact.
    """

    key: int
    tag: Any = None

    def __lt__(self, other: "TaggedKey") -> bool:
        return self.key < other.key

    def __gt__(self, other: "TaggedKey") -> bool:
        return self.key > other.key

    def __le__(self, other: "TaggedKey") -> bool:
        return not self.key > other.key

    def __ge__(self, other: "TaggedKey") -> bool:
        return not self.key < other.key


@dataclass(slots=True)
class ComparisonCounter:
    """
    Per-worker instrumentation.

    ``partitioning`` counts element comparisons made by diagonal searches,
    ``merging`` counts merge steps (one per produced element). A counter
    belongs to a single worker; totals are built with :meth:`total`.
    """

    partitioning: int = 0
    merging: int = 0

    @classmethod
    def total(cls, counters: Sequence["ComparisonCounter"]) -> "ComparisonCounter":
        return cls(
            partitioning=sum(c.partitioning for c in counters),
            merging=sum(c.merging for c in counters),
        )


@dataclass(frozen=True, slots=True)
class PartitionPoint:
    """Where the merge path crosses a diagonal: elements consumed from A and B"""

    a_off: int
    b_off: int

    @property
    def d(self) -> int:
        return self.a_off + self.b_off

    def __str__(self) -> str:
        return f"({self.a_off},{self.b_off})@{self.d}"


@dataclass(frozen=True, slots=True)
class MergeInput:
    """The two sorted merge operands. Either may be empty."""

    a: Sequence[Any]
    b: Sequence[Any]

    @property
    def n(self) -> int:
        return len(self.a) + len(self.b)

    @property
    def end(self) -> PartitionPoint:
        return PartitionPoint(len(self.a), len(self.b))

    def is_sorted(self) -> bool:
        return is_sorted(self.a) and is_sorted(self.b)

    def validate(self) -> None:
        if not is_sorted(self.a):
            raise InputValidationError("operand A is not sorted")
        if not is_sorted(self.b):
            raise InputValidationError("operand B is not sorted")


@dataclass(frozen=True, slots=True)
class PartitionSet:
    """p+1 partition points on equispaced diagonals, first (0,0) and last (|A|,|B|)"""

    points: tuple[PartitionPoint, ...]

    @property
    def workers(self) -> int:
        return len(self.points) - 1

    def segments(self) -> list[tuple[PartitionPoint, PartitionPoint]]:
        return list(zip(self.points[:-1], self.points[1:]))

    def segment_lengths(self) -> list[int]:
        return [end.d - start.d for start, end in self.segments()]


ORIGIN = PartitionPoint(0, 0)


def is_sorted(seq: Sequence[Any]) -> bool:
    """Non-decreasing check in O(n)"""
    if isinstance(seq, np.ndarray):
        return bool(np.all(seq[:-1] <= seq[1:])) if len(seq) > 1 else True
    return not any(seq[k + 1] < seq[k] for k in range(len(seq) - 1))


def equispaced_diagonals(n: int, p: int) -> list[int]:
    """Diagonals floor(i*n/p) for i in 0..p; consecutive gaps differ by at most one"""
    if p < 1:
        raise InvalidArgumentError(f"worker count must be >= 1, got {p}")
    return [i * n // p for i in range(p + 1)]


def merge_matrix_entry(inp: MergeInput, i: int, j: int) -> bool:
    """M[i, j] = 1 exactly when A[i] > B[j]; the matrix itself is never built"""
    if not (0 <= i < len(inp.a) and 0 <= j < len(inp.b)):
        raise IndexError(f"merge matrix index ({i}, {j}) outside {len(inp.a)}x{len(inp.b)}")
    return bool(inp.a[i] > inp.b[j])


def diagonal_search(
    inp: MergeInput,
    d: int,
    counter: ComparisonCounter | None = None,
    origin: PartitionPoint = ORIGIN,
    extent: int | None = None,
) -> PartitionPoint:
    """
    Find where the merge path crosses diagonal ``d``.

    The search runs over the sub-grid anchored at ``origin`` (a point already
    on the path) and limited to ``extent`` elements of each array when given;
    ``d`` is measured from the origin and the returned point is absolute.
    Along a diagonal the merge matrix is non-increasing, so the crossing is
    the first a-offset whose A element is greater than the B element it
    faces. At most floor(log2(min(|A|,|B|)+1)) + 2 comparisons are made.
    """
    a, b = inp.a, inp.b
    a0, b0 = origin.a_off, origin.b_off
    len_a = len(a) - a0
    len_b = len(b) - b0
    if extent is not None:
        len_a = min(len_a, extent)
        len_b = min(len_b, extent)
    if not 0 <= d <= len_a + len_b:
        raise InvalidArgumentError(f"diagonal {d} outside [0, {len_a + len_b}]")

    lo = max(0, d - len_b)
    hi = min(d, len_a)
    while lo < hi:
        mid = (lo + hi) // 2
        if counter is not None:
            counter.partitioning += 1
        if a[a0 + mid] > b[b0 + d - mid - 1]:
            hi = mid
        else:
            lo = mid + 1
    return PartitionPoint(a0 + lo, b0 + d - lo)


def partition(
    inp: MergeInput, p: int, counter: ComparisonCounter | None = None
) -> PartitionSet:
    """Partition points on the p+1 equispaced diagonals; each search is independent"""
    diagonals = equispaced_diagonals(inp.n, p)
    points = [ORIGIN]
    for d in diagonals[1:-1]:
        points.append(diagonal_search(inp, d, counter))
    points.append(inp.end)
    return PartitionSet(tuple(points))


def allocate_output(inp: MergeInput, length: int) -> MutableSequence[Any]:
    """A numpy array when both operands are numeric arrays, a list otherwise"""
    a, b = inp.a, inp.b
    if _vectorizable(a, b):
        return np.empty(length, dtype=np.result_type(a.dtype, b.dtype))  # type: ignore[union-attr]
    return [None] * length


def _vectorizable(*arrays: Any) -> bool:
    return all(
        isinstance(arr, np.ndarray) and arr.dtype.kind in _NUMERIC_KINDS
        for arr in arrays
    )


def merge_into(
    a: Sequence[Any],
    b: Sequence[Any],
    start: PartitionPoint,
    length: int,
    out: MutableSequence[Any],
    out_pos: int,
    counter: ComparisonCounter | None = None,
) -> PartitionPoint:
    """
    Walk ``length`` steps of the path from ``start`` writing to
    ``out[out_pos:out_pos + length]``; returns the point where the walk stops.

    The scalar kernel keeps the current candidate of each array in a local
    and loads only the successor of the element just emitted, so every step
    is one load and one store.
    """
    if counter is not None:
        counter.merging += max(length, 0)
    if length <= 0:
        return start
    if _vectorizable(a, b, out):
        return _merge_into_numpy(a, b, start, length, out, out_pos)  # type: ignore[arg-type]

    i, j = start.a_off, start.b_off
    na, nb = len(a), len(b)
    x = a[i] if i < na else None
    y = b[j] if j < nb else None
    last = length - 1
    for k in range(length):
        if i < na and (j >= nb or not x > y):
            out[out_pos + k] = x
            i += 1
            if i < na and k < last:
                x = a[i]
        else:
            out[out_pos + k] = y
            j += 1
            if j < nb and k < last:
                y = b[j]
    return PartitionPoint(i, j)


def _merge_into_numpy(
    a: np.ndarray,
    b: np.ndarray,
    start: PartitionPoint,
    length: int,
    out: np.ndarray,
    out_pos: int,
) -> PartitionPoint:
    # `length` steps use at most `length` elements of each array
    i0, j0 = start.a_off, start.b_off
    run_a = a[i0 : i0 + length]
    run_b = b[j0 : j0 + length]
    pos_a = np.arange(len(run_a)) + np.searchsorted(run_b, run_a, side="left")
    pos_b = np.arange(len(run_b)) + np.searchsorted(run_a, run_b, side="right")
    keep_a = pos_a < length
    keep_b = pos_b < length
    dst = out[out_pos : out_pos + length]
    dst[pos_a[keep_a]] = run_a[keep_a]
    dst[pos_b[keep_b]] = run_b[keep_b]
    return PartitionPoint(i0 + int(np.count_nonzero(keep_a)), j0 + int(np.count_nonzero(keep_b)))


def sequential_merge(
    inp: MergeInput,
    start: PartitionPoint,
    length: int,
    counter: ComparisonCounter | None = None,
) -> MutableSequence[Any]:
    """Output positions [start.d, start.d + length) of the full stable merge"""
    if length < 0 or start.d + length > inp.n:
        raise InvalidArgumentError(
            f"segment of length {length} from diagonal {start.d} overruns path of length {inp.n}"
        )
    out = allocate_output(inp, length)
    merge_into(inp.a, inp.b, start, length, out, 0, counter)
    return out


def path_trace(inp: MergeInput) -> list[Move]:
    """The full path as moves, built step by step from the grid's upper-left corner"""
    a, b = inp.a, inp.b
    i = j = 0
    moves: list[Move] = []
    while i < len(a) or j < len(b):
        if i < len(a) and j < len(b):
            if a[i] > b[j]:
                moves.append(Move.RIGHT)
                j += 1
            else:
                moves.append(Move.DOWN)
                i += 1
        elif i < len(a):
            moves.append(Move.DOWN)
            i += 1
        else:
            moves.append(Move.RIGHT)
            j += 1
    return moves


def reference_merge(a: Sequence[Any], b: Sequence[Any]) -> MutableSequence[Any]:
    """Trusted sequential stable merge (A before B on ties)"""
    if _vectorizable(a, b):
        return np.sort(np.concatenate((a, b)), kind="stable")  # type: ignore[arg-type]
    return sorted([*a, *b])


def reference_sort(data: Sequence[Any]) -> MutableSequence[Any]:
    """Trusted sequential stable sort"""
    if _vectorizable(data):
        return np.sort(data, kind="stable")  # type: ignore[arg-type]
    return sorted(data)
