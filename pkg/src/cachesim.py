"""
Trace-driven set-associative cache simulator.

Merge variants are replayed as element-granular load/store traces against a
k-way cache. Every miss is classified with the usual three-C rule: the first
touch of a line is compulsory, a miss that a fully-associative LRU cache of
the same capacity would also take is a capacity miss, and whatever remains
is a conflict miss.
"""

import logging
from collections import OrderedDict
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Any, NamedTuple, TextIO

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .errors import InputValidationError, InvalidArgumentError
from .mergepath import ORIGIN, MergeInput, PartitionPoint, diagonal_search, merge_into
from .parallel import window_shape, worker_span

logger = logging.getLogger(__name__)


class ArrayId(str, Enum):
    A = "A"
    B = "B"
    S = "S"


class AccessKind(str, Enum):
    READ = "r"
    WRITE = "w"


class Policy(str, Enum):
    LRU = "LRU"
    FIFO = "FIFO"


class MemAccess(NamedTuple):
    array: ArrayId
    index: int
    kind: AccessKind
    worker: int | None = None


class CacheConfig(BaseModel):
    """Cache geometry in elements; sets = capacity / (line_size * associativity)"""

    model_config = ConfigDict(frozen=True)

    capacity: int = Field(ge=1)
    associativity: int = Field(default=3, ge=1)
    line_size: int = Field(default=1, ge=1)
    policy: Policy = Policy.LRU

    @model_validator(mode="after")
    def _geometry(self) -> "CacheConfig":
        if self.capacity % self.line_size:
            raise ValueError(
                f"capacity {self.capacity} is not a multiple of line size {self.line_size}"
            )
        if self.lines % self.associativity:
            raise ValueError(
                f"{self.lines} lines cannot be split into {self.associativity}-way sets"
            )
        return self

    @property
    def lines(self) -> int:
        return self.capacity // self.line_size

    @property
    def sets(self) -> int:
        return self.lines // self.associativity

    def fully_associative(self) -> "CacheConfig":
        """LRU cache of the same capacity with a single set"""
        return CacheConfig(
            capacity=self.capacity,
            associativity=self.lines,
            line_size=self.line_size,
            policy=Policy.LRU,
        )


class Layout(BaseModel):
    """Element base address and length of each array"""

    model_config = ConfigDict(frozen=True)

    base_a: int = Field(ge=0)
    base_b: int = Field(ge=0)
    base_s: int = Field(ge=0)
    size_a: int = Field(ge=0)
    size_b: int = Field(ge=0)
    size_s: int = Field(ge=0)

    @classmethod
    def contiguous(cls, size_a: int, size_b: int) -> "Layout":
        """A, then B, then S, back to back"""
        return cls(
            base_a=0,
            base_b=size_a,
            base_s=size_a + size_b,
            size_a=size_a,
            size_b=size_b,
            size_s=size_a + size_b,
        )

    @classmethod
    def set_aligned(cls, size_a: int, size_b: int, config: CacheConfig) -> "Layout":
        """Every base a multiple of the set stride, so index i of A, B and S share a set"""
        stride = config.sets * config.line_size

        def round_up(value: int) -> int:
            return -(-value // stride) * stride

        base_b = round_up(size_a)
        base_s = round_up(base_b + size_b)
        return cls(
            base_a=0,
            base_b=base_b,
            base_s=base_s,
            size_a=size_a,
            size_b=size_b,
            size_s=size_a + size_b,
        )

    @cached_property
    def spans(self) -> dict[ArrayId, tuple[int, int]]:
        return {
            ArrayId.A: (self.base_a, self.size_a),
            ArrayId.B: (self.base_b, self.size_b),
            ArrayId.S: (self.base_s, self.size_s),
        }

    def check_disjoint(self) -> None:
        ranges = sorted((base, base + size, name) for name, (base, size) in self.spans.items() if size)
        for (_, end, left), (start, _, right) in zip(ranges, ranges[1:]):
            if start < end:
                raise InvalidArgumentError(f"arrays {left.value} and {right.value} overlap")

    def address(self, access: MemAccess) -> int:
        base, size = self.spans[access.array]
        if not 0 <= access.index < size:
            raise InvalidArgumentError(
                f"{access.array.value}[{access.index}] outside array of {size} elements"
            )
        return base + access.index


class CacheStats(BaseModel):
    accesses: int = 0
    hits: int = 0
    misses: int = 0
    compulsory: int = 0
    capacity_misses: int = 0
    conflict_misses: int = 0
    shared_output_lines: int = 0

    def balanced(self) -> bool:
        return (
            self.misses == self.compulsory + self.capacity_misses + self.conflict_misses
            and self.hits + self.misses == self.accesses
        )


class ConflictReport(BaseModel):
    conflict_misses: int
    passed: bool
    window_len: int
    stats: CacheStats


class SetAssociativeCache:
    """k-way cache of line numbers; each set keeps its lines oldest first"""

    def __init__(self, config: CacheConfig) -> None:
        self.config = config
        self._ways = config.associativity
        self._sets: list[OrderedDict[int, None]] = [OrderedDict() for _ in range(config.sets)]

    def access(self, line: int) -> bool:
        """Touch a line; True on a hit. Misses allocate (reads and writes alike)."""
        members = self._sets[line % len(self._sets)]
        if line in members:
            if self.config.policy is Policy.LRU:
                members.move_to_end(line)
            return True
        if len(members) >= self._ways:
            members.popitem(last=False)
        members[line] = None
        return False


def simulate(trace: Iterable[MemAccess], layout: Layout, config: CacheConfig) -> CacheStats:
    """Replay a trace and classify every miss"""
    layout.check_disjoint()
    cache = SetAssociativeCache(config)
    baseline = SetAssociativeCache(config.fully_associative())
    seen: set[int] = set()
    output_writers: dict[int, set[int]] = {}
    accesses = hits = compulsory = capacity = conflict = 0
    for access in trace:
        line = layout.address(access) // config.line_size
        hit = cache.access(line)
        baseline_hit = baseline.access(line)
        accesses += 1
        if hit:
            hits += 1
        elif line not in seen:
            compulsory += 1
        elif not baseline_hit:
            capacity += 1
        else:
            conflict += 1
        seen.add(line)
        if access.kind is AccessKind.WRITE and access.worker is not None:
            output_writers.setdefault(line, set()).add(access.worker)
    return CacheStats(
        accesses=accesses,
        hits=hits,
        misses=accesses - hits,
        compulsory=compulsory,
        capacity_misses=capacity,
        conflict_misses=conflict,
        shared_output_lines=sum(1 for w in output_writers.values() if len(w) > 1),
    )


# ---- trace generation -------------------------------------------------------


@dataclass(frozen=True)
class Sequential:
    pass


@dataclass(frozen=True)
class Parallel:
    p: int


@dataclass(frozen=True)
class Segmented:
    p: int
    cache_elems: int
    window_len: int | None = None


MergeVariant = Sequential | Parallel | Segmented


class _Recorder:
    """
    One worker's accesses in one phase, cut into steps. A search step is one
    probe (an A read then a B read); a merge step ends with its store.
    """

    def __init__(self, worker: int | None, probe: bool) -> None:
        self.worker = worker
        self.probe = probe
        self.steps: list[list[MemAccess]] = []
        self._current: list[MemAccess] = []

    def log(self, array: ArrayId, index: int, kind: AccessKind) -> None:
        self._current.append(MemAccess(array, index, kind, self.worker))
        closes = kind is AccessKind.WRITE or (self.probe and array is ArrayId.B)
        if closes:
            self.flush()

    def flush(self) -> None:
        if self._current:
            self.steps.append(self._current)
            self._current = []


class _Tap:
    recorder: _Recorder | None = None


class _TracedArray:
    def __init__(self, data: Sequence[Any], array: ArrayId, tap: _Tap) -> None:
        self._data = data
        self._array = array
        self._tap = tap

    def __len__(self) -> int:
        return len(self._data)

    def __getitem__(self, i: int) -> Any:
        if self._tap.recorder is not None:
            self._tap.recorder.log(self._array, i, AccessKind.READ)
        return self._data[i]


class _TracedOutput:
    def __init__(self, n: int, tap: _Tap) -> None:
        self._n = n
        self._tap = tap

    def __len__(self) -> int:
        return self._n

    def __setitem__(self, i: int, value: Any) -> None:
        if self._tap.recorder is not None:
            self._tap.recorder.log(ArrayId.S, i, AccessKind.WRITE)


class _Tracer:
    def __init__(self, inp: MergeInput) -> None:
        self.tap = _Tap()
        self.a = _TracedArray(inp.a, ArrayId.A, self.tap)
        self.b = _TracedArray(inp.b, ArrayId.B, self.tap)
        self.inp = MergeInput(self.a, self.b)
        self.out = _TracedOutput(inp.n, self.tap)

    def search(
        self, worker: int, d: int, origin: PartitionPoint = ORIGIN, extent: int | None = None
    ) -> tuple[PartitionPoint, _Recorder]:
        recorder = self._use(_Recorder(worker, probe=True))
        point = diagonal_search(self.inp, d, origin=origin, extent=extent)
        return point, self._done(recorder)

    def merge(self, worker: int, start: PartitionPoint, length: int) -> tuple[PartitionPoint, _Recorder]:
        recorder = self._use(_Recorder(worker, probe=False))
        end = merge_into(self.a, self.b, start, length, self.out, start.d)
        return end, self._done(recorder)

    def _use(self, recorder: _Recorder) -> _Recorder:
        self.tap.recorder = recorder
        return recorder

    def _done(self, recorder: _Recorder) -> _Recorder:
        recorder.flush()
        self.tap.recorder = None
        return recorder


def _round_robin(recorders: Sequence[_Recorder]) -> list[MemAccess]:
    """Canonical interleaving: one step of each worker in turn"""
    trace: list[MemAccess] = []
    depth = max((len(r.steps) for r in recorders), default=0)
    for step in range(depth):
        for recorder in recorders:
            if step < len(recorder.steps):
                trace.extend(recorder.steps[step])
    return trace


def _line_heads(start: int, stop: int, line_size: int) -> list[int]:
    """One element index per line of [start, stop), lines aligned to the array base"""
    if start >= stop:
        return []
    return [start, *range((start // line_size + 1) * line_size, stop, line_size)]


def _touches(
    previous: PartitionPoint,
    current: PartitionPoint,
    window_len: int,
    inp: MergeInput,
    line_size: int,
) -> list[MemAccess]:
    """
    Reads that refresh every line holding an input element the previous
    window had in reach but did not consume.
    """
    accesses: list[MemAccess] = []
    for array, prev_off, cur_off, size in (
        (ArrayId.A, previous.a_off, current.a_off, len(inp.a)),
        (ArrayId.B, previous.b_off, current.b_off, len(inp.b)),
    ):
        for index in _line_heads(cur_off, min(prev_off + window_len, size), line_size):
            accesses.append(MemAccess(array, index, AccessKind.READ))
    return accesses


def trace_merge(
    inp: MergeInput,
    variant: MergeVariant,
    *,
    touch: bool = False,
    line_size: int = 1,
) -> list[MemAccess]:
    """
    The loads and stores a merge variant performs, in canonical order.

    Each merge step loads the next candidate of the array that just supplied
    an element (the other candidate stays in a register) and stores one
    output. Parallel variants put all diagonal-search probes first, then the
    merge steps, one step per worker in turn. The segmented variant does this
    window by window; with ``touch`` each window after the first starts by
    reading one element per line of unconsumed input (lines assumed aligned
    to array bases).
    """
    tracer = _Tracer(inp)
    n = inp.n
    if isinstance(variant, Sequential):
        _, recorder = tracer.merge(0, ORIGIN, n)
        return _round_robin([recorder])

    if isinstance(variant, Parallel):
        if variant.p < 1:
            raise InvalidArgumentError(f"worker count must be >= 1, got {variant.p}")
        spans = [worker_span(i, variant.p, n) for i in range(variant.p)]
        searches = [tracer.search(i, lo) for i, (lo, _) in enumerate(spans)]
        merges = [
            tracer.merge(i, start, hi - lo)[1]
            for i, ((start, _), (lo, hi)) in enumerate(zip(searches, spans))
        ]
        return _round_robin([rec for _, rec in searches]) + _round_robin(merges)

    window_len, p_eff, iterations = window_shape(inp, variant.p, variant.cache_elems, variant.window_len)
    trace: list[MemAccess] = []
    origin = previous = ORIGIN
    for k in range(iterations):
        if touch and k > 0:
            trace.extend(_touches(previous, origin, window_len, inp, line_size))
        spans = [worker_span(i, p_eff, min(window_len, n - origin.d)) for i in range(p_eff)]
        active = [(i, lo, hi) for i, (lo, hi) in enumerate(spans) if hi > lo]
        searches = [tracer.search(i, lo, origin, window_len) for i, lo, _ in active]
        merges = [
            tracer.merge(i, start, hi - lo)
            for (i, lo, hi), (start, _) in zip(active, searches)
        ]
        trace.extend(_round_robin([rec for _, rec in searches]))
        trace.extend(_round_robin([rec for _, rec in merges]))
        previous, origin = origin, merges[-1][0]
    return trace


def safe_window_len(config: CacheConfig) -> int:
    """
    Longest window for which A, B and S each occupy at most floor(k/3) lines
    of any set, whatever their base addresses. Equals C/3 for k a multiple of
    three and line size 1; shorter otherwise.
    """
    per_array = config.associativity // 3
    if per_array == 0:
        raise InvalidArgumentError(
            f"{config.associativity}-way cache has no conflict-free window"
        )
    lines = per_array * config.sets
    return (lines - 1) * config.line_size + 1


def verify_conflict_freedom(
    inp: MergeInput,
    p: int,
    cache_elems: int,
    *,
    associativity: int = 3,
    line_size: int = 1,
    policy: Policy = Policy.LRU,
    layout: Layout | None = None,
    touch: bool = True,
) -> ConflictReport:
    """
    Replay the segmented merge against a k-way cache of C elements and check
    that no conflict miss occurs. The window is C/3 (or the safe window when k
    is not a multiple of three); caches below 3-way keep C/3 so they can serve
    as a control. ``touch`` enables the LRU refresh of unconsumed input lines
    between windows.

    Only LRU is accepted: a FIFO set evicts by insertion order, so the refresh
    reads cannot keep live lines resident and the guarantee does not hold.
    """
    if Policy(policy) is not Policy.LRU:
        raise InvalidArgumentError(f"conflict-freedom holds for LRU caches only, got {Policy(policy).value}")
    config = CacheConfig(
        capacity=cache_elems, associativity=associativity, line_size=line_size, policy=policy
    )
    window_len = (
        min(safe_window_len(config), cache_elems // 3)
        if associativity >= 3
        else cache_elems // 3
    )
    trace = trace_merge(inp, Segmented(p, cache_elems, window_len), touch=touch, line_size=line_size)
    stats = simulate(trace, layout or Layout.contiguous(len(inp.a), len(inp.b)), config)
    logger.debug(f"conflict check C={cache_elems} k={associativity} L={window_len}: {stats}")
    return ConflictReport(
        conflict_misses=stats.conflict_misses,
        passed=stats.conflict_misses == 0,
        window_len=window_len,
        stats=stats,
    )


def lru_touch_overhead(
    inp: MergeInput, cache_elems: int, line_size: int = 1, *, touch: bool = True, p: int = 1
) -> float:
    """
    Accesses of the segmented trace with LRU touches over accesses without them.

    Near 1.5 at line size 1. Wide lines shrink it only once the window L = C/3
    spans many lines: at line size 16 it is about 1.09 for C = 48 and about
    1.03 for C = 3072.
    """
    if not touch:
        return 1.0
    variant = Segmented(p, cache_elems)
    plain = len(trace_merge(inp, variant, line_size=line_size))
    if plain == 0:
        return 1.0
    touched = len(trace_merge(inp, variant, touch=True, line_size=line_size))
    return touched / plain


def dump_trace(trace: Iterable[MemAccess], stream: TextIO) -> None:
    """One access per line: ``<A|B|S> <index> <r|w>``"""
    for access in trace:
        stream.write(f"{access.array.value} {access.index} {access.kind.value}\n")


def load_trace(stream: TextIO) -> list[MemAccess]:
    trace: list[MemAccess] = []
    for lineno, raw in enumerate(stream, start=1):
        text = raw.strip()
        if not text:
            continue
        try:
            array, index, kind = text.split()
            trace.append(MemAccess(ArrayId(array), int(index), AccessKind(kind)))
        except ValueError as e:
            raise InputValidationError(f"trace line {lineno}: {text!r}: {e}") from e
    return trace
